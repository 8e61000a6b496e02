#include "emoflow/conditioning.hpp"

#include <cmath>

#include "emoflow/errors.hpp"

namespace emoflow::attn {

using ag::Value;

void TokenSequence::validate() const {
    if (token_ids.empty()) throw ContractError("token sequence: length must be >= 1");
    if (pad_mask.size() != token_ids.size())
        throw ShapeError("token sequence: mask length " + std::to_string(pad_mask.size()) +
                         " vs tokens " + std::to_string(token_ids.size()));
    bool any_real = false;
    for (auto m : pad_mask) any_real = any_real || m != 0;
    if (!any_real) throw MaskError("token sequence: all positions are padding");
}

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, double stddev, RngStream& rng) {
    Tensor t = Tensor::zeros({r, c});
    for (auto& v : t.data) v = stddev * rng.normal();
    return t;
}

Tensor key_mask(const std::vector<std::uint8_t>& pad_mask, std::size_t rows) {
    Tensor m = Tensor::zeros({rows, pad_mask.size()});
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < pad_mask.size(); ++j) m.at(i, j) = pad_mask[j] ? 1.0 : 0.0;
    return m;
}

} // namespace

TokenEncoder make_token_encoder(std::size_t vocab, std::size_t max_len, std::size_t dim, RngStream& rng) {
    if (vocab < 2) throw ConfigError("token encoder: vocab must be >= 2");
    TokenEncoder enc;
    enc.embedding = Value::leaf(random_matrix(vocab, dim, 0.1, rng), true);
    enc.positional = Value::leaf(random_matrix(max_len, dim, 0.1, rng), true);
    const double w = 1.0 / std::sqrt(static_cast<double>(dim));
    enc.W_q = Value::leaf(random_matrix(dim, dim, w, rng), true);
    enc.W_k = Value::leaf(random_matrix(dim, dim, w, rng), true);
    enc.W_v = Value::leaf(random_matrix(dim, dim, w, rng), true);
    return enc;
}

Value encode_tokens(const TokenEncoder& enc, const TokenSequence& seq) {
    seq.validate();
    const std::size_t L = seq.length();
    if (L > enc.max_len())
        throw ShapeError("encode_tokens: sequence length " + std::to_string(L) + " exceeds max " +
                         std::to_string(enc.max_len()));
    Value x = ag::add(ag::embed_rows(enc.embedding, seq.token_ids), ag::slice_rows(enc.positional, 0, L));
    Value q = ag::matmul(x, enc.W_q);
    Value k = ag::matmul(x, enc.W_k);
    Value v = ag::matmul(x, enc.W_v);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(enc.dim()));
    Value logits = ag::scale(ag::matmul(q, ag::transpose(k)), inv_sqrt_d);
    const Tensor mask = key_mask(seq.pad_mask, L);
    Value weights = ag::softmax_rows(logits, &mask);
    return ag::add(x, ag::matmul(weights, v));
}

CrossAttention make_cross_attention(std::size_t dim, RngStream& rng) {
    const double w = 1.0 / std::sqrt(static_cast<double>(dim));
    CrossAttention ca;
    ca.W_q = Value::leaf(random_matrix(dim, dim, w, rng), true);
    ca.W_k = Value::leaf(random_matrix(dim, dim, w, rng), true);
    ca.W_v = Value::leaf(random_matrix(dim, dim, w, rng), true);
    return ca;
}

CrossAttendResult cross_attend(const CrossAttention& ca, const Value& emotion, const Value& h_lm,
                               const std::vector<std::uint8_t>& pad_mask, bool query_per_token) {
    const Tensor& ev = emotion.value();
    const Tensor& hv = h_lm.value();
    if (ev.rank() != 2 || ev.rows() != 1)
        throw ShapeError("cross_attend: emotion query must be 1 x D, got " + ev.shape_str());
    if (hv.rank() != 2 || hv.cols() != ev.cols())
        throw ShapeError("cross_attend: h_LM " + hv.shape_str() + " vs emotion " + ev.shape_str());
    const std::size_t L = hv.rows();
    if (pad_mask.size() != L)
        throw ShapeError("cross_attend: pad mask length " + std::to_string(pad_mask.size()) + " vs L " +
                         std::to_string(L));
    const std::size_t D = ev.cols();
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(D));

    Value k = ag::matmul(h_lm, ca.W_k);
    Value v = ag::matmul(h_lm, ca.W_v);

    if (query_per_token) {
        Value q_row = ag::matmul(emotion, ca.W_q); // 1 x D
        Value q = ag::matmul(Value::constant(Tensor::full({L, 1}, 1.0)), q_row);
        Value logits = ag::scale(ag::matmul(q, ag::transpose(k)), inv_sqrt_d);
        const Tensor mask = key_mask(pad_mask, L);
        Value weights = ag::softmax_rows(logits, &mask);
        Value context = ag::matmul(weights, v);
        return {ag::add(h_lm, context), weights};
    }

    Value q = ag::matmul(emotion, ca.W_q); // 1 x D
    Value logits = ag::scale(ag::matmul(q, ag::transpose(k)), inv_sqrt_d);
    const Tensor mask = key_mask(pad_mask, 1);
    Value weights = ag::softmax_rows(logits, &mask); // 1 x L
    Value context = ag::matmul(weights, v);          // 1 x D
    return {ag::add_row_broadcast(h_lm, context), weights};
}

Value masked_mean_rows(const Value& x, const std::vector<std::uint8_t>& pad_mask) {
    const std::size_t L = x.value().rows();
    if (pad_mask.size() != L)
        throw ShapeError("masked_mean_rows: mask length " + std::to_string(pad_mask.size()) + " vs rows " +
                         std::to_string(L));
    std::size_t n_real = 0;
    for (auto m : pad_mask) n_real += m != 0;
    if (n_real == 0) throw MaskError("masked_mean_rows: all rows masked");
    Tensor w = Tensor::zeros({1, L});
    for (std::size_t j = 0; j < L; ++j)
        if (pad_mask[j]) w.data[j] = 1.0 / static_cast<double>(n_real);
    return ag::matmul(Value::constant(w), x);
}

} // namespace emoflow::attn
