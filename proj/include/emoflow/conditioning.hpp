#pragma once

#include <cstdint>
#include <vector>

#include "emoflow/autodiff.hpp"
#include "emoflow/rng.hpp"

namespace emoflow::attn {

struct TokenSequence {
    std::vector<int> token_ids;
    std::vector<std::uint8_t> pad_mask; // 1 = real token, 0 = padding

    std::size_t length() const { return token_ids.size(); }
    void validate() const; // L >= 1, mask length matches, >= 1 real token
};

// One self-attention block over embedded tokens: a deterministic,
// differentiable stand-in for the text-to-token language model.
struct TokenEncoder {
    ag::Value embedding;  // vocab x D
    ag::Value positional; // max_len x D
    ag::Value W_q, W_k, W_v;

    std::size_t vocab() const { return embedding.value().rows(); }
    std::size_t max_len() const { return positional.value().rows(); }
    std::size_t dim() const { return embedding.value().cols(); }
};

TokenEncoder make_token_encoder(std::size_t vocab, std::size_t max_len, std::size_t dim, RngStream& rng);

// h_LM = X + softmax(Q K^T / sqrt(D), pad-masked keys) V with X the embedded
// and positioned tokens. Out-of-range ids raise VocabError.
ag::Value encode_tokens(const TokenEncoder& enc, const TokenSequence& seq);

// Emotion-query cross-attention: Q from the emotion embedding, K/V from the
// token representations.
struct CrossAttention {
    ag::Value W_q, W_k, W_v; // D x D
};

CrossAttention make_cross_attention(std::size_t dim, RngStream& rng);

struct CrossAttendResult {
    ag::Value output;  // L x D, residual with the input sequence
    ag::Value weights; // 1 x L (query_per_token=false) or L x L
};

// Single-vector query by default: attention weights are 1 x L and the
// attended context is added residually to every token row, keeping the output
// aligned with the input sequence. With query_per_token the query is tiled to
// every position. All-pad sequences raise MaskError.
CrossAttendResult cross_attend(const CrossAttention& ca, const ag::Value& emotion /* 1 x D */,
                               const ag::Value& h_lm /* L x D */,
                               const std::vector<std::uint8_t>& pad_mask, bool query_per_token = false);

// mean over real (unmasked) rows -> 1 x D
ag::Value masked_mean_rows(const ag::Value& x, const std::vector<std::uint8_t>& pad_mask);

} // namespace emoflow::attn
