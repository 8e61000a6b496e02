#include "emoflow/encoders.hpp"

#include <cmath>

#include "emoflow/errors.hpp"
#include "emoflow/linalg.hpp"

namespace emoflow::enc {

Encoder make_frozen_orthonormal_encoder(std::size_t feature_dim, std::size_t embed_dim, RngStream& rng) {
    Encoder e;
    e.projection = ag::Value::leaf(random_orthonormal_cols(feature_dim, embed_dim, rng), false);
    e.frozen = true;
    return e;
}

Encoder make_trainable_encoder(std::size_t feature_dim, std::size_t embed_dim, RngStream& rng,
                               double init_scale) {
    Tensor p = Tensor::zeros({feature_dim, embed_dim});
    for (auto& v : p.data) v = init_scale * rng.normal();
    Encoder e;
    e.projection = ag::Value::leaf(std::move(p), true);
    e.frozen = false;
    return e;
}

Tensor encode_features(const Encoder& enc, const Tensor& features) {
    const Tensor& proj = enc.projection.value();
    if (features.rank() != 2 || features.cols() != proj.rows())
        throw ShapeError("encode: features " + features.shape_str() + " vs projection " + proj.shape_str());
    const Tensor pooled = mean_over_rows(features); // 1 x F
    const std::size_t F = proj.rows(), D = proj.cols();
    Tensor out = Tensor::zeros({D});
    for (std::size_t f = 0; f < F; ++f) {
        const double p = pooled.data[f];
        for (std::size_t d = 0; d < D; ++d) out.data[d] += p * proj.at(f, d);
    }
    return out;
}

Tensor encode(const Encoder& enc, const synth::SpeechSample& sample) {
    return encode_features(enc, sample.features);
}

ag::Value encode_pooled(const Encoder& enc, const ag::Value& pooled_features) {
    return ag::matmul(pooled_features, enc.projection);
}

Tensor emotion_direction(const Tensor& u_e, const Tensor& u_n) {
    require_same_shape(u_e, u_n, "emotion_direction");
    Tensor diff = u_e;
    for (std::size_t i = 0; i < diff.data.size(); ++i) diff.data[i] -= u_n.data[i];
    const double norm = l2_norm(diff);
    if (norm <= 1e-9)
        throw DegeneratePairError("emotion_direction: ||u_e - u_n|| = " + std::to_string(norm) +
                                  " <= 1e-9 (identical encodings)");
    for (auto& v : diff.data) v /= norm;
    return diff;
}

AggregateResult aggregate_emotion(const std::vector<std::pair<Tensor, Tensor>>& pairs, int n,
                                  int emotion_id) {
    if (n < 1) throw ContractError("aggregate_emotion: N must be >= 1");
    AggregateResult res;
    Tensor sum;
    for (std::size_t i = 0; i < pairs.size() && res.used_pair_positions.size() < static_cast<std::size_t>(n);
         ++i) {
        Tensor v;
        try {
            v = emotion_direction(pairs[i].first, pairs[i].second);
        } catch (const DegeneratePairError&) {
            ++res.degenerate_skipped;
            continue;
        }
        if (sum.data.empty())
            sum = v;
        else
            for (std::size_t j = 0; j < sum.data.size(); ++j) sum.data[j] += v.data[j];
        res.used_pair_positions.push_back(i);
    }
    const int usable = static_cast<int>(res.used_pair_positions.size());
    if (usable < n)
        throw InsufficientPairsError("aggregate_emotion: need " + std::to_string(n) + " pairs, only " +
                                         std::to_string(usable) + " usable",
                                     usable);
    for (auto& v : sum.data) v /= static_cast<double>(n);
    res.embedding.vector = std::move(sum);
    res.embedding.num_pairs = n;
    res.embedding.emotion_id = emotion_id;
    return res;
}

Tensor direction_image(const Encoder& enc, const Tensor& feature_direction) {
    const Tensor& proj = enc.projection.value();
    const std::size_t F = proj.rows(), D = proj.cols();
    if (feature_direction.numel() != F)
        throw ShapeError("direction_image: direction " + feature_direction.shape_str() + " vs projection " +
                         proj.shape_str());
    Tensor out = Tensor::zeros({D});
    for (std::size_t f = 0; f < F; ++f)
        for (std::size_t d = 0; d < D; ++d) out.data[d] += feature_direction.data[f] * proj.at(f, d);
    return out;
}

ExtractionResult extract_emotion(const std::vector<synth::SpeechSample>& samples, const Encoder& enc,
                                 int emotion_id, int n, const synth::GroundTruth* ground_truth) {
    ExtractionResult res;
    std::vector<std::pair<Tensor, Tensor>> encoded;
    std::vector<int> pair_ids;
    for (const auto& [ei, ni] : synth::pair_table(samples)) {
        if (samples[ei].emotion_id != emotion_id) continue;
        encoded.emplace_back(encode(enc, samples[ei]), encode(enc, samples[ni]));
        pair_ids.push_back(samples[ei].pair_id);
    }
    auto agg = aggregate_emotion(encoded, n, emotion_id);
    res.embedding = std::move(agg.embedding);
    res.degenerate_skipped = agg.degenerate_skipped;
    for (auto pos : agg.used_pair_positions) res.pair_ids.push_back(pair_ids[pos]);
    if (ground_truth) {
        const Tensor dir = row(ground_truth->emotion_directions, static_cast<std::size_t>(emotion_id));
        res.cosine_vs_oracle = cosine(res.embedding.vector, direction_image(enc, dir));
    }
    return res;
}

} // namespace emoflow::enc
