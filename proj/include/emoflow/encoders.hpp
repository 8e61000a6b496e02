#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "emoflow/autodiff.hpp"
#include "emoflow/rng.hpp"
#include "emoflow/synthdata.hpp"
#include "emoflow/tensor.hpp"

namespace emoflow::enc {

// Mean-pool over frames followed by a learned linear projection. Frozen
// encoders (random orthonormal columns) are used for embedding extraction;
// trainable ones by the end-to-end harness.
struct Encoder {
    ag::Value projection; // F x D leaf
    bool frozen = true;

    std::size_t feature_dim() const { return projection.value().rows(); }
    std::size_t embed_dim() const { return projection.value().cols(); }
};

Encoder make_frozen_orthonormal_encoder(std::size_t feature_dim, std::size_t embed_dim, RngStream& rng);
Encoder make_trainable_encoder(std::size_t feature_dim, std::size_t embed_dim, RngStream& rng, double init_scale);

// mean over frames of features, times projection -> [D]
Tensor encode(const Encoder& enc, const synth::SpeechSample& sample);
Tensor encode_features(const Encoder& enc, const Tensor& features);

// graph path for training: pooled feature rows (B x F, constant) -> B x D
ag::Value encode_pooled(const Encoder& enc, const ag::Value& pooled_features);

// Aggregated emotion direction: e = (1/N) sum of per-pair unit difference
// vectors. Not re-normalized, so the norm is <= 1.
struct EmotionEmbedding {
    Tensor vector; // [D]
    int num_pairs = 0;
    int emotion_id = -1;
};

// v = (u_e - u_n) / ||u_e - u_n||; DegeneratePairError when the difference
// norm is <= 1e-9
Tensor emotion_direction(const Tensor& u_e, const Tensor& u_n);

struct AggregateResult {
    EmotionEmbedding embedding;
    int degenerate_skipped = 0;
    std::vector<std::size_t> used_pair_positions; // indices into the input list
};

// Mean of the first n non-degenerate direction vectors in input order.
// InsufficientPairsError (reporting the usable count) when fewer than n
// survive the degeneracy check.
AggregateResult aggregate_emotion(const std::vector<std::pair<Tensor, Tensor>>& pairs, int n,
                                  int emotion_id = -1);

// image of a feature-space direction under the encoder, for recovery oracles
Tensor direction_image(const Encoder& enc, const Tensor& feature_direction);

struct ExtractionResult {
    EmotionEmbedding embedding;
    std::vector<int> pair_ids;
    int degenerate_skipped = 0;
    std::optional<double> cosine_vs_oracle;
};

// Runs the pair-difference recipe over a corpus for one emotion id, using the
// first n usable pairs in corpus order. When ground truth is available the
// result carries the cosine against the planted direction's encoder image.
ExtractionResult extract_emotion(const std::vector<synth::SpeechSample>& samples, const Encoder& enc,
                                 int emotion_id, int n, const synth::GroundTruth* ground_truth);

} // namespace emoflow::enc
