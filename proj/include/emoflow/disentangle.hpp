#pragma once

#include <vector>

#include "emoflow/autodiff.hpp"

namespace emoflow::dis {

// Paired speaker/emotion embeddings for one minibatch; row i of S and row i
// of E come from the same sample.
struct EmbeddingBatch {
    ag::Value S; // B x D
    ag::Value E; // B x D
    std::vector<int> speaker_ids;
    std::vector<int> emotion_ids;
};

// learned square projections behind the contrastive combination h = S P_s + E P_e
struct ProjectionHeads {
    ag::Value P_s; // D x D
    ag::Value P_e; // D x D
};

// Cross-orthogonality between speaker and emotion embeddings.
//
// Default mode: the full cosine-similarity matrix D = (E S^T) normalized by
// the outer product of per-row norms; loss = ||D||_F^2 plus the squared mean
// of the index-aligned cosines, with equal weights. Norms are smoothed as
// sqrt(||x||^2 + eps^2), eps = 1e-9, so zero rows at initialization are safe.
//
// Pairwise mode: mean of |<E_i, S_j>| over ordered pairs i != j.
ag::Value orthogonality_loss(const EmbeddingBatch& batch, bool pairwise_mode = false);

// In-batch contrastive penalty: h_i = S_i P_s + E_i P_e, e'_j = E_j P_e,
// loss = sum_{i<j} |<h_i, e'_j>| / (B(B-1)/2). With symmetric=true the sum
// runs over all ordered pairs i != j, normalized by B(B-1).
ag::Value contrastive_loss(const EmbeddingBatch& batch, const ProjectionHeads& heads,
                           bool symmetric = false);

} // namespace emoflow::dis
