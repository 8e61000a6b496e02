#include "emoflow/disentangle.hpp"

#include "emoflow/errors.hpp"

namespace emoflow::dis {

using ag::Value;

namespace {

constexpr double kNormEps = 1e-9;

// sqrt(sum_j x_ij^2 + eps^2) as a B x 1 column
Value smoothed_row_norms(const Value& x) {
    const std::size_t B = x.value().rows();
    Value sq = ag::row_sums(ag::mul(x, x));
    return ag::reshape(ag::sqrt(ag::add_scalar(sq, kNormEps * kNormEps)), {B, 1});
}

void check_batch(const EmbeddingBatch& batch) {
    const Tensor& s = batch.S.value();
    const Tensor& e = batch.E.value();
    if (s.rank() != 2 || e.rank() != 2 || !s.same_shape(e))
        throw ShapeError("embedding batch: S " + s.shape_str() + " vs E " + e.shape_str());
    if (s.rows() == 0) throw BatchError("embedding batch: empty batch");
}

} // namespace

Value orthogonality_loss(const EmbeddingBatch& batch, bool pairwise_mode) {
    check_batch(batch);
    const std::size_t B = batch.S.value().rows();

    if (pairwise_mode) {
        if (B < 2) throw BatchError("orthogonality_loss: pairwise mode needs batch size >= 2");
        Value dots = ag::matmul(batch.E, ag::transpose(batch.S));
        Tensor off_diag = Tensor::full({B, B}, 1.0);
        for (std::size_t i = 0; i < B; ++i) off_diag.at(i, i) = 0.0;
        Value masked = ag::mul(ag::abs(dots), Value::constant(off_diag));
        return ag::scale(ag::sum_all(masked), 1.0 / static_cast<double>(B * (B - 1)));
    }

    Value n_e = smoothed_row_norms(batch.E); // B x 1
    Value n_s = smoothed_row_norms(batch.S);
    Value cross = ag::matmul(batch.E, ag::transpose(batch.S));       // B x B
    Value denom = ag::matmul(n_e, ag::transpose(n_s));               // outer product
    Value d_hat = ag::div(cross, denom);                             // cosine matrix
    Value frob_sq = ag::sum_all(ag::mul(d_hat, d_hat));

    Value diag = ag::row_sums(ag::mul(d_hat, Value::constant(Tensor::identity(B))));
    Value mean_cos = ag::mean_all(diag);
    return ag::add(frob_sq, ag::mul(mean_cos, mean_cos));
}

Value contrastive_loss(const EmbeddingBatch& batch, const ProjectionHeads& heads, bool symmetric) {
    check_batch(batch);
    const std::size_t B = batch.S.value().rows();
    if (B < 2) throw BatchError("contrastive_loss: batch size must be >= 2, got " + std::to_string(B));

    Value h = ag::add(ag::matmul(batch.S, heads.P_s), ag::matmul(batch.E, heads.P_e));
    Value e_proj = ag::matmul(batch.E, heads.P_e);
    Value dots = ag::matmul(h, ag::transpose(e_proj)); // (i,j) = <h_i, e'_j>

    Tensor mask = Tensor::zeros({B, B});
    std::size_t count = 0;
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < B; ++j) {
            const bool keep = symmetric ? (i != j) : (i < j);
            if (keep) {
                mask.at(i, j) = 1.0;
                ++count;
            }
        }
    Value masked = ag::mul(ag::abs(dots), Value::constant(mask));
    return ag::scale(ag::sum_all(masked), 1.0 / static_cast<double>(count));
}

} // namespace emoflow::dis
