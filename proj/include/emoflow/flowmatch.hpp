#pragma once

#include <vector>

#include "emoflow/autodiff.hpp"
#include "emoflow/rng.hpp"

namespace emoflow::fm {

// MLP vector field for conditional flow matching: two tanh hidden layers of
// width H over concat(x_t, t, cond), producing a velocity in target space.
struct VectorFieldNet {
    ag::Value W1, b1, W2, b2, W3, b3;
    std::size_t target_dim = 0;
    std::size_t cond_dim = 0;
    std::size_t hidden = 0;

    // batch graph forward; x_t is B x F, t_col is B x 1, cond is B x C
    ag::Value forward(const ag::Value& x_t, const ag::Value& t_col, const ag::Value& cond) const;

    // single-sample forward on plain tensors (used by the sampler)
    Tensor forward_plain(const Tensor& x, double t, const Tensor& cond) const;

    std::vector<ag::Value> parameters() const { return {W1, b1, W2, b2, W3, b3}; }
};

VectorFieldNet make_vector_field(std::size_t target_dim, std::size_t cond_dim, std::size_t hidden,
                                 RngStream& rng);

// One training batch for the flow-matching objective. x0 is standard normal
// noise, x1 the target frame, t uniform in [0,1].
struct FlowBatch {
    Tensor x0; // B x F
    Tensor x1; // B x F
    std::vector<double> t;
};

// x_t = (1-t) x0 + t x1; loss = (1/B) sum_b || pred_b - (x1_b - x0_b) ||^2
// for externally supplied predicted velocities (B x F).
ag::Value cfm_residual_loss(const ag::Value& predicted, const FlowBatch& batch);

// standard conditional flow-matching regression loss through the net
ag::Value cfm_loss(const VectorFieldNet& net, const FlowBatch& batch, const ag::Value& cond);

// Euler integration of the learned field from x0 over `steps` uniform steps:
// x_{k+1} = x_k + (1/steps) net(x_k, k/steps, cond). Raises DivergenceError
// with the step index if the state goes non-finite.
Tensor euler_sample(const VectorFieldNet& net, const Tensor& x0, const Tensor& cond, int steps);

} // namespace emoflow::fm
