#include "emoflow/flowmatch.hpp"

#include <cmath>

#include "emoflow/errors.hpp"

namespace emoflow::fm {

using ag::Value;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, double stddev, RngStream& rng) {
    Tensor t = Tensor::zeros({r, c});
    for (auto& v : t.data) v = stddev * rng.normal();
    return t;
}

} // namespace

VectorFieldNet make_vector_field(std::size_t target_dim, std::size_t cond_dim, std::size_t hidden,
                                 RngStream& rng) {
    VectorFieldNet net;
    net.target_dim = target_dim;
    net.cond_dim = cond_dim;
    net.hidden = hidden;
    const std::size_t in_dim = target_dim + 1 + cond_dim;
    net.W1 = Value::leaf(random_matrix(in_dim, hidden, 1.0 / std::sqrt(static_cast<double>(in_dim)), rng), true);
    net.b1 = Value::leaf(Tensor::zeros({1, hidden}), true);
    net.W2 = Value::leaf(random_matrix(hidden, hidden, 1.0 / std::sqrt(static_cast<double>(hidden)), rng), true);
    net.b2 = Value::leaf(Tensor::zeros({1, hidden}), true);
    net.W3 = Value::leaf(random_matrix(hidden, target_dim, 1.0 / std::sqrt(static_cast<double>(hidden)), rng),
                         true);
    net.b3 = Value::leaf(Tensor::zeros({1, target_dim}), true);
    return net;
}

Value VectorFieldNet::forward(const Value& x_t, const Value& t_col, const Value& cond) const {
    const std::size_t B = x_t.value().rows();
    if (x_t.value().cols() != target_dim)
        throw ShapeError("vector field: x_t " + x_t.value().shape_str() + " vs target dim " +
                         std::to_string(target_dim));
    if (t_col.value().rows() != B || t_col.value().cols() != 1)
        throw ShapeError("vector field: t column " + t_col.value().shape_str());
    if (cond.value().rows() != B || cond.value().cols() != cond_dim)
        throw ShapeError("vector field: cond " + cond.value().shape_str() + " vs cond dim " +
                         std::to_string(cond_dim));
    std::vector<Value> parts = {x_t, t_col};
    if (cond_dim > 0) parts.push_back(cond);
    Value in = ag::concat_cols(parts);
    Value z1 = ag::tanh(ag::add_row_broadcast(ag::matmul(in, W1), b1));
    Value z2 = ag::tanh(ag::add_row_broadcast(ag::matmul(z1, W2), b2));
    return ag::add_row_broadcast(ag::matmul(z2, W3), b3);
}

Tensor VectorFieldNet::forward_plain(const Tensor& x, double t, const Tensor& cond) const {
    if (x.numel() != target_dim)
        throw ShapeError("vector field: state " + x.shape_str() + " vs target dim " +
                         std::to_string(target_dim));
    if (cond.numel() != cond_dim)
        throw ShapeError("vector field: cond " + cond.shape_str() + " vs cond dim " +
                         std::to_string(cond_dim));
    const std::size_t in_dim = target_dim + 1 + cond_dim;
    std::vector<double> in(in_dim);
    for (std::size_t i = 0; i < target_dim; ++i) in[i] = x.data[i];
    in[target_dim] = t;
    for (std::size_t i = 0; i < cond_dim; ++i) in[target_dim + 1 + i] = cond.data[i];

    const Tensor& w1 = W1.value();
    const Tensor& w2 = W2.value();
    const Tensor& w3 = W3.value();
    std::vector<double> z1(hidden), z2(hidden);
    for (std::size_t h = 0; h < hidden; ++h) {
        double s = b1.value().data[h];
        for (std::size_t i = 0; i < in_dim; ++i) s += in[i] * w1.at(i, h);
        z1[h] = std::tanh(s);
    }
    for (std::size_t h = 0; h < hidden; ++h) {
        double s = b2.value().data[h];
        for (std::size_t i = 0; i < hidden; ++i) s += z1[i] * w2.at(i, h);
        z2[h] = std::tanh(s);
    }
    Tensor out = Tensor::zeros({target_dim});
    for (std::size_t j = 0; j < target_dim; ++j) {
        double s = b3.value().data[j];
        for (std::size_t i = 0; i < hidden; ++i) s += z2[i] * w3.at(i, j);
        out.data[j] = s;
    }
    return out;
}

namespace {

void check_flow_batch(const FlowBatch& batch) {
    require_same_shape(batch.x0, batch.x1, "flow batch");
    if (batch.x0.rank() != 2) throw ShapeError("flow batch: expected B x F, got " + batch.x0.shape_str());
    if (batch.t.size() != batch.x0.rows())
        throw ShapeError("flow batch: t count " + std::to_string(batch.t.size()) + " vs batch " +
                         std::to_string(batch.x0.rows()));
    for (double t : batch.t)
        if (!(t >= 0.0 && t <= 1.0)) throw ContractError("flow batch: t must lie in [0,1]");
}

} // namespace

Value cfm_residual_loss(const Value& predicted, const FlowBatch& batch) {
    check_flow_batch(batch);
    const std::size_t B = batch.x0.rows(), F = batch.x0.cols();
    if (predicted.value().rows() != B || predicted.value().cols() != F)
        throw ShapeError("cfm loss: predicted " + predicted.value().shape_str() + " vs batch " +
                         batch.x0.shape_str());
    Tensor target = Tensor::zeros({B, F}); // velocity of the linear path
    for (std::size_t i = 0; i < B * F; ++i) target.data[i] = batch.x1.data[i] - batch.x0.data[i];
    Value err = ag::sub(predicted, Value::constant(std::move(target)));
    return ag::scale(ag::sum_all(ag::mul(err, err)), 1.0 / static_cast<double>(B));
}

Value cfm_loss(const VectorFieldNet& net, const FlowBatch& batch, const Value& cond) {
    check_flow_batch(batch);
    const std::size_t B = batch.x0.rows(), F = batch.x0.cols();
    Tensor x_t = Tensor::zeros({B, F});
    Tensor t_col = Tensor::zeros({B, 1});
    for (std::size_t i = 0; i < B; ++i) {
        const double t = batch.t[i];
        t_col.data[i] = t;
        for (std::size_t j = 0; j < F; ++j)
            x_t.at(i, j) = (1.0 - t) * batch.x0.at(i, j) + t * batch.x1.at(i, j);
    }
    Value pred = net.forward(Value::constant(std::move(x_t)), Value::constant(std::move(t_col)), cond);
    return cfm_residual_loss(pred, batch);
}

Tensor euler_sample(const VectorFieldNet& net, const Tensor& x0, const Tensor& cond, int steps) {
    if (steps < 1) throw ContractError("euler_sample: steps must be >= 1");
    Tensor x = x0;
    const double h = 1.0 / static_cast<double>(steps);
    for (int k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(steps);
        const Tensor v = net.forward_plain(x, t, cond);
        for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += h * v.data[i];
        if (!x.all_finite())
            throw DivergenceError("euler_sample: non-finite state at step " + std::to_string(k + 1), k + 1);
    }
    return x;
}

} // namespace emoflow::fm
