#include <doctest.h>

#include <cmath>

#include "emoflow/errors.hpp"
#include "emoflow/flowmatch.hpp"
#include "emoflow/rng.hpp"

using namespace emoflow;
using namespace emoflow::fm;
using ag::Value;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, RngStream& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = scale * rng.normal();
    return t;
}

FlowBatch random_batch(std::size_t b, std::size_t f, RngStream& rng) {
    FlowBatch batch;
    batch.x0 = random_tensor({b, f}, rng);
    batch.x1 = random_tensor({b, f}, rng);
    for (std::size_t i = 0; i < b; ++i) batch.t.push_back(rng.uniform01());
    return batch;
}

// net whose output is a constant vector: zero hidden pathway, bias-only head
VectorFieldNet constant_net(std::size_t f, std::size_t cond_dim, const Tensor& velocity) {
    VectorFieldNet net;
    net.target_dim = f;
    net.cond_dim = cond_dim;
    net.hidden = 3;
    net.W1 = Value::leaf(Tensor::zeros({f + 1 + cond_dim, 3}), false);
    net.b1 = Value::leaf(Tensor::zeros({1, 3}), false);
    net.W2 = Value::leaf(Tensor::zeros({3, 3}), false);
    net.b2 = Value::leaf(Tensor::zeros({1, 3}), false);
    net.W3 = Value::leaf(Tensor::zeros({3, f}), false);
    Tensor b3 = Tensor::zeros({1, f});
    for (std::size_t j = 0; j < f; ++j) b3.data[j] = velocity.data[j];
    net.b3 = Value::leaf(b3, false);
    return net;
}

} // namespace

TEST_CASE("cfm loss is zero for the perfect-velocity oracle") {
    RngStream rng(81);
    FlowBatch batch = random_batch(4, 3, rng);
    Tensor perfect = Tensor::zeros({4, 3});
    for (std::size_t i = 0; i < perfect.data.size(); ++i)
        perfect.data[i] = batch.x1.data[i] - batch.x0.data[i];
    CHECK(cfm_residual_loss(Value::constant(perfect), batch).scalar() == 0.0);
}

TEST_CASE("cfm loss for the zero field equals mean squared displacement") {
    RngStream rng(82);
    FlowBatch batch = random_batch(5, 4, rng);
    VectorFieldNet net = constant_net(4, 0, Tensor::zeros({4}));
    const double got = cfm_loss(net, batch, Value::constant(Tensor::zeros({5, 0}))).scalar();
    double want = 0.0;
    for (std::size_t i = 0; i < batch.x0.data.size(); ++i) {
        const double d = batch.x1.data[i] - batch.x0.data[i];
        want += d * d;
    }
    want /= 5.0;
    CHECK(std::fabs(got - want) <= 1e-12);
}

TEST_CASE("cfm loss matches a loop oracle through a random net") {
    RngStream rng(83);
    const std::size_t B = 4, F = 3, C = 2, H = 6;
    FlowBatch batch = random_batch(B, F, rng);
    Tensor cond = random_tensor({B, C}, rng);
    VectorFieldNet net;
    net.target_dim = F;
    net.cond_dim = C;
    net.hidden = H;
    net.W1 = Value::leaf(random_tensor({F + 1 + C, H}, rng, 0.5), false);
    net.b1 = Value::leaf(random_tensor({1, H}, rng, 0.1), false);
    net.W2 = Value::leaf(random_tensor({H, H}, rng, 0.5), false);
    net.b2 = Value::leaf(random_tensor({1, H}, rng, 0.1), false);
    net.W3 = Value::leaf(random_tensor({H, F}, rng, 0.5), false);
    net.b3 = Value::leaf(random_tensor({1, F}, rng, 0.1), false);

    double want = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        Tensor x_t = Tensor::zeros({F});
        for (std::size_t j = 0; j < F; ++j)
            x_t.data[j] = (1.0 - batch.t[i]) * batch.x0.at(i, j) + batch.t[i] * batch.x1.at(i, j);
        Tensor cond_row = Tensor::zeros({C});
        for (std::size_t j = 0; j < C; ++j) cond_row.data[j] = cond.at(i, j);
        Tensor v = net.forward_plain(x_t, batch.t[i], cond_row);
        for (std::size_t j = 0; j < F; ++j) {
            const double err = v.data[j] - (batch.x1.at(i, j) - batch.x0.at(i, j));
            want += err * err;
        }
    }
    want /= static_cast<double>(B);
    CHECK(std::fabs(cfm_loss(net, batch, Value::constant(cond)).scalar() - want) <= 1e-12);
}

TEST_CASE("cfm loss rejects out-of-range t and shape mismatches") {
    RngStream rng(84);
    FlowBatch batch = random_batch(2, 3, rng);
    batch.t[0] = 1.5;
    VectorFieldNet net = constant_net(3, 0, Tensor::zeros({3}));
    CHECK_THROWS_AS(cfm_loss(net, batch, Value::constant(Tensor::zeros({2, 0}))), ContractError);
    FlowBatch bad = random_batch(2, 4, rng);
    CHECK_THROWS_AS(cfm_loss(net, bad, Value::constant(Tensor::zeros({2, 0}))), ShapeError);
}

TEST_CASE("euler with the zero field returns x0 bit-exactly") {
    RngStream rng(85);
    VectorFieldNet net = constant_net(3, 2, Tensor::zeros({3}));
    Tensor x0 = random_tensor({3}, rng);
    Tensor cond = random_tensor({2}, rng);
    Tensor out = euler_sample(net, x0, cond, 17);
    CHECK(out.data == x0.data);
}

TEST_CASE("euler is exact on constant fields, independent of step count") {
    RngStream rng(86);
    Tensor v = random_tensor({3}, rng);
    VectorFieldNet net = constant_net(3, 0, v);
    Tensor x0 = random_tensor({3}, rng);
    Tensor cond = Tensor::zeros({0});
    for (int steps : {1, 10, 100}) {
        Tensor out = euler_sample(net, x0, cond, steps);
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(std::fabs(out.data[j] - (x0.data[j] + v.data[j])) <= 1e-12);
    }
    CHECK_THROWS_AS(euler_sample(net, x0, cond, 0), ContractError);
}

TEST_CASE("euler reports divergence with the failing step index") {
    // saturated tanh into an overflowing output head
    VectorFieldNet net = constant_net(2, 0, Tensor::zeros({2}));
    Tensor b2 = Tensor::full({1, 3}, 1.0);
    net.b2 = Value::leaf(b2, false);
    net.W3 = Value::leaf(Tensor::full({3, 2}, 1e308), false);
    try {
        euler_sample(net, Tensor::zeros({2}), Tensor::zeros({0}), 5);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.step_index == 1);
    }
}

TEST_CASE("cfm gradients verify through net weights and conditioning") {
    RngStream rng(87);
    const std::size_t B = 3, F = 3, C = 2, H = 5;
    FlowBatch batch = random_batch(B, F, rng);
    std::vector<Tensor> params = {random_tensor({F + 1 + C, H}, rng, 0.5),
                                  random_tensor({1, H}, rng, 0.1),
                                  random_tensor({H, H}, rng, 0.5),
                                  random_tensor({1, H}, rng, 0.1),
                                  random_tensor({H, F}, rng, 0.5),
                                  random_tensor({1, F}, rng, 0.1),
                                  random_tensor({B, C}, rng)};
    auto f = [batch](const std::vector<Value>& vs) {
        VectorFieldNet net;
        net.W1 = vs[0];
        net.b1 = vs[1];
        net.W2 = vs[2];
        net.b2 = vs[3];
        net.W3 = vs[4];
        net.b3 = vs[5];
        net.target_dim = 3;
        net.cond_dim = 2;
        net.hidden = 5;
        return cfm_loss(net, batch, vs[6]);
    };
    CHECK(ag::grad_check(f, params, 1e-5) < 1e-4);
}

TEST_CASE("cfm loss is nonnegative on random predictions") {
    RngStream rng(88);
    for (int it = 0; it < 20; ++it) {
        FlowBatch batch = random_batch(3, 4, rng);
        Tensor pred = random_tensor({3, 4}, rng);
        CHECK(cfm_residual_loss(Value::constant(pred), batch).scalar() >= 0.0);
    }
}

TEST_CASE("trained on a point mass, samples converge to the target") {
    RngStream rng = named_stream(91, "flow_point");
    const std::size_t F = 2, H = 24, B = 32;
    const Tensor target = Tensor::vec({0.8, -1.1});
    VectorFieldNet net = make_vector_field(F, 0, H, rng);

    std::vector<Value> params = net.parameters();
    std::vector<Tensor> m, v;
    for (auto& p : params) {
        m.push_back(Tensor::zeros(p.value().shape));
        v.push_back(Tensor::zeros(p.value().shape));
    }
    const double lr = 5e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    Value cond = Value::constant(Tensor::zeros({B, 0}));
    for (int step = 1; step <= 2000; ++step) {
        FlowBatch batch;
        batch.x0 = Tensor::zeros({B, F});
        batch.x1 = Tensor::zeros({B, F});
        for (std::size_t i = 0; i < B; ++i) {
            batch.t.push_back(rng.uniform01());
            for (std::size_t j = 0; j < F; ++j) {
                batch.x0.at(i, j) = rng.normal();
                batch.x1.at(i, j) = target.data[j];
            }
        }
        Value loss = cfm_loss(net, batch, cond);
        for (auto& p : params) p.zero_grad();
        ag::backward(loss);
        const double bc1 = 1.0 - std::pow(b1, step), bc2 = 1.0 - std::pow(b2, step);
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            Tensor value = params[pi].value();
            const Tensor& g = params[pi].grad();
            for (std::size_t i = 0; i < value.data.size(); ++i) {
                m[pi].data[i] = b1 * m[pi].data[i] + (1 - b1) * g.data[i];
                v[pi].data[i] = b2 * v[pi].data[i] + (1 - b2) * g.data[i] * g.data[i];
                value.data[i] -= lr * (m[pi].data[i] / bc1) / (std::sqrt(v[pi].data[i] / bc2) + eps);
            }
            params[pi].set_value(std::move(value));
        }
    }

    Tensor empty_cond = Tensor::zeros({0});
    for (int i = 0; i < 20; ++i) {
        Tensor x0 = Tensor::zeros({F});
        x0.data[0] = rng.normal();
        x0.data[1] = rng.normal();
        Tensor x = euler_sample(net, x0, empty_cond, 50);
        const double err = std::hypot(x.data[0] - target.data[0], x.data[1] - target.data[1]);
        INFO("draw ", i, " error ", err);
        CHECK(err < 0.05);
    }
}

TEST_CASE("trained 2D Gaussian: sample mean lands within 0.1 of the target mean") {
    // train-to-convergence oracle for the generative path
    RngStream rng = named_stream(90, "flow2d");
    const std::size_t F = 2, H = 32, B = 64;
    const double mu0 = 1.5, mu1 = -0.5, sigma = 0.3;
    VectorFieldNet net = make_vector_field(F, 0, H, rng);

    // plain Adam on the six parameter tensors
    std::vector<Value> params = net.parameters();
    std::vector<Tensor> m, v;
    for (auto& p : params) {
        m.push_back(Tensor::zeros(p.value().shape));
        v.push_back(Tensor::zeros(p.value().shape));
    }
    const double lr = 5e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    Value cond = Value::constant(Tensor::zeros({B, 0}));
    for (int step = 1; step <= 1500; ++step) {
        FlowBatch batch;
        batch.x0 = Tensor::zeros({B, F});
        batch.x1 = Tensor::zeros({B, F});
        for (std::size_t i = 0; i < B; ++i) {
            batch.t.push_back(rng.uniform01());
            batch.x0.at(i, 0) = rng.normal();
            batch.x0.at(i, 1) = rng.normal();
            batch.x1.at(i, 0) = mu0 + sigma * rng.normal();
            batch.x1.at(i, 1) = mu1 + sigma * rng.normal();
        }
        Value loss = cfm_loss(net, batch, cond);
        for (auto& p : params) p.zero_grad();
        ag::backward(loss);
        const double bc1 = 1.0 - std::pow(b1, step), bc2 = 1.0 - std::pow(b2, step);
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            Tensor value = params[pi].value();
            const Tensor& g = params[pi].grad();
            for (std::size_t i = 0; i < value.data.size(); ++i) {
                m[pi].data[i] = b1 * m[pi].data[i] + (1 - b1) * g.data[i];
                v[pi].data[i] = b2 * v[pi].data[i] + (1 - b2) * g.data[i] * g.data[i];
                value.data[i] -= lr * (m[pi].data[i] / bc1) / (std::sqrt(v[pi].data[i] / bc2) + eps);
            }
            params[pi].set_value(std::move(value));
        }
    }

    Tensor cond1 = Tensor::zeros({0});
    double mean0 = 0.0, mean1 = 0.0;
    const int draws = 1000;
    for (int i = 0; i < draws; ++i) {
        Tensor x0 = Tensor::zeros({F});
        x0.data[0] = rng.normal();
        x0.data[1] = rng.normal();
        Tensor x = euler_sample(net, x0, cond1, 50);
        mean0 += x.data[0];
        mean1 += x.data[1];
    }
    mean0 /= draws;
    mean1 /= draws;
    const double err = std::hypot(mean0 - mu0, mean1 - mu1);
    INFO("sample mean (", mean0, ", ", mean1, ") err ", err);
    CHECK(err < 0.1);
}
