#include <doctest.h>

#include <cmath>

#include "emoflow/autodiff.hpp"
#include "emoflow/errors.hpp"
#include "emoflow/rng.hpp"

using namespace emoflow;
using ag::Value;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, RngStream& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.normal();
    return t;
}

// independent oracle: naive triple loop
Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
    Tensor out = Tensor::zeros({a.rows(), b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
            out.at(i, j) = s;
        }
    return out;
}

} // namespace

TEST_CASE("matmul identity and hand cases") {
    Value a = Value::constant(Tensor::from_rows({{1, 0}, {0, 1}}));
    Value b = Value::constant(Tensor::from_rows({{3}, {4}}));
    Tensor r = ag::matmul(a, b).value();
    CHECK(r.at(0, 0) == 3.0);
    CHECK(r.at(1, 0) == 4.0);

    Value c = Value::constant(Tensor::from_rows({{1, 2}}));
    Value d = Value::constant(Tensor::from_rows({{3}, {4}}));
    CHECK(ag::matmul(c, d).value().data[0] == 11.0);
}

TEST_CASE("matmul random case matches triple-loop oracle") {
    RngStream rng(41);
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    Tensor got = ag::matmul(Value::constant(a), Value::constant(b)).value();
    Tensor want = matmul_oracle(a, b);
    for (std::size_t i = 0; i < got.data.size(); ++i)
        CHECK(std::fabs(got.data[i] - want.data[i]) <= 1e-12);
}

TEST_CASE("matmul shape mismatch error names both shapes") {
    Value a = Value::constant(Tensor::zeros({2, 3}));
    Value b = Value::constant(Tensor::zeros({2, 3}));
    try {
        ag::matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("matmul") != std::string::npos);
    }
}

TEST_CASE("matmul associativity on random conforming triples") {
    RngStream rng(42);
    for (int it = 0; it < 10; ++it) {
        const std::size_t m = 1 + rng.below(5), k = 1 + rng.below(5), n = 1 + rng.below(5),
                          p = 1 + rng.below(5);
        Value a = Value::constant(random_tensor({m, k}, rng));
        Value b = Value::constant(random_tensor({k, n}, rng));
        Value c = Value::constant(random_tensor({n, p}, rng));
        Tensor left = ag::matmul(ag::matmul(a, b), c).value();
        Tensor right = ag::matmul(a, ag::matmul(b, c)).value();
        for (std::size_t i = 0; i < left.data.size(); ++i) {
            const double scale = std::max(1.0, std::fabs(right.data[i]));
            CHECK(std::fabs(left.data[i] - right.data[i]) / scale <= 1e-9);
        }
    }
}

TEST_CASE("softmax_rows symmetry, stability, masking") {
    Tensor sym = ag::softmax_rows(Value::constant(Tensor::from_rows({{0, 0}}))).value();
    CHECK(sym.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(sym.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));

    Tensor stable = ag::softmax_rows(Value::constant(Tensor::from_rows({{1000, 0}}))).value();
    CHECK(stable.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(stable.at(0, 1) < 1e-300);
    CHECK(stable.all_finite());

    // mask hides index 2: softmax over [1,2] at indices 0,1
    Tensor mask = Tensor::from_rows({{1, 1, 0}});
    Tensor masked = ag::softmax_rows(Value::constant(Tensor::from_rows({{1, 2, 3}})), &mask).value();
    const double e1 = std::exp(1.0), e2 = std::exp(2.0);
    CHECK(masked.at(0, 0) == doctest::Approx(e1 / (e1 + e2)).epsilon(1e-12));
    CHECK(masked.at(0, 1) == doctest::Approx(e2 / (e1 + e2)).epsilon(1e-12));
    CHECK(masked.at(0, 2) == 0.0);

    Tensor all_masked = Tensor::from_rows({{0, 0, 0}});
    CHECK_THROWS_AS(ag::softmax_rows(Value::constant(Tensor::from_rows({{1, 2, 3}})), &all_masked),
                    MaskError);
}

TEST_CASE("softmax_rows rows sum to one, entries in [0,1] (property)") {
    RngStream rng(43);
    for (int it = 0; it < 30; ++it) {
        const std::size_t m = 1 + rng.below(4), n = 1 + rng.below(6);
        Tensor x = random_tensor({m, n}, rng);
        for (auto& v : x.data) v *= 10.0;
        Tensor mask = Tensor::zeros({m, n});
        for (std::size_t i = 0; i < m; ++i) {
            bool any = false;
            for (std::size_t j = 0; j < n; ++j) {
                mask.at(i, j) = rng.below(2) ? 1.0 : 0.0;
                any = any || mask.at(i, j) != 0.0;
            }
            if (!any) mask.at(i, rng.below(n)) = 1.0;
        }
        Tensor y = ag::softmax_rows(Value::constant(x), &mask).value();
        for (std::size_t i = 0; i < m; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                CHECK(y.at(i, j) >= 0.0);
                CHECK(y.at(i, j) <= 1.0);
                if (mask.at(i, j) == 0.0) CHECK(y.at(i, j) == 0.0);
                sum += y.at(i, j);
            }
            CHECK(std::fabs(sum - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("row_l2_norms hand and oracle cases") {
    Tensor t345 = ag::row_l2_norms(Value::constant(Tensor::from_rows({{3, 4}}))).value();
    CHECK(t345.data[0] == doctest::Approx(5.0).epsilon(1e-15));
    Tensor zero = ag::row_l2_norms(Value::constant(Tensor::from_rows({{0, 0}}))).value();
    CHECK(zero.data[0] == 0.0);

    RngStream rng(44);
    Tensor x = random_tensor({4, 3}, rng);
    Tensor norms = ag::row_l2_norms(Value::constant(x)).value();
    for (std::size_t i = 0; i < 4; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 3; ++j) s += x.at(i, j) * x.at(i, j);
        CHECK(std::fabs(norms.data[i] - std::sqrt(s)) <= 1e-12);
    }
}

TEST_CASE("backward of sum is all-ones; dot(x,x) doubles") {
    Value x = Value::leaf(Tensor::from_rows({{1, 2}, {3, 4}}));
    ag::backward(ag::sum_all(x));
    for (double g : x.grad().data) CHECK(g == 1.0);

    Value y = Value::leaf(Tensor({2}, {1.0, 2.0}));
    Value loss = ag::sum_all(ag::mul(y, y));
    ag::backward(loss);
    CHECK(y.grad().data[0] == 2.0);
    CHECK(y.grad().data[1] == 4.0);
}

TEST_CASE("backward rejects non-scalar loss") {
    Value x = Value::leaf(Tensor::from_rows({{1, 2}}));
    CHECK_THROWS_AS(ag::backward(ag::mul(x, x)), ContractError);
}

TEST_CASE("backward through shared subexpression (diamond) is exact") {
    Value x = Value::leaf(Tensor({1}, {3.0}));
    Value y = ag::add(x, x);                 // y = 2x
    Value z = ag::sum_all(ag::mul(y, y));    // z = 4x^2, dz/dx = 8x
    ag::backward(z);
    CHECK(x.grad().data[0] == doctest::Approx(24.0).epsilon(1e-15));
}

TEST_CASE("unreachable leaf reads zero gradient") {
    Value x = Value::leaf(Tensor({2}, {1.0, 2.0}));
    Value unused = Value::leaf(Tensor({3}, {1.0, 1.0, 1.0}));
    ag::backward(ag::sum_all(x));
    for (double g : unused.grad().data) CHECK(g == 0.0);
}

TEST_CASE("backward linearity: grad of sum equals sum of grads") {
    RngStream rng(45);
    Tensor x0 = random_tensor({3}, rng);

    Value xa = Value::leaf(x0);
    Value la = ag::sum_all(xa);
    ag::backward(la);
    Value xb = Value::leaf(x0);
    Value lb = ag::sum_all(ag::mul(xb, xb));
    ag::backward(lb);

    Value xc = Value::leaf(x0);
    Value lc = ag::add(ag::sum_all(xc), ag::sum_all(ag::mul(xc, xc)));
    ag::backward(lc);

    for (std::size_t i = 0; i < 3; ++i)
        CHECK(xc.grad().data[i] == xa.grad().data[i] + xb.grad().data[i]);
}

TEST_CASE("grad_check quadratic is tiny") {
    Tensor theta({2}, {1.0, -2.0});
    auto f = [](const std::vector<Value>& vs) {
        return ag::scale(ag::sum_all(ag::mul(vs[0], vs[0])), 0.5);
    };
    CHECK(ag::grad_check(f, {theta}, 1e-5) < 1e-8);
}

TEST_CASE("elementwise op gradients via grad_check") {
    RngStream rng(46);
    Tensor a = random_tensor({2, 3}, rng);
    Tensor b = random_tensor({2, 3}, rng);
    for (auto& v : b.data) v = 1.5 + std::fabs(v); // keep div well-conditioned

    auto f = [](const std::vector<Value>& vs) {
        Value t = ag::tanh(vs[0]);
        Value d = ag::div(t, vs[1]);
        Value s = ag::sqrt(ag::add_scalar(ag::mul(vs[1], vs[1]), 0.5));
        return ag::mean_all(ag::add(ag::mul(d, d), s));
    };
    CHECK(ag::grad_check(f, {a, b}, 1e-5) < 1e-6);
}

TEST_CASE("structural op gradients via grad_check") {
    RngStream rng(47);
    Tensor a = random_tensor({3, 2}, rng);
    Tensor b = random_tensor({3, 3}, rng);
    Tensor r = random_tensor({1, 5}, rng);
    auto f = [](const std::vector<Value>& vs) {
        Value cat = ag::concat_cols({vs[0], vs[1]}); // 3 x 5
        Value br = ag::add_row_broadcast(cat, vs[2]);
        Value sl = ag::slice_rows(ag::transpose(br), 1, 3); // 3 x 3
        Value st = ag::stack_rows({ag::slice_rows(sl, 0, 1), ag::slice_rows(sl, 2, 1)});
        return ag::sum_all(ag::mul(st, st));
    };
    CHECK(ag::grad_check(f, {a, b, r}, 1e-5) < 1e-6);
}

TEST_CASE("embed_rows gathers and scatters gradients") {
    Tensor table = Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}});
    Value t = Value::leaf(table);
    Value rows = ag::embed_rows(t, {2, 0, 2});
    CHECK(rows.value().at(0, 1) == 6.0);
    ag::backward(ag::sum_all(rows));
    CHECK(t.grad().at(2, 0) == 2.0); // row 2 used twice
    CHECK(t.grad().at(1, 0) == 0.0);
    CHECK_THROWS_AS(ag::embed_rows(t, {3}), VocabError);
}
