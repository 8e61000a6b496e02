#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "emoflow/tensor.hpp"

namespace emoflow::ag {

// Reverse-mode automatic differentiation over Tensor values.
//
// A Value is a shared handle to a graph node holding the forward value, a
// lazily materialized gradient buffer and the provenance needed for the
// backward pass. Ops evaluate eagerly; a node records parents and a backward
// closure only when some input requires gradients, so forward-only evaluation
// builds no graph. Values are immutable after construction except for the
// gradient buffer (mutated by backward) and leaf values (mutated by the
// optimizer between graphs).
class Value {
public:
    Value() = default;

    static Value leaf(Tensor v, bool requires_grad = true);
    static Value constant(Tensor v);

    bool defined() const { return n_ != nullptr; }
    const Tensor& value() const;
    bool requires_grad() const;

    // gradient of the most recent backward(); zeros if this node was not
    // reached (or backward was never run)
    const Tensor& grad() const;
    void zero_grad();

    // optimizer update hook; only meaningful on leaves between graph builds
    void set_value(Tensor v);
    double scalar() const; // value of a 1-element tensor

    struct Node;
    Node* node() const { return n_.get(); }

private:
    explicit Value(std::shared_ptr<Node> n) : n_(std::move(n)) {}
    std::shared_ptr<Node> n_;

    friend Value make_op(Tensor out, std::vector<Value> parents,
                         std::function<void(Node&)> backward_fn);
    friend void backward(const Value& loss);
};

struct Value::Node {
    Tensor value;
    Tensor grad_buf;                 // empty until first accumulation
    bool requires_grad = false;
    std::vector<Value> parents;
    std::function<void(Node&)> backward_fn;

    Tensor& grad_buffer(); // materializes zeros of value's shape
};

// Runs the backward pass from a scalar loss (shape [1] or []): topological
// order, each node visited exactly once, gradients accumulated into every
// reachable node that requires them. Throws ContractError on non-scalar loss.
void backward(const Value& loss);

// ---- ops ----------------------------------------------------------------

Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b); // elementwise
Value div(const Value& a, const Value& b); // elementwise
Value scale(const Value& a, double c);
Value add_scalar(const Value& a, double c);

// standard matrix product, M x K times K x N; dimension errors name both shapes
Value matmul(const Value& a, const Value& b);
Value transpose(const Value& a);
Value reshape(const Value& a, std::vector<std::size_t> shape);

Value concat_cols(const std::vector<Value>& parts); // all M x Ni -> M x sum(Ni)
Value stack_rows(const std::vector<Value>& rows);   // all 1 x N  -> M x N
Value slice_rows(const Value& a, std::size_t start, std::size_t len);
Value embed_rows(const Value& table, const std::vector<int>& ids); // V x D -> L x D

// Row-wise softmax with optional boolean mask (nonzero = keep). Rows are
// stabilized by max subtraction; masked positions are exactly zero. A fully
// masked row raises MaskError.
Value softmax_rows(const Value& x, const Tensor* mask = nullptr);

Value row_sums(const Value& x);     // M x N -> [M]
Value row_l2_norms(const Value& x); // M x N -> [M]; zero rows yield 0
Value sum_all(const Value& x);      // -> [1]
Value mean_all(const Value& x);     // -> [1]

Value abs(const Value& x);
Value tanh(const Value& x);
Value sqrt(const Value& x);

// y_ij = a_ij + r_j with r of shape 1 x N
Value add_row_broadcast(const Value& a, const Value& r);

// ---- gradient verification ----------------------------------------------

// Central finite differences against the analytic gradients of a scalar
// function of one or more parameter tensors. The function is re-invoked for
// every perturbed coordinate, so it must be pure in its inputs. Returns the
// max over all coordinates of |analytic - central| / max(1, |central|).
double grad_check(const std::function<Value(const std::vector<Value>&)>& f,
                  const std::vector<Tensor>& params, double step);

} // namespace emoflow::ag
