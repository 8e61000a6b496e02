#include "emoflow/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "emoflow/errors.hpp"

namespace emoflow::ag {

Tensor& Value::Node::grad_buffer() {
    if (grad_buf.data.empty() && value.numel() > 0) grad_buf = Tensor::zeros(value.shape);
    return grad_buf;
}

Value Value::leaf(Tensor v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return Value(std::move(n));
}

Value Value::constant(Tensor v) {
    return leaf(std::move(v), false);
}

const Tensor& Value::value() const {
    return n_->value;
}

bool Value::requires_grad() const {
    return n_ && n_->requires_grad;
}

const Tensor& Value::grad() const {
    return n_->grad_buffer();
}

void Value::zero_grad() {
    if (n_ && !n_->grad_buf.data.empty())
        std::fill(n_->grad_buf.data.begin(), n_->grad_buf.data.end(), 0.0);
}

void Value::set_value(Tensor v) {
    require_same_shape(n_->value, v, "set_value");
    n_->value = std::move(v);
}

double Value::scalar() const {
    if (n_->value.numel() != 1) throw ContractError("scalar(): tensor has shape " + n_->value.shape_str());
    return n_->value.data[0];
}

Value make_op(Tensor out, std::vector<Value> parents, std::function<void(Value::Node&)> backward_fn) {
    bool needs = false;
    for (const auto& p : parents)
        if (p.requires_grad()) needs = true;
    auto n = std::make_shared<Value::Node>();
    n->value = std::move(out);
    n->requires_grad = needs;
    if (needs) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return Value(std::move(n));
}

namespace {

void accum(const Value& p, const Tensor& g) {
    if (!p.requires_grad()) return;
    Tensor& buf = p.node()->grad_buffer();
    for (std::size_t i = 0; i < buf.data.size(); ++i) buf.data[i] += g.data[i];
}

// accumulate with a per-element transform to avoid temporaries in hot ops
template <typename F>
void accum_fn(const Value& p, std::size_t n, F f) {
    if (!p.requires_grad()) return;
    Tensor& buf = p.node()->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) buf.data[i] += f(i);
}

} // namespace

void backward(const Value& loss) {
    if (!loss.defined()) throw ContractError("backward: undefined loss");
    const Tensor& lv = loss.value();
    if (!(lv.numel() == 1 && lv.rank() <= 1))
        throw ContractError("backward: loss must be scalar (shape [1] or []), got " + lv.shape_str());

    // iterative DFS topological order
    std::vector<Value::Node*> topo;
    std::unordered_set<Value::Node*> visited;
    struct Frame {
        Value::Node* n;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    if (loss.requires_grad()) stack.push_back({loss.node(), 0});
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent == 0) {
            if (visited.count(f.n)) {
                stack.pop_back();
                continue;
            }
            visited.insert(f.n);
        }
        if (f.next_parent < f.n->parents.size()) {
            Value::Node* p = f.n->parents[f.next_parent].node();
            ++f.next_parent;
            if (p->requires_grad && !visited.count(p)) stack.push_back({p, 0});
        } else {
            topo.push_back(f.n);
            stack.pop_back();
        }
    }

    if (loss.requires_grad()) {
        Tensor& seed = loss.node()->grad_buffer();
        for (auto& v : seed.data) v = 0.0;
        seed.data[0] = 1.0;
    }
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Value::Node* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// ---- elementwise ----------------------------------------------------------

Value add(const Value& a, const Value& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.value().data[i];
    return make_op(std::move(out), {a, b}, [](Value::Node& n) {
        const Tensor& g = n.grad_buf;
        accum(n.parents[0], g);
        accum(n.parents[1], g);
    });
}

Value sub(const Value& a, const Value& b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.value().data[i];
    return make_op(std::move(out), {a, b}, [](Value::Node& n) {
        const Tensor& g = n.grad_buf;
        accum(n.parents[0], g);
        accum_fn(n.parents[1], g.data.size(), [&](std::size_t i) { return -g.data[i]; });
    });
}

Value mul(const Value& a, const Value& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.value().data[i];
    return make_op(std::move(out), {a, b}, [](Value::Node& n) {
        const Tensor& g = n.grad_buf;
        const Tensor& av = n.parents[0].value();
        const Tensor& bv = n.parents[1].value();
        accum_fn(n.parents[0], g.data.size(), [&](std::size_t i) { return g.data[i] * bv.data[i]; });
        accum_fn(n.parents[1], g.data.size(), [&](std::size_t i) { return g.data[i] * av.data[i]; });
    });
}

Value div(const Value& a, const Value& b) {
    require_same_shape(a.value(), b.value(), "div");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] /= b.value().data[i];
    return make_op(std::move(out), {a, b}, [](Value::Node& n) {
        const Tensor& g = n.grad_buf;
        const Tensor& av = n.parents[0].value();
        const Tensor& bv = n.parents[1].value();
        accum_fn(n.parents[0], g.data.size(), [&](std::size_t i) { return g.data[i] / bv.data[i]; });
        accum_fn(n.parents[1], g.data.size(),
                 [&](std::size_t i) { return -g.data[i] * av.data[i] / (bv.data[i] * bv.data[i]); });
    });
}

Value scale(const Value& a, double c) {
    Tensor out = a.value();
    for (auto& v : out.data) v *= c;
    return make_op(std::move(out), {a}, [c](Value::Node& n) {
        accum_fn(n.parents[0], n.grad_buf.data.size(), [&](std::size_t i) { return c * n.grad_buf.data[i]; });
    });
}

Value add_scalar(const Value& a, double c) {
    Tensor out = a.value();
    for (auto& v : out.data) v += c;
    return make_op(std::move(out), {a}, [](Value::Node& n) { accum(n.parents[0], n.grad_buf); });
}

// ---- linear algebra --------------------------------------------------------

Value matmul(const Value& a, const Value& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
        throw ShapeError("matmul: inner dimensions disagree, " + av.shape_str() + " x " + bv.shape_str());
    const std::size_t M = av.rows(), K = av.cols(), N = bv.cols();
    Tensor out = Tensor::zeros({M, N});
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < K; ++k) {
            const double aik = av.data[i * K + k];
            for (std::size_t j = 0; j < N; ++j) out.data[i * N + j] += aik * bv.data[k * N + j];
        }
    return make_op(std::move(out), {a, b}, [M, K, N](Value::Node& n) {
        const Tensor& g = n.grad_buf;
        const Tensor& av2 = n.parents[0].value();
        const Tensor& bv2 = n.parents[1].value();
        if (n.parents[0].requires_grad()) {
            Tensor& da = n.parents[0].node()->grad_buffer();
            // da += g . b^T
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t j = 0; j < N; ++j) {
                    const double gij = g.data[i * N + j];
                    for (std::size_t k = 0; k < K; ++k) da.data[i * K + k] += gij * bv2.data[k * N + j];
                }
        }
        if (n.parents[1].requires_grad()) {
            Tensor& db = n.parents[1].node()->grad_buffer();
            // db += a^T . g
            for (std::size_t i = 0; i < M; ++i)
                for (std::size_t k = 0; k < K; ++k) {
                    const double aik = av2.data[i * K + k];
                    for (std::size_t j = 0; j < N; ++j) db.data[k * N + j] += aik * g.data[i * N + j];
                }
        }
    });
}

Value transpose(const Value& a) {
    const Tensor& av = a.value();
    const std::size_t M = av.rows(), N = av.cols();
    Tensor out = Tensor::zeros({N, M});
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) out.data[j * M + i] = av.data[i * N + j];
    return make_op(std::move(out), {a}, [M, N](Value::Node& n) {
        accum_fn(n.parents[0], M * N, [&](std::size_t i) {
            const std::size_t r = i / N, c = i % N;
            return n.grad_buf.data[c * M + r];
        });
    });
}

Value reshape(const Value& a, std::vector<std::size_t> shape) {
    Tensor out(std::move(shape), a.value().data);
    if (out.numel() != a.value().numel())
        throw ShapeError("reshape: element count mismatch " + a.value().shape_str() + " -> " + out.shape_str());
    return make_op(std::move(out), {a}, [](Value::Node& n) { accum(n.parents[0], n.grad_buf); });
}

Value concat_cols(const std::vector<Value>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t M = parts[0].value().rows();
    std::size_t total = 0;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
        if (p.value().rows() != M)
            throw ShapeError("concat_cols: row mismatch " + parts[0].value().shape_str() + " vs " +
                             p.value().shape_str());
        widths.push_back(p.value().cols());
        total += p.value().cols();
    }
    Tensor out = Tensor::zeros({M, total});
    std::size_t off = 0;
    for (const auto& p : parts) {
        const Tensor& pv = p.value();
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = 0; j < pv.cols(); ++j) out.data[i * total + off + j] = pv.at(i, j);
        off += pv.cols();
    }
    return make_op(std::move(out), parts, [M, total, widths](Value::Node& n) {
        std::size_t o = 0;
        for (std::size_t pi = 0; pi < n.parents.size(); ++pi) {
            const std::size_t w = widths[pi];
            accum_fn(n.parents[pi], M * w, [&](std::size_t i) {
                const std::size_t r = i / w, c = i % w;
                return n.grad_buf.data[r * total + o + c];
            });
            o += w;
        }
    });
}

Value stack_rows(const std::vector<Value>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no inputs");
    const std::size_t N = rows[0].value().cols();
    for (const auto& r : rows)
        if (r.value().rank() != 2 || r.value().rows() != 1 || r.value().cols() != N)
            throw ShapeError("stack_rows: expected 1x" + std::to_string(N) + ", got " + r.value().shape_str());
    const std::size_t M = rows.size();
    Tensor out = Tensor::zeros({M, N});
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) out.data[i * N + j] = rows[i].value().data[j];
    return make_op(std::move(out), rows, [N](Value::Node& n) {
        for (std::size_t i = 0; i < n.parents.size(); ++i)
            accum_fn(n.parents[i], N, [&](std::size_t j) { return n.grad_buf.data[i * N + j]; });
    });
}

Value slice_rows(const Value& a, std::size_t start, std::size_t len) {
    const Tensor& av = a.value();
    const std::size_t N = av.cols();
    if (start + len > av.rows())
        throw ShapeError("slice_rows: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") out of " + av.shape_str());
    Tensor out = Tensor::zeros({len, N});
    std::copy(av.data.begin() + static_cast<std::ptrdiff_t>(start * N),
              av.data.begin() + static_cast<std::ptrdiff_t>((start + len) * N), out.data.begin());
    return make_op(std::move(out), {a}, [start, len, N](Value::Node& n) {
        if (!n.parents[0].requires_grad()) return;
        Tensor& da = n.parents[0].node()->grad_buffer();
        for (std::size_t i = 0; i < len * N; ++i) da.data[start * N + i] += n.grad_buf.data[i];
    });
}

Value embed_rows(const Value& table, const std::vector<int>& ids) {
    const Tensor& tv = table.value();
    const std::size_t V = tv.rows(), D = tv.cols();
    Tensor out = Tensor::zeros({ids.size(), D});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V)
            throw VocabError("embed_rows: token id " + std::to_string(ids[i]) + " out of vocab [0," +
                             std::to_string(V) + ")");
        std::copy(tv.data.begin() + ids[i] * static_cast<std::ptrdiff_t>(D),
                  tv.data.begin() + (ids[i] + 1) * static_cast<std::ptrdiff_t>(D),
                  out.data.begin() + static_cast<std::ptrdiff_t>(i * D));
    }
    return make_op(std::move(out), {table}, [ids, D](Value::Node& n) {
        if (!n.parents[0].requires_grad()) return;
        Tensor& dt = n.parents[0].node()->grad_buffer();
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = 0; j < D; ++j)
                dt.data[static_cast<std::size_t>(ids[i]) * D + j] += n.grad_buf.data[i * D + j];
    });
}

// ---- reductions and nonlinearities ------------------------------------------

Value softmax_rows(const Value& x, const Tensor* mask) {
    const Tensor& xv = x.value();
    const std::size_t M = xv.rows(), N = xv.cols();
    if (mask) {
        if (mask->shape != xv.shape)
            throw ShapeError("softmax_rows: mask shape " + mask->shape_str() + " vs input " + xv.shape_str());
    }
    Tensor out = Tensor::zeros({M, N});
    for (std::size_t i = 0; i < M; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < N; ++j)
            if (!mask || mask->at(i, j) != 0.0) mx = std::max(mx, xv.at(i, j));
        if (!std::isfinite(mx))
            throw MaskError("softmax_rows: row " + std::to_string(i) + " is fully masked");
        double denom = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
            if (!mask || mask->at(i, j) != 0.0) {
                out.at(i, j) = std::exp(xv.at(i, j) - mx);
                denom += out.at(i, j);
            }
        }
        for (std::size_t j = 0; j < N; ++j) out.at(i, j) /= denom;
    }
    Tensor y = out;
    return make_op(std::move(out), {x}, [M, N, y](Value::Node& n) {
        if (!n.parents[0].requires_grad()) return;
        Tensor& dx = n.parents[0].node()->grad_buffer();
        const Tensor& g = n.grad_buf;
        for (std::size_t i = 0; i < M; ++i) {
            double inner = 0.0;
            for (std::size_t j = 0; j < N; ++j) inner += g.at(i, j) * y.at(i, j);
            for (std::size_t j = 0; j < N; ++j) dx.at(i, j) += y.at(i, j) * (g.at(i, j) - inner);
        }
    });
}

Value row_sums(const Value& x) {
    const Tensor& xv = x.value();
    const std::size_t M = xv.rows(), N = xv.cols();
    Tensor out = Tensor::zeros({M});
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) out.data[i] += xv.at(i, j);
    return make_op(std::move(out), {x}, [M, N](Value::Node& n) {
        accum_fn(n.parents[0], M * N, [&](std::size_t i) { return n.grad_buf.data[i / N]; });
    });
}

Value row_l2_norms(const Value& x) {
    const Tensor& xv = x.value();
    const std::size_t M = xv.rows(), N = xv.cols();
    Tensor out = Tensor::zeros({M});
    for (std::size_t i = 0; i < M; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < N; ++j) s += xv.at(i, j) * xv.at(i, j);
        out.data[i] = std::sqrt(s);
    }
    Tensor norms = out;
    return make_op(std::move(out), {x}, [M, N, norms](Value::Node& n) {
        const Tensor& xv2 = n.parents[0].value();
        accum_fn(n.parents[0], M * N, [&](std::size_t i) {
            const std::size_t r = i / N;
            if (norms.data[r] == 0.0) return 0.0;
            return n.grad_buf.data[r] * xv2.data[i] / norms.data[r];
        });
    });
}

Value sum_all(const Value& x) {
    double s = 0.0;
    for (double v : x.value().data) s += v;
    return make_op(Tensor::scalar(s), {x}, [](Value::Node& n) {
        const double g = n.grad_buf.data[0];
        accum_fn(n.parents[0], n.parents[0].value().numel(), [&](std::size_t) { return g; });
    });
}

Value mean_all(const Value& x) {
    const std::size_t n = x.value().numel();
    double s = 0.0;
    for (double v : x.value().data) s += v;
    return make_op(Tensor::scalar(s / static_cast<double>(n)), {x}, [n](Value::Node& nd) {
        const double g = nd.grad_buf.data[0] / static_cast<double>(n);
        accum_fn(nd.parents[0], n, [&](std::size_t) { return g; });
    });
}

Value abs(const Value& x) {
    Tensor out = x.value();
    for (auto& v : out.data) v = std::fabs(v);
    return make_op(std::move(out), {x}, [](Value::Node& n) {
        const Tensor& xv = n.parents[0].value();
        accum_fn(n.parents[0], xv.numel(), [&](std::size_t i) {
            const double s = xv.data[i] > 0.0 ? 1.0 : (xv.data[i] < 0.0 ? -1.0 : 0.0);
            return s * n.grad_buf.data[i];
        });
    });
}

Value tanh(const Value& x) {
    Tensor out = x.value();
    for (auto& v : out.data) v = std::tanh(v);
    Tensor y = out;
    return make_op(std::move(out), {x}, [y](Value::Node& n) {
        accum_fn(n.parents[0], y.numel(),
                 [&](std::size_t i) { return (1.0 - y.data[i] * y.data[i]) * n.grad_buf.data[i]; });
    });
}

Value sqrt(const Value& x) {
    Tensor out = x.value();
    for (auto& v : out.data) v = std::sqrt(v);
    Tensor y = out;
    return make_op(std::move(out), {x}, [y](Value::Node& n) {
        accum_fn(n.parents[0], y.numel(), [&](std::size_t i) { return 0.5 / y.data[i] * n.grad_buf.data[i]; });
    });
}

Value add_row_broadcast(const Value& a, const Value& r) {
    const Tensor& av = a.value();
    const Tensor& rv = r.value();
    if (rv.rank() != 2 || rv.rows() != 1 || rv.cols() != av.cols())
        throw ShapeError("add_row_broadcast: " + av.shape_str() + " + " + rv.shape_str());
    const std::size_t M = av.rows(), N = av.cols();
    Tensor out = av;
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) out.data[i * N + j] += rv.data[j];
    return make_op(std::move(out), {a, r}, [M, N](Value::Node& n) {
        accum(n.parents[0], n.grad_buf);
        accum_fn(n.parents[1], N, [&](std::size_t j) {
            double s = 0.0;
            for (std::size_t i = 0; i < M; ++i) s += n.grad_buf.data[i * N + j];
            return s;
        });
    });
}

// ---- gradient verification ---------------------------------------------------

double grad_check(const std::function<Value(const std::vector<Value>&)>& f,
                  const std::vector<Tensor>& params, double step) {
    if (step <= 0.0) throw ContractError("grad_check: step must be positive");

    std::vector<Value> leaves;
    leaves.reserve(params.size());
    for (const auto& p : params) leaves.push_back(Value::leaf(p, true));
    Value loss = f(leaves);
    backward(loss);
    std::vector<Tensor> analytic;
    analytic.reserve(leaves.size());
    for (const auto& l : leaves) analytic.push_back(l.grad());

    auto eval_at = [&](const std::vector<Tensor>& theta) {
        std::vector<Value> consts;
        consts.reserve(theta.size());
        for (const auto& t : theta) consts.push_back(Value::leaf(t, false));
        return f(consts).scalar();
    };

    double max_rel = 0.0;
    std::vector<Tensor> theta = params;
    for (std::size_t pi = 0; pi < theta.size(); ++pi) {
        for (std::size_t i = 0; i < theta[pi].data.size(); ++i) {
            const double orig = theta[pi].data[i];
            theta[pi].data[i] = orig + step;
            const double fp = eval_at(theta);
            theta[pi].data[i] = orig - step;
            const double fm = eval_at(theta);
            theta[pi].data[i] = orig;
            const double central = (fp - fm) / (2.0 * step);
            const double rel = std::fabs(analytic[pi].data[i] - central) / std::max(1.0, std::fabs(central));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

} // namespace emoflow::ag
