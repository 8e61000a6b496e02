#include "emoflow/tensor.hpp"

#include <cmath>
#include <sstream>

#include "emoflow/errors.hpp"

namespace emoflow {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (product(shape) != data.size()) {
        throw ShapeError("tensor: shape " + shape_to_string(shape) + " does not match data length " +
                         std::to_string(data.size()));
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::size_t n = product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
    std::size_t n = product(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v));
}

Tensor Tensor::scalar(double v) {
    return Tensor({1}, {v});
}

Tensor Tensor::vec(std::initializer_list<double> vals) {
    return Tensor({vals.size()}, std::vector<double>(vals));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& rw : rows) {
        if (rw.size() != c) throw ShapeError("from_rows: ragged rows");
        data.insert(data.end(), rw.begin(), rw.end());
    }
    return Tensor({r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data[i * n + i] = 1.0;
    return t;
}

std::size_t Tensor::numel() const {
    return product(shape);
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ShapeError("rows(): tensor is not rank-2, shape " + shape_str());
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError("cols(): tensor is not rank-2, shape " + shape_str());
    return shape[1];
}

double& Tensor::at(std::size_t i, std::size_t j) {
    return data[i * cols() + j];
}

double Tensor::at(std::size_t i, std::size_t j) const {
    return data[i * cols() + j];
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    return shape_to_string(shape);
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

Tensor mean_over_rows(const Tensor& m) {
    const std::size_t r = m.rows(), c = m.cols();
    Tensor out = Tensor::zeros({1, c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data[j] += m.at(i, j);
    for (std::size_t j = 0; j < c; ++j) out.data[j] /= static_cast<double>(r);
    return out;
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel())
        throw ShapeError("dot: size mismatch " + a.shape_str() + " vs " + b.shape_str());
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

double l2_norm(const Tensor& a) {
    return std::sqrt(dot(a, a));
}

double cosine(const Tensor& a, const Tensor& b) {
    constexpr double eps = 1e-9;
    const double na = std::sqrt(dot(a, a) + eps * eps);
    const double nb = std::sqrt(dot(b, b) + eps * eps);
    return dot(a, b) / (na * nb);
}

Tensor row(const Tensor& m, std::size_t i) {
    const std::size_t c = m.cols();
    std::vector<double> d(m.data.begin() + static_cast<std::ptrdiff_t>(i * c),
                          m.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
    return Tensor({1, c}, std::move(d));
}

} // namespace emoflow
