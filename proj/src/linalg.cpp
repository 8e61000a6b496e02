#include "emoflow/linalg.hpp"

#include <cmath>

#include "emoflow/errors.hpp"

namespace emoflow {

Tensor orthonormal_rows(const Tensor& m) {
    const std::size_t r = m.rows(), c = m.cols();
    if (r > c) throw ShapeError("orthonormal_rows: more rows than cols, " + m.shape_str());
    Tensor q = m;
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t k = 0; k < i; ++k) {
            double proj = 0.0;
            for (std::size_t j = 0; j < c; ++j) proj += q.at(i, j) * q.at(k, j);
            for (std::size_t j = 0; j < c; ++j) q.at(i, j) -= proj * q.at(k, j);
        }
        double norm = 0.0;
        for (std::size_t j = 0; j < c; ++j) norm += q.at(i, j) * q.at(i, j);
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw NumericError("orthonormal_rows: rank-deficient input");
        for (std::size_t j = 0; j < c; ++j) q.at(i, j) /= norm;
    }
    return q;
}

Tensor random_orthonormal_cols(std::size_t rows, std::size_t cols, RngStream& rng) {
    if (cols > rows) throw ShapeError("random_orthonormal_cols: cols > rows");
    Tensor g = Tensor::zeros({cols, rows});
    for (auto& v : g.data) v = rng.normal();
    Tensor q = orthonormal_rows(g); // cols x rows with orthonormal rows
    Tensor out = Tensor::zeros({rows, cols});
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = q.at(j, i);
    return out;
}

Tensor solve_linear(const Tensor& a, const Tensor& b) {
    const std::size_t n = a.rows();
    if (a.cols() != n || b.rows() != n)
        throw ShapeError("solve_linear: " + a.shape_str() + " vs " + b.shape_str());
    const std::size_t m = b.cols();
    Tensor lhs = a;
    Tensor rhs = b;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t i = col + 1; i < n; ++i)
            if (std::fabs(lhs.at(i, col)) > std::fabs(lhs.at(piv, col))) piv = i;
        if (std::fabs(lhs.at(piv, col)) < 1e-14) throw NumericError("solve_linear: singular matrix");
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) std::swap(lhs.at(col, j), lhs.at(piv, j));
            for (std::size_t j = 0; j < m; ++j) std::swap(rhs.at(col, j), rhs.at(piv, j));
        }
        for (std::size_t i = col + 1; i < n; ++i) {
            const double f = lhs.at(i, col) / lhs.at(col, col);
            if (f == 0.0) continue;
            for (std::size_t j = col; j < n; ++j) lhs.at(i, j) -= f * lhs.at(col, j);
            for (std::size_t j = 0; j < m; ++j) rhs.at(i, j) -= f * rhs.at(col, j);
        }
    }
    Tensor x = Tensor::zeros({n, m});
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t j = 0; j < m; ++j) {
            double s = rhs.at(i, j);
            for (std::size_t k = i + 1; k < n; ++k) s -= lhs.at(i, k) * x.at(k, j);
            x.at(i, j) = s / lhs.at(i, i);
        }
    }
    return x;
}

} // namespace emoflow
