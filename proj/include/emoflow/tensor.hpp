#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace emoflow {

// Dense row-major f64 tensor. The universal numeric carrier; immutable by
// convention once handed to graph ops (the autodiff layer copies values it
// must own).
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape_, std::vector<double> data_);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double v);
    static Tensor scalar(double v);
    static Tensor vec(std::initializer_list<double> vals);
    // rows of equal length -> rank-2 tensor
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor identity(std::size_t n);

    std::size_t numel() const;
    std::size_t rank() const { return shape.size(); }

    // rank-2 accessors
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t i, std::size_t j);
    double at(std::size_t i, std::size_t j) const;

    bool is_scalar() const { return numel() == 1 && rank() <= 1; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;

    std::string shape_str() const;
};

std::string shape_to_string(const std::vector<std::size_t>& shape);

// Throws ShapeError naming both shapes when they differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

// plain-tensor helpers (no autodiff) used by data generation and evaluation
Tensor mean_over_rows(const Tensor& m);            // M x N -> 1 x N
double dot(const Tensor& a, const Tensor& b);      // same numel
double l2_norm(const Tensor& a);
double cosine(const Tensor& a, const Tensor& b);   // eps-smoothed norms
Tensor row(const Tensor& m, std::size_t i);        // M x N -> 1 x N copy

} // namespace emoflow
