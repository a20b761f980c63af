#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "intlora/error.hpp"

namespace intlora {

// Dense row-major matrix of 64-bit reals. Rows are output channels.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {
        if (rows == 0 || cols == 0) throw ShapeError("matrix dimensions must be positive");
    }
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (rows == 0 || cols == 0) throw ShapeError("matrix dimensions must be positive");
        if (data_.size() != rows * cols) throw ShapeError("data length does not match shape");
    }

    static Matrix identity(std::size_t n);
    static Matrix ones(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 1.0); }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Exact dense product / elementwise product in 64-bit arithmetic.
// Deterministic for a fixed thread count (rows are partitioned, each output
// element is computed by exactly one thread in scalar-identical order).
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& a, double factor);

double frobenius_norm(const Matrix& a);
double mean_squared_error(const Matrix& a, const Matrix& b);

// Thread count for matmul; reads INTLORA_THREADS once (default 1).
unsigned matmul_threads();

} // namespace intlora
