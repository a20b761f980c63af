#include "intlora/matrix.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include "intlora/kernels.hpp"

namespace intlora {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

unsigned matmul_threads() {
    static const unsigned n = [] {
        const char* env = std::getenv("INTLORA_THREADS");
        if (env == nullptr) return 1L;
        long v = std::strtol(env, nullptr, 10);
        return v < 1 ? 1L : v;
    }();
    return n;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    const unsigned threads = matmul_threads();
    const auto& k = kernels::ops();
    if (threads <= 1 || a.rows() < 2 * threads) {
        k.matmul(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
        return c;
    }
    // Row partition: every output element is still produced by the same
    // kernel in the same order, so the result is thread-count independent.
    std::vector<std::thread> pool;
    const std::size_t chunk = (a.rows() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t r0 = t * chunk;
        if (r0 >= a.rows()) break;
        const std::size_t r1 = std::min(a.rows(), r0 + chunk);
        pool.emplace_back([&, r0, r1] {
            k.matmul(a.data() + r0 * a.cols(), b.data(), c.data() + r0 * b.cols(),
                     r1 - r0, a.cols(), b.cols());
        });
    }
    for (auto& th : pool) th.join();
    return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("hadamard: shapes differ");
    Matrix c(a.rows(), a.cols());
    kernels::ops().hadamard(a.data(), b.data(), c.data(), a.size());
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("add: shapes differ");
    Matrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] + b.data()[i];
    return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("sub: shapes differ");
    Matrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] - b.data()[i];
    return c;
}

Matrix scaled(const Matrix& a, double factor) {
    Matrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = factor * a.data()[i];
    return c;
}

double frobenius_norm(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * a.data()[i];
    return std::sqrt(s);
}

double mean_squared_error(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("mse: shapes differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

} // namespace intlora
