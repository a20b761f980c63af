#include "intlora/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace intlora::kernels {

namespace {

void matmul_scalar(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n) {
    std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* brow = b + p * n;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += aip * brow[j];
            }
        }
    }
}

void hadamard_scalar(const double* a, const double* b, double* c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
}

void affine_quantize_scalar(const double* x, std::int32_t* out, std::size_t n,
                            double scale, std::int32_t zero, std::int32_t qmax) {
    for (std::size_t i = 0; i < n; ++i) {
        // nearbyint under the default rounding mode: ties to even.
        double t = std::nearbyint(x[i] / scale) + static_cast<double>(zero);
        t = std::min(std::max(t, 0.0), static_cast<double>(qmax));
        out[i] = static_cast<std::int32_t>(t);
    }
}

void dequantize_scalar(const std::int32_t* q, double* out, std::size_t n,
                       double scale, std::int32_t zero) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = scale * static_cast<double>(q[i] - zero);
    }
}

const Ops kScalar{matmul_scalar, hadamard_scalar, affine_quantize_scalar,
                  dequantize_scalar};

} // namespace

const Ops& scalar_ops() { return kScalar; }

} // namespace intlora::kernels
