#include "intlora/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#if defined(__x86_64__) || defined(_M_X64)
#define INTLORA_X86 1
#include <immintrin.h>
#else
#define INTLORA_X86 0
#endif

namespace intlora::kernels {

#if INTLORA_X86

namespace {

// Accumulation order per output element matches the scalar kernel (k outer,
// j lanes independent); mul/add kept separate so no FMA contraction happens.
void matmul_avx2(const double* a, const double* b, double* c,
                 std::size_t m, std::size_t k, std::size_t n) {
    std::memset(c, 0, m * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const __m256d va = _mm256_set1_pd(aip);
            const double* brow = b + p * n;
            double* crow = c + i * n;
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d vb = _mm256_loadu_pd(brow + j);
                __m256d vc = _mm256_loadu_pd(crow + j);
                vc = _mm256_add_pd(vc, _mm256_mul_pd(va, vb));
                _mm256_storeu_pd(crow + j, vc);
            }
            for (; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

void hadamard_avx2(const double* a, const double* b, double* c, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(c + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                              _mm256_loadu_pd(b + i)));
    }
    for (; i < n; ++i) c[i] = a[i] * b[i];
}

void affine_quantize_avx2(const double* x, std::int32_t* out, std::size_t n,
                          double scale, std::int32_t zero, std::int32_t qmax) {
    const __m256d vs = _mm256_set1_pd(scale);
    const __m256d vz = _mm256_set1_pd(static_cast<double>(zero));
    const __m256d vlo = _mm256_setzero_pd();
    const __m256d vhi = _mm256_set1_pd(static_cast<double>(qmax));
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d t = _mm256_div_pd(_mm256_loadu_pd(x + i), vs);
        t = _mm256_round_pd(t, _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
        t = _mm256_add_pd(t, vz);
        t = _mm256_min_pd(_mm256_max_pd(t, vlo), vhi);
        __m128i q = _mm256_cvttpd_epi32(t);
        _mm_storeu_si128(reinterpret_cast<__m128i*>(out + i), q);
    }
    for (; i < n; ++i) {
        double t = std::nearbyint(x[i] / scale) + static_cast<double>(zero);
        t = std::min(std::max(t, 0.0), static_cast<double>(qmax));
        out[i] = static_cast<std::int32_t>(t);
    }
}

void dequantize_avx2(const std::int32_t* q, double* out, std::size_t n,
                     double scale, std::int32_t zero) {
    const __m256d vs = _mm256_set1_pd(scale);
    const __m128i vz = _mm_set1_epi32(zero);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m128i vq = _mm_loadu_si128(reinterpret_cast<const __m128i*>(q + i));
        __m256d d = _mm256_cvtepi32_pd(_mm_sub_epi32(vq, vz));
        _mm256_storeu_pd(out + i, _mm256_mul_pd(vs, d));
    }
    for (; i < n; ++i) out[i] = scale * static_cast<double>(q[i] - zero);
}

const Ops kAvx2{matmul_avx2, hadamard_avx2, affine_quantize_avx2,
                dequantize_avx2};

} // namespace

const Ops* avx2_ops() {
    return __builtin_cpu_supports("avx2") ? &kAvx2 : nullptr;
}

#else

const Ops* avx2_ops() { return nullptr; }

#endif

} // namespace intlora::kernels
