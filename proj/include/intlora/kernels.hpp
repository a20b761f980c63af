#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace intlora::kernels {

// Data-parallel inner loops used throughout the library. Every backend must
// produce bit-identical results to the scalar reference: the AVX2 variants
// keep the scalar operation order per output element and use separate
// mul/add (no FMA contraction).
struct Ops {
    // c (m x n) = a (m x k) * b (k x n), row-major, c overwritten.
    void (*matmul)(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);
    // c[i] = a[i] * b[i]
    void (*hadamard)(const double* a, const double* b, double* c, std::size_t n);
    // out[i] = clip(nearbyint(x[i] / scale) + zero, 0, qmax)
    void (*affine_quantize)(const double* x, std::int32_t* out, std::size_t n,
                            double scale, std::int32_t zero, std::int32_t qmax);
    // out[i] = scale * (q[i] - zero)
    void (*dequantize)(const std::int32_t* q, double* out, std::size_t n,
                       double scale, std::int32_t zero);
};

enum class Backend { Scalar, Avx2 };

// Active kernel set, chosen once per process: AVX2 when the CPU supports it,
// overridable with INTLORA_KERNEL=scalar|avx2.
const Ops& ops();
Backend active_backend();
std::string_view backend_name(Backend b);

// Always available, for equivalence testing against the dispatched set.
const Ops& scalar_ops();
// Null when the build target or CPU lacks AVX2.
const Ops* avx2_ops();

} // namespace intlora::kernels
