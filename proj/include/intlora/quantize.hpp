#pragma once

#include <cstdint>
#include <vector>

#include "intlora/matrix.hpp"

namespace intlora {

enum class Granularity : std::uint8_t { PerChannel = 0, PerTensor = 1 };

// Uniform affine quantization result. Scale and zero-point are kept per row;
// PerTensor quantization replicates the single pair across rows.
struct UniformQuantized {
    std::vector<std::int32_t> ints;  // row-major, each entry in [0, 2^bits - 1]
    std::vector<double> scale;       // one per row, > 0
    std::vector<std::int32_t> zero_point;
    std::vector<std::uint8_t> degenerate;  // per-row: constant input row, s := 1
    int bits = 8;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

// Log2 code: value ~ sign * 2^(-shift). sign(0) := +1 and shift saturates to
// 2^bits - 1 for zero inputs.
struct ShiftCode {
    std::vector<std::int8_t> sign;   // entries in {-1, +1}
    std::vector<std::int32_t> shift; // entries in [0, 2^bits - 1]
    int bits = 4;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

// s = (max - min) / (2^b - 1), z = -round(min / s),
// ints = clip(round(X / s) + z, 0, 2^b - 1).
UniformQuantized uniform_quantize(const Matrix& x, int bits, Granularity granularity);

// s * (ints - z) with per-row broadcast.
Matrix dequantize(const UniformQuantized& q);

Matrix quant_dequant(const Matrix& x, int bits, Granularity granularity);

ShiftCode log2_shift(const Matrix& v, int bits);

// Reconstruct sign * 2^(-shift) as exact binary64 values.
Matrix shift_values(const ShiftCode& code);

// 4-bit packing: low nibble holds the earlier element, odd tail padded with 0.
std::vector<std::uint8_t> pack_nibbles(const std::vector<std::int32_t>& ints);
std::vector<std::int32_t> unpack_nibbles(const std::vector<std::uint8_t>& bytes,
                                         std::size_t count);

// Packed byte count for an integer payload at a given bit-width
// (nibble-packed when bits <= 4, one byte per value for 5..8).
std::size_t packed_size(std::size_t count, int bits);
std::vector<std::uint8_t> pack_payload(const std::vector<std::int32_t>& ints, int bits);
std::vector<std::int32_t> unpack_payload(const std::vector<std::uint8_t>& bytes,
                                         std::size_t count, int bits);

// Per-tensor activation quantization with the zero-point folded into the
// integer term: x ~ scale * q with q = ints - z (entries may be negative).
struct ActQuant {
    std::vector<std::int32_t> q;
    double scale = 1.0;
    bool degenerate = false;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

ActQuant act_quantize(const Matrix& x, int bits);
Matrix act_dequantize(const ActQuant& a);

} // namespace intlora
