#include "intlora/quantize.hpp"

#include <algorithm>
#include <cmath>

#include "intlora/kernels.hpp"

namespace intlora {

namespace {

void check_bits(int bits) {
    if (bits < 2 || bits > 8) throw ConfigError("bit-width must be in [2, 8]");
}

struct RowParams {
    double scale;
    std::int32_t zero;
    bool degenerate;
};

RowParams affine_params(const double* x, std::size_t n, int bits) {
    double lo = x[0];
    double hi = x[0];
    for (std::size_t j = 1; j < n; ++j) {
        lo = std::min(lo, x[j]);
        hi = std::max(hi, x[j]);
    }
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        throw NumericError("quantize: input contains non-finite values");
    }
    if (hi == lo) {
        // Constant input; s = 0 would make X/s infinite.
        return {1.0, static_cast<std::int32_t>(-std::nearbyint(lo)), true};
    }
    const double qmax = static_cast<double>((1 << bits) - 1);
    const double s = (hi - lo) / qmax;
    const std::int32_t z = static_cast<std::int32_t>(-std::nearbyint(lo / s));
    return {s, z, false};
}

} // namespace

UniformQuantized uniform_quantize(const Matrix& x, int bits, Granularity granularity) {
    check_bits(bits);
    UniformQuantized q;
    q.bits = bits;
    q.rows = x.rows();
    q.cols = x.cols();
    q.ints.resize(x.size());
    q.scale.resize(x.rows());
    q.zero_point.resize(x.rows());
    q.degenerate.resize(x.rows());
    const std::int32_t qmax = (1 << bits) - 1;
    const auto& k = kernels::ops();
    if (granularity == Granularity::PerTensor) {
        const RowParams p = affine_params(x.data(), x.size(), bits);
        k.affine_quantize(x.data(), q.ints.data(), x.size(), p.scale, p.zero, qmax);
        std::fill(q.scale.begin(), q.scale.end(), p.scale);
        std::fill(q.zero_point.begin(), q.zero_point.end(), p.zero);
        std::fill(q.degenerate.begin(), q.degenerate.end(),
                  static_cast<std::uint8_t>(p.degenerate));
        return q;
    }
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* row = x.data() + i * x.cols();
        const RowParams p = affine_params(row, x.cols(), bits);
        k.affine_quantize(row, q.ints.data() + i * x.cols(), x.cols(), p.scale,
                          p.zero, qmax);
        q.scale[i] = p.scale;
        q.zero_point[i] = p.zero;
        q.degenerate[i] = static_cast<std::uint8_t>(p.degenerate);
    }
    return q;
}

Matrix dequantize(const UniformQuantized& q) {
    Matrix out(q.rows, q.cols);
    const auto& k = kernels::ops();
    for (std::size_t i = 0; i < q.rows; ++i) {
        k.dequantize(q.ints.data() + i * q.cols, out.data() + i * q.cols, q.cols,
                     q.scale[i], q.zero_point[i]);
    }
    return out;
}

Matrix quant_dequant(const Matrix& x, int bits, Granularity granularity) {
    return dequantize(uniform_quantize(x, bits, granularity));
}

ShiftCode log2_shift(const Matrix& v, int bits) {
    check_bits(bits);
    ShiftCode code;
    code.bits = bits;
    code.rows = v.rows();
    code.cols = v.cols();
    code.sign.resize(v.size());
    code.shift.resize(v.size());
    const double qmax = static_cast<double>((1 << bits) - 1);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double val = v.data()[i];
        if (!std::isfinite(val)) throw NumericError("log2_shift: non-finite input");
        if (val == 0.0) {
            // Saturate to the smallest representable magnitude.
            code.sign[i] = 1;
            code.shift[i] = static_cast<std::int32_t>(qmax);
            continue;
        }
        code.sign[i] = val < 0.0 ? -1 : 1;
        double t = std::nearbyint(-std::log2(std::abs(val)));
        t = std::min(std::max(t, 0.0), qmax);
        code.shift[i] = static_cast<std::int32_t>(t);
    }
    return code;
}

Matrix shift_values(const ShiftCode& code) {
    Matrix out(code.rows, code.cols);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] = static_cast<double>(code.sign[i]) *
                        std::ldexp(1.0, -code.shift[i]);
    }
    return out;
}

std::vector<std::uint8_t> pack_nibbles(const std::vector<std::int32_t>& ints) {
    std::vector<std::uint8_t> bytes((ints.size() + 1) / 2, 0);
    for (std::size_t i = 0; i < ints.size(); ++i) {
        const std::int32_t v = ints[i];
        if (v < 0 || v > 15) throw EncodingError("pack_nibbles: entry outside [0, 15]");
        bytes[i / 2] |= static_cast<std::uint8_t>(v) << ((i % 2) * 4);
    }
    return bytes;
}

std::vector<std::int32_t> unpack_nibbles(const std::vector<std::uint8_t>& bytes,
                                         std::size_t count) {
    if (bytes.size() != (count + 1) / 2) {
        throw EncodingError("unpack_nibbles: byte count does not match element count");
    }
    std::vector<std::int32_t> ints(count);
    for (std::size_t i = 0; i < count; ++i) {
        ints[i] = (bytes[i / 2] >> ((i % 2) * 4)) & 0x0F;
    }
    return ints;
}

std::size_t packed_size(std::size_t count, int bits) {
    if (bits <= 4) return (count + 1) / 2;
    if (bits <= 8) return count;
    throw EncodingError("packed_size: unsupported bit-width");
}

std::vector<std::uint8_t> pack_payload(const std::vector<std::int32_t>& ints, int bits) {
    if (bits <= 4) return pack_nibbles(ints);
    if (bits > 8) throw EncodingError("pack_payload: unsupported bit-width");
    std::vector<std::uint8_t> bytes(ints.size());
    for (std::size_t i = 0; i < ints.size(); ++i) {
        if (ints[i] < 0 || ints[i] > 255) {
            throw EncodingError("pack_payload: entry outside byte range");
        }
        bytes[i] = static_cast<std::uint8_t>(ints[i]);
    }
    return bytes;
}

std::vector<std::int32_t> unpack_payload(const std::vector<std::uint8_t>& bytes,
                                         std::size_t count, int bits) {
    if (bits <= 4) return unpack_nibbles(bytes, count);
    if (bits > 8 || bytes.size() != count) {
        throw EncodingError("unpack_payload: bad payload length");
    }
    std::vector<std::int32_t> ints(count);
    for (std::size_t i = 0; i < count; ++i) ints[i] = bytes[i];
    return ints;
}

ActQuant act_quantize(const Matrix& x, int bits) {
    const UniformQuantized q = uniform_quantize(x, bits, Granularity::PerTensor);
    ActQuant a;
    a.scale = q.scale[0];
    a.degenerate = q.degenerate[0] != 0;
    a.rows = q.rows;
    a.cols = q.cols;
    a.q.resize(q.ints.size());
    const std::int32_t z = q.zero_point[0];
    for (std::size_t i = 0; i < q.ints.size(); ++i) a.q[i] = q.ints[i] - z;
    return a;
}

Matrix act_dequantize(const ActQuant& a) {
    Matrix out(a.rows, a.cols);
    kernels::ops().dequantize(a.q.data(), out.data(), a.q.size(), a.scale, 0);
    return out;
}

} // namespace intlora
