#include "intlora/adapt.hpp"

#include <cmath>

namespace intlora {

LowRankPair LowRankPair::init(std::size_t rows, std::size_t cols, std::size_t rank,
                              std::uint64_t seed, double lora_scale) {
    if (rank == 0) throw ConfigError("adapter rank must be positive");
    AuxiliarySpec g;
    g.distribution = Distribution::Gaussian;
    g.seed = seed;
    LowRankPair lr;
    lr.a = scaled(sample_matrix(g, rows, rank), 0.02);
    lr.b = Matrix(rank, cols, 0.0);
    lr.lora_scale = lora_scale;
    return lr;
}

VmcResult vmc_scale(const Matrix& w, const AuxiliarySpec& spec) {
    if (spec.alpha < 0.0) throw ConfigError("vmc alpha must be >= 0");
    const Matrix r = sample_matrix(spec, w.rows(), w.cols());
    const std::vector<double> stat_w =
        channel_stats(w, spec.variance_mode, StatRole::Weight);
    const std::vector<double> stat_r =
        channel_stats(r, spec.variance_mode, StatRole::Auxiliary);
    VmcResult out;
    out.aux_ratio.resize(w.rows());
    out.degenerate.resize(w.rows());
    out.r_star = Matrix(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.rows(); ++i) {
        double ratio;
        if (stat_r[i] == 0.0 || stat_w[i] == 0.0) {
            ratio = 1.0;
            out.degenerate[i] = 1;
        } else {
            ratio = stat_w[i] / stat_r[i];
            out.degenerate[i] = 0;
        }
        out.aux_ratio[i] = std::pow(ratio, spec.alpha);
        for (std::size_t j = 0; j < w.cols(); ++j) {
            out.r_star(i, j) = out.aux_ratio[i] * r(i, j);
        }
    }
    return out;
}

QuantizedBase aqs_preprocess(const Matrix& w, const AuxiliarySpec& spec, int bits) {
    if (!w.all_finite()) throw NumericError("aqs_preprocess: weights not finite");
    VmcResult vmc = vmc_scale(w, spec);
    QuantizedBase qb;
    qb.base = uniform_quantize(sub(w, vmc.r_star), bits, Granularity::PerChannel);
    qb.aux = spec;
    qb.aux_ratio = std::move(vmc.aux_ratio);
    qb.vmc_degenerate = std::move(vmc.degenerate);
    return qb;
}

Matrix regenerate_aux(const QuantizedBase& qb) {
    Matrix r = sample_matrix(qb.aux, qb.rows(), qb.cols());
    for (std::size_t i = 0; i < qb.rows(); ++i) {
        const double ratio = qb.aux_ratio[i];
        for (std::size_t j = 0; j < qb.cols(); ++j) r(i, j) *= ratio;
    }
    return r;
}

Matrix adaptation_term(const QuantizedBase& qb, const LowRankPair& lr) {
    if (lr.a.rows() != qb.rows() || lr.b.cols() != qb.cols()) {
        throw ShapeError("adaptation_term: adapter shape does not match base");
    }
    const Matrix r_star = regenerate_aux(qb);
    const Matrix ab = lr.product();
    Matrix v(qb.rows(), qb.cols());
    for (std::size_t i = 0; i < qb.rows(); ++i) {
        const double s = qb.base.scale[i];
        const std::int32_t z = qb.base.zero_point[i];
        for (std::size_t j = 0; j < qb.cols(); ++j) {
            const std::size_t idx = i * qb.cols() + j;
            const std::int32_t d = qb.base.ints[idx] - z;
            if (d == 0) {
                v.data()[idx] = 0.0;
                continue;
            }
            v.data()[idx] = s + (r_star.data()[idx] + lr.lora_scale * ab.data()[idx]) /
                                    static_cast<double>(d);
        }
    }
    return v;
}

std::size_t zero_denominator_count(const QuantizedBase& qb) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < qb.rows(); ++i) {
        const std::int32_t z = qb.base.zero_point[i];
        for (std::size_t j = 0; j < qb.cols(); ++j) {
            if (qb.base.ints[i * qb.cols() + j] == z) ++count;
        }
    }
    return count;
}

MergedWeights merge_mul(const QuantizedBase& qb, const LowRankPair& lr,
                        int adapt_bits, Granularity granularity) {
    MergedWeights m;
    m.variant = MergeVariant::Mul;
    m.base_ints = qb.base.ints;
    m.base_zero = qb.base.zero_point;
    m.base_bits = qb.base.bits;
    m.rows = qb.rows();
    m.cols = qb.cols();
    m.adapt = uniform_quantize(adaptation_term(qb, lr), adapt_bits, granularity);
    return m;
}

MergedWeights merge_shift(const QuantizedBase& qb, const LowRankPair& lr,
                          int shift_bits, int headroom) {
    if (headroom < (1 << shift_bits) - 1) {
        throw ConfigError("merge_shift: headroom N must be >= 2^bits - 1");
    }
    if (headroom > 52) {
        // 2^-N must stay an exact binary64 multiple of the shifted product.
        throw ConfigError("merge_shift: headroom N must be <= 52");
    }
    MergedWeights m;
    m.variant = MergeVariant::Shift;
    m.base_ints = qb.base.ints;
    m.base_zero = qb.base.zero_point;
    m.base_bits = qb.base.bits;
    m.rows = qb.rows();
    m.cols = qb.cols();
    m.code = log2_shift(adaptation_term(qb, lr), shift_bits);
    m.headroom = headroom;
    return m;
}

std::vector<std::int64_t> merged_int_product(const MergedWeights& m) {
    std::vector<std::int64_t> out(m.rows * m.cols);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const std::int64_t z = m.base_zero[i];
        for (std::size_t j = 0; j < m.cols; ++j) {
            const std::size_t idx = i * m.cols + j;
            const std::int64_t d = static_cast<std::int64_t>(m.base_ints[idx]) - z;
            if (m.variant == MergeVariant::Mul) {
                const std::int64_t u = static_cast<std::int64_t>(m.adapt.ints[idx]) -
                                       m.adapt.zero_point[i];
                out[idx] = u * d;
            } else {
                const int up = m.headroom - m.code.shift[idx];
                out[idx] = static_cast<std::int64_t>(m.code.sign[idx]) * (d << up);
            }
        }
    }
    return out;
}

Matrix dequantize_merged(const MergedWeights& m) {
    const std::vector<std::int64_t> prod = merged_int_product(m);
    Matrix out(m.rows, m.cols);
    if (m.variant == MergeVariant::Mul) {
        for (std::size_t i = 0; i < m.rows; ++i) {
            const double s = m.adapt.scale[i];
            for (std::size_t j = 0; j < m.cols; ++j) {
                const std::size_t idx = i * m.cols + j;
                out.data()[idx] = s * static_cast<double>(prod[idx]);
            }
        }
    } else {
        for (std::size_t idx = 0; idx < out.size(); ++idx) {
            out.data()[idx] = std::ldexp(static_cast<double>(prod[idx]), -m.headroom);
        }
    }
    return out;
}

Matrix additive_reference(const Matrix& w, const AuxiliarySpec& spec,
                          const LowRankPair& lr, int bits) {
    const QuantizedBase qb = aqs_preprocess(w, spec, bits);
    Matrix out = add(dequantize(qb.base), regenerate_aux(qb));
    return add(out, scaled(lr.product(), lr.lora_scale));
}

double correlation_diag(double sigma_w, double sigma_r) {
    if (sigma_w <= 0.0 || sigma_r < 0.0) {
        throw NumericError("correlation_diag: sigma_w must be > 0, sigma_r >= 0");
    }
    return sigma_w / std::sqrt(sigma_w * sigma_w + sigma_r * sigma_r);
}

double empirical_correlation(double sigma_w, double sigma_r, int bits,
                             std::size_t samples, std::uint64_t seed) {
    if (sigma_w <= 0.0 || sigma_r < 0.0) {
        throw NumericError("empirical_correlation: non-positive sigma");
    }
    SampleStream gw(Distribution::Gaussian, seed);
    SampleStream gr(Distribution::Gaussian, seed ^ 0x9e3779b97f4a7c15ULL);
    Matrix w(1, samples);
    Matrix diff(1, samples);
    for (std::size_t i = 0; i < samples; ++i) {
        const double wi = sigma_w * gw.next();
        const double ri = sigma_r * gr.next();
        w.data()[i] = wi;
        diff.data()[i] = wi - ri;
    }
    const Matrix q = quant_dequant(diff, bits, Granularity::PerTensor);
    double mw = 0.0;
    double mq = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        mw += w.data()[i];
        mq += q.data()[i];
    }
    mw /= static_cast<double>(samples);
    mq /= static_cast<double>(samples);
    double num = 0.0;
    double dw = 0.0;
    double dq = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        const double a = w.data()[i] - mw;
        const double b = q.data()[i] - mq;
        num += a * b;
        dw += a * a;
        dq += b * b;
    }
    return num / std::sqrt(dw * dq);
}

ExpectationEstimate expectation_diag(const AuxiliarySpec& spec_w,
                                     const AuxiliarySpec& spec_r,
                                     double sigma_r_multiplier,
                                     std::size_t samples, int bits) {
    SampleStream sw(spec_w.distribution, spec_w.seed, spec_w.dof);
    SampleStream sr(spec_r.distribution, spec_r.seed, spec_r.dof);
    std::vector<double> w(samples);
    std::vector<double> denom(samples);
    double lo = 0.0;
    double hi = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
        w[i] = sw.next();
        denom[i] = w[i] - sigma_r_multiplier * sr.next();
        if (i == 0) {
            lo = hi = denom[i];
        } else {
            lo = std::min(lo, denom[i]);
            hi = std::max(hi, denom[i]);
        }
    }
    const double qmax = static_cast<double>((1 << bits) - 1);
    const double s = hi > lo ? (hi - lo) / qmax : 1.0;
    double mean = 0.0;
    std::size_t n = 0;
    std::vector<double> terms;
    terms.reserve(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        if (denom[i] == 0.0) continue;
        const double t = s * w[i] / denom[i];
        terms.push_back(t);
        mean += t;
        ++n;
    }
    if (n == 0) return {0.0, 0.0};
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double t : terms) {
        const double d = t - mean;
        var += d * d;
    }
    var = n > 1 ? var / static_cast<double>(n - 1) : 0.0;
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

} // namespace intlora
