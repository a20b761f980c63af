#pragma once

#include <cstdint>
#include <vector>

#include "intlora/matrix.hpp"
#include "intlora/quantize.hpp"
#include "intlora/sampling.hpp"

namespace intlora {

// Quantized base weights plus the recipe to regenerate the scaled auxiliary
// matrix R* = r^alpha ⊙ R. No dense real R is ever stored.
struct QuantizedBase {
    UniformQuantized base;  // quantization of W - R*
    AuxiliarySpec aux;
    std::vector<double> aux_ratio;        // per-row r^alpha
    std::vector<std::uint8_t> vmc_degenerate;  // rows where r fell back to 1
    std::size_t rows() const { return base.rows; }
    std::size_t cols() const { return base.cols; }
};

struct LowRankPair {
    Matrix a;  // C_out x d
    Matrix b;  // d x C_in
    double lora_scale = 1.0;

    // A from a zero-mean Gaussian (std 0.02), B zero, so AB = 0 at init
    // while gradient flow through A stays nonzero.
    static LowRankPair init(std::size_t rows, std::size_t cols, std::size_t rank,
                            std::uint64_t seed, double lora_scale = 1.0);
    Matrix product() const { return matmul(a, b); }
    std::size_t rank() const { return a.cols(); }
};

struct VmcResult {
    Matrix r_star;
    std::vector<double> aux_ratio;
    std::vector<std::uint8_t> degenerate;
};

// Samples R from the spec, computes the per-row ratio r between W and R in
// the spec's variance mode, and returns R* = r^alpha ⊙ R. Rows where the
// ratio is undefined fall back to r = 1 and are flagged.
VmcResult vmc_scale(const Matrix& w, const AuxiliarySpec& spec);

QuantizedBase aqs_preprocess(const Matrix& w, const AuxiliarySpec& spec, int bits);

// R* rebuilt from (spec, aux_ratio); bit-identical to the pre-quantization one.
Matrix regenerate_aux(const QuantizedBase& qb);

// V = s·I + (R* + lambda·AB) ⊘ (W_round - z). Entries with a zero
// denominator are set to 0; they are unobservable in the merged product.
Matrix adaptation_term(const QuantizedBase& qb, const LowRankPair& lr);

// Number of entries with W_round == z.
std::size_t zero_denominator_count(const QuantizedBase& qb);

enum class MergeVariant : std::uint8_t { Mul = 0, Shift = 1 };

// Deployment-ready integer weights. No real-valued weight matrix is stored;
// the only reals are per-row scales (MUL) or the constant 2^-N (SHIFT).
struct MergedWeights {
    MergeVariant variant = MergeVariant::Mul;
    std::vector<std::int32_t> base_ints;
    std::vector<std::int32_t> base_zero;  // per row
    int base_bits = 8;
    std::size_t rows = 0;
    std::size_t cols = 0;
    UniformQuantized adapt;  // MUL: quantized adaptation term (s̄, z̄)
    ShiftCode code;          // SHIFT
    int headroom = 32;       // SHIFT: N
};

MergedWeights merge_mul(const QuantizedBase& qb, const LowRankPair& lr,
                        int adapt_bits, Granularity granularity = Granularity::PerChannel);

// Requires headroom >= 2^shift_bits - 1 so every shifted product is exact.
MergedWeights merge_shift(const QuantizedBase& qb, const LowRankPair& lr,
                          int shift_bits, int headroom = 32);

// Pure integer part of the merged weights:
// MUL: (U_round - z̄)(W_round - z); SHIFT: sign * ((W_round - z) << (N - shift)).
std::vector<std::int64_t> merged_int_product(const MergedWeights& m);

// Real view of the merged weights (per-row s̄ or 2^-N applied).
Matrix dequantize_merged(const MergedWeights& m);

// Additive-form merged weights Q(W - R*) + R* + lambda·AB in real arithmetic;
// the oracle the multiplicative path must match.
Matrix additive_reference(const Matrix& w, const AuxiliarySpec& spec,
                          const LowRankPair& lr, int bits);

// Analytic correlation sigma_w / sqrt(sigma_w^2 + sigma_r^2).
double correlation_diag(double sigma_w, double sigma_r);

// Pearson correlation between quant-dequant(w - r) and w over a sampled
// Gaussian ensemble.
double empirical_correlation(double sigma_w, double sigma_r, int bits,
                             std::size_t samples, std::uint64_t seed);

struct ExpectationEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

// Monte-Carlo estimate of E[s·w / (w - r)] with r scaled by the multiplier.
ExpectationEstimate expectation_diag(const AuxiliarySpec& spec_w,
                                     const AuxiliarySpec& spec_r,
                                     double sigma_r_multiplier,
                                     std::size_t samples, int bits = 8);

} // namespace intlora
