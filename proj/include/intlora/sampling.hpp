#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "intlora/matrix.hpp"

namespace intlora {

enum class Distribution : std::uint8_t { Gaussian = 0, Laplace = 1, Cauchy = 2, StudentT = 3 };
enum class VarianceMode : std::uint8_t { TrueVariance = 0, RangeSurrogate = 1 };

Distribution distribution_from_name(const std::string& name);
std::string distribution_name(Distribution d);
VarianceMode variance_mode_from_name(const std::string& name);
std::string variance_mode_name(VarianceMode m);

// Recipe for a seed-regenerable auxiliary matrix. Same (spec, shape) always
// yields a bit-identical matrix.
struct AuxiliarySpec {
    Distribution distribution = Distribution::Laplace;
    std::uint64_t seed = 0;
    double dof = 3.0;     // StudentT only
    double alpha = 1.5;   // smoothing exponent applied as r^alpha
    VarianceMode variance_mode = VarianceMode::RangeSurrogate;
};

// i.i.d. entries with unit scale parameter and location 0.
Matrix sample_matrix(const AuxiliarySpec& spec, std::size_t rows, std::size_t cols);

// Whether the matrix being measured is a weight (numerator of the range
// ratio) or the auxiliary matrix (denominator). Only affects RangeSurrogate.
enum class StatRole { Weight, Auxiliary };

// TrueVariance: per-row sample standard deviation (n-1 denominator).
// RangeSurrogate: per-row max{|max|,|min|} for weights, min{|max|,|min|}
// for auxiliary matrices. An all-constant row yields 0 under TrueVariance.
std::vector<double> channel_stats(const Matrix& m, VarianceMode mode,
                                  StatRole role = StatRole::Weight);

// Deterministic stream of samples, used where a matrix shape is overkill
// (Monte-Carlo diagnostics). Shares the transforms with sample_matrix.
class SampleStream {
public:
    SampleStream(Distribution d, std::uint64_t seed, double dof = 3.0);
    ~SampleStream();
    SampleStream(SampleStream&&) noexcept;
    SampleStream& operator=(SampleStream&&) noexcept;
    double next();

private:
    struct Impl;
    Impl* impl_;
};

} // namespace intlora
