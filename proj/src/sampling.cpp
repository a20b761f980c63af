#include "intlora/sampling.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace intlora {

namespace {

// mt19937_64 output is fully specified by the standard; the transforms below
// are hand-rolled so that samples are bit-identical across toolchains
// (std::normal_distribution and friends are implementation-defined).
class Sampler {
public:
    Sampler(Distribution d, std::uint64_t seed, double dof)
        : dist_(d), dof_(dof), gen_(seed) {}

    double next() {
        switch (dist_) {
            case Distribution::Gaussian: return next_gaussian();
            case Distribution::Laplace: return next_laplace();
            case Distribution::Cauchy: return next_cauchy();
            case Distribution::StudentT: return next_student_t();
        }
        throw ConfigError("unknown distribution tag");
    }

private:
    // Uniform in the open interval (0, 1).
    double next_unit() {
        return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_unit();
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double next_laplace() {
        const double u = next_unit();
        return u < 0.5 ? std::log(2.0 * u) : -std::log(2.0 * (1.0 - u));
    }

    double next_cauchy() {
        return std::tan(std::numbers::pi * (next_unit() - 0.5));
    }

    // Marsaglia-Tsang; for a < 1 boosted via G(a) = G(a+1) * U^(1/a).
    double next_gamma(double a) {
        if (a < 1.0) {
            const double g = next_gamma(a + 1.0);
            return g * std::pow(next_unit(), 1.0 / a);
        }
        const double d = a - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x;
            double v;
            do {
                x = next_gaussian();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = next_unit();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    double next_student_t() {
        const double z = next_gaussian();
        const double chi2 = 2.0 * next_gamma(dof_ / 2.0);
        return z / std::sqrt(chi2 / dof_);
    }

    Distribution dist_;
    double dof_;
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace

Distribution distribution_from_name(const std::string& name) {
    if (name == "gaussian") return Distribution::Gaussian;
    if (name == "laplace") return Distribution::Laplace;
    if (name == "cauchy") return Distribution::Cauchy;
    if (name == "studentt") return Distribution::StudentT;
    throw ConfigError("unknown distribution: " + name);
}

std::string distribution_name(Distribution d) {
    switch (d) {
        case Distribution::Gaussian: return "gaussian";
        case Distribution::Laplace: return "laplace";
        case Distribution::Cauchy: return "cauchy";
        case Distribution::StudentT: return "studentt";
    }
    throw ConfigError("unknown distribution tag");
}

VarianceMode variance_mode_from_name(const std::string& name) {
    if (name == "variance") return VarianceMode::TrueVariance;
    if (name == "range") return VarianceMode::RangeSurrogate;
    throw ConfigError("unknown variance mode: " + name);
}

std::string variance_mode_name(VarianceMode m) {
    return m == VarianceMode::TrueVariance ? "variance" : "range";
}

Matrix sample_matrix(const AuxiliarySpec& spec, std::size_t rows, std::size_t cols) {
    if (spec.distribution != Distribution::Gaussian &&
        spec.distribution != Distribution::Laplace &&
        spec.distribution != Distribution::Cauchy &&
        spec.distribution != Distribution::StudentT) {
        throw ConfigError("unknown distribution tag");
    }
    Sampler sampler(spec.distribution, spec.seed, spec.dof);
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = sampler.next();
    return m;
}

std::vector<double> channel_stats(const Matrix& m, VarianceMode mode, StatRole role) {
    std::vector<double> out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double* row = m.data() + i * m.cols();
        const std::size_t n = m.cols();
        if (mode == VarianceMode::TrueVariance) {
            double mean = 0.0;
            for (std::size_t j = 0; j < n; ++j) mean += row[j];
            mean /= static_cast<double>(n);
            double ss = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double d = row[j] - mean;
                ss += d * d;
            }
            out[i] = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
        } else {
            double lo = row[0];
            double hi = row[0];
            for (std::size_t j = 1; j < n; ++j) {
                lo = std::min(lo, row[j]);
                hi = std::max(hi, row[j]);
            }
            const double a = std::abs(hi);
            const double b = std::abs(lo);
            out[i] = role == StatRole::Weight ? std::max(a, b) : std::min(a, b);
        }
    }
    return out;
}

struct SampleStream::Impl {
    Sampler sampler;
};

SampleStream::SampleStream(Distribution d, std::uint64_t seed, double dof)
    : impl_(new Impl{Sampler(d, seed, dof)}) {}

SampleStream::~SampleStream() { delete impl_; }

SampleStream::SampleStream(SampleStream&& other) noexcept : impl_(other.impl_) {
    other.impl_ = nullptr;
}

SampleStream& SampleStream::operator=(SampleStream&& other) noexcept {
    if (this != &other) {
        delete impl_;
        impl_ = other.impl_;
        other.impl_ = nullptr;
    }
    return *this;
}

double SampleStream::next() { return impl_->sampler.next(); }

} // namespace intlora
