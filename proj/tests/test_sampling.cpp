#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "intlora/sampling.hpp"

using namespace intlora;

namespace {

double moment(const Matrix& m, int k, double center = 0.0) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        acc += std::pow(m.data()[i] - center, k);
    }
    return acc / static_cast<double>(m.size());
}

} // namespace

TEST_CASE("name round trips") {
    for (auto d : {Distribution::Gaussian, Distribution::Laplace, Distribution::Cauchy,
                   Distribution::StudentT}) {
        CHECK(distribution_from_name(distribution_name(d)) == d);
    }
    for (auto m : {VarianceMode::TrueVariance, VarianceMode::RangeSurrogate}) {
        CHECK(variance_mode_from_name(variance_mode_name(m)) == m);
    }
    CHECK_THROWS_AS(distribution_from_name("weibull"), ConfigError);
    CHECK_THROWS_AS(variance_mode_from_name("stddev"), ConfigError);
}

TEST_CASE("same spec yields bit-identical matrices") {
    AuxiliarySpec spec;
    spec.distribution = Distribution::Laplace;
    spec.seed = 1234;
    const Matrix a = sample_matrix(spec, 17, 23);
    const Matrix b = sample_matrix(spec, 17, 23);
    CHECK(a.values() == b.values());

    spec.seed = 1235;
    const Matrix c = sample_matrix(spec, 17, 23);
    CHECK(a.values() != c.values());
}

TEST_CASE("gaussian sample moments") {
    AuxiliarySpec spec;
    spec.distribution = Distribution::Gaussian;
    spec.seed = 7;
    const Matrix m = sample_matrix(spec, 400, 400);
    CHECK(std::abs(moment(m, 1)) < 0.01);
    CHECK(moment(m, 2) == doctest::Approx(1.0).epsilon(0.02));
    // Excess kurtosis of a Gaussian is 0.
    CHECK(std::abs(moment(m, 4) / (moment(m, 2) * moment(m, 2)) - 3.0) < 0.1);
}

TEST_CASE("laplace has excess kurtosis near 3") {
    AuxiliarySpec spec;
    spec.distribution = Distribution::Laplace;
    spec.seed = 7;
    const Matrix m = sample_matrix(spec, 400, 400);
    CHECK(std::abs(moment(m, 1)) < 0.02);
    // Unit scale parameter: Var = 2b^2 = 2.
    CHECK(moment(m, 2) == doctest::Approx(2.0).epsilon(0.05));
    const double kurt = moment(m, 4) / (moment(m, 2) * moment(m, 2)) - 3.0;
    CHECK(kurt == doctest::Approx(3.0).epsilon(0.2));
}

TEST_CASE("cauchy produces extreme outliers gaussian never would") {
    AuxiliarySpec spec;
    spec.distribution = Distribution::Cauchy;
    spec.seed = 3;
    const Matrix m = sample_matrix(spec, 100, 100);
    std::size_t extreme = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (std::abs(m.data()[i]) > 10.0) ++extreme;
    }
    // P(|Cauchy| > 10) ~ 6.3%, so 10k samples yield hundreds.
    CHECK(extreme > 300);
    CHECK(extreme < 1000);
}

TEST_CASE("student-t variance depends on dof") {
    AuxiliarySpec spec;
    spec.distribution = Distribution::StudentT;
    spec.seed = 5;
    spec.dof = 8.0;
    const Matrix m = sample_matrix(spec, 400, 400);
    // Var = dof / (dof - 2) = 8/6.
    CHECK(moment(m, 2) == doctest::Approx(8.0 / 6.0).epsilon(0.05));
}

TEST_CASE("channel_stats true variance") {
    const Matrix m(2, 4, {1, 2, 3, 4, 5, 5, 5, 5});
    const auto s = channel_stats(m, VarianceMode::TrueVariance);
    // Sample std of {1,2,3,4} = sqrt(5/3).
    CHECK(s[0] == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-12));
    CHECK(s[1] == 0.0);  // constant row

    const Matrix alt(1, 4, {1, -1, 1, -1});
    CHECK(channel_stats(alt, VarianceMode::TrueVariance)[0] ==
          doctest::Approx(1.1547005383792515).epsilon(1e-12));
}

TEST_CASE("channel_stats range surrogate differs by role") {
    const Matrix m(1, 2, {-2, 3});
    CHECK(channel_stats(m, VarianceMode::RangeSurrogate, StatRole::Weight)[0] == 3.0);
    CHECK(channel_stats(m, VarianceMode::RangeSurrogate, StatRole::Auxiliary)[0] == 2.0);

    const Matrix neg(1, 3, {-5, -1, -4});
    CHECK(channel_stats(neg, VarianceMode::RangeSurrogate, StatRole::Weight)[0] == 5.0);
    CHECK(channel_stats(neg, VarianceMode::RangeSurrogate, StatRole::Auxiliary)[0] == 1.0);
}

TEST_CASE("sample stream matches matrix generation") {
    AuxiliarySpec spec;
    spec.distribution = Distribution::Gaussian;
    spec.seed = 99;
    const Matrix m = sample_matrix(spec, 4, 8);
    SampleStream stream(Distribution::Gaussian, 99);
    for (std::size_t i = 0; i < m.size(); ++i) {
        CHECK(stream.next() == m.data()[i]);
    }
}
