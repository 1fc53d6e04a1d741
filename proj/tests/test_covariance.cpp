#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"

#include "covmap/variogram.hpp"

using namespace covmap;
using namespace covmap::geostat;

TEST_CASE("gamma examples") {
    const VariogramModel sph{Structure::spherical, 0.0, 1.0, 10.0};
    CHECK(gamma(sph, 0.0) == 0.0);
    CHECK(gamma(sph, 10.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(gamma(sph, 5.0) == doctest::Approx(0.6875).epsilon(1e-15));
    CHECK(gamma(sph, 25.0) == 1.0);
    CHECK_THROWS_AS(gamma(sph, -1.0), std::invalid_argument);
    const VariogramModel nug{Structure::exponential, 0.5, 1.0, 10.0};
    CHECK(gamma(nug, 0.0) == 0.0);
    CHECK(gamma(nug, 1e-9) == doctest::Approx(0.5).epsilon(1e-6));
    // practical range: 95% of the structure reached at h = range
    CHECK(gamma(VariogramModel{Structure::exponential, 0, 1, 10}, 10.0) == doctest::Approx(1 - std::exp(-3.0)));
    CHECK(gamma(VariogramModel{Structure::gaussian, 0, 1, 10}, 10.0) == doctest::Approx(1 - std::exp(-3.0)));
}

TEST_CASE("covariance examples") {
    const VariogramModel m{Structure::spherical, 0.0, 2.0, 10.0};
    CHECK(covariance(m, 0.0) == 2.0);
    CHECK(covariance(m, 5.0) == doctest::Approx(0.625).epsilon(1e-15));
    CHECK(covariance(m, 10.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(covariance(m, 40.0) == 0.0);
    CHECK(cov_point(m, {0, 0}, {3, 4}) == cov_point(m, {3, 4}, {0, 0}));
}

TEST_CASE("gamma is non-decreasing and covariance bounded by C(0)") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Structure s : {Structure::spherical, Structure::exponential, Structure::gaussian}) {
        for (int trial = 0; trial < 50; ++trial) {
            const VariogramModel m{s, 2.0 * u(rng), 0.1 + 5.0 * u(rng), 0.5 + 30.0 * u(rng)};
            double prev = 0.0;
            for (int k = 0; k <= 200; ++k) {
                const double h = 0.25 * k;
                const double g = gamma(m, h);
                CHECK(g >= prev - 1e-15);
                CHECK(covariance(m, h) <= m.total_sill() + 1e-15);
                prev = g;
            }
            CHECK(gamma(m, 1e6) == doctest::Approx(m.total_sill()));
        }
    }
}

TEST_CASE("cov_block examples and symmetry") {
    const VariogramModel m{Structure::spherical, 0.0, 1.0, 10.0};
    const BlockSupport single{{{2.0, 3.0}}};
    CHECK(cov_block(m, single, Point{5.0, 7.0}) == cov_point(m, {2, 3}, {5, 7}));
    const BlockSupport twin{{{1.0, 1.0}, {1.0, 1.0}}};
    CHECK(cov_block(m, twin, twin) == doctest::Approx(1.0));
    const BlockSupport pair{{{0.0, 0.0}, {4.0, 0.0}}};
    const double c4 = 1.0 - (1.5 * 0.4 - 0.5 * 0.064);
    CHECK(cov_block(m, pair, Point{0.0, 0.0}) == doctest::Approx(0.5 * (1.0 + c4)).epsilon(1e-14));

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 20.0);
    for (int trial = 0; trial < 20; ++trial) {
        BlockSupport a, b;
        for (int i = 0; i < 1 + trial % 5; ++i) a.points.push_back({u(rng), u(rng)});
        for (int i = 0; i < 1 + trial % 3; ++i) b.points.push_back({u(rng), u(rng)});
        CHECK(cov_block(m, a, b) == doctest::Approx(cov_block(m, b, a)).epsilon(1e-14));
        const BlockSupport sa{{a.points[0]}}, sb{{b.points[0]}};
        CHECK(cov_block(m, sa, sb) == cov_point(m, a.points[0], b.points[0]));
    }
}

TEST_CASE("experimental variogram") {
    SUBCASE("equal values give zero") {
        std::vector<VariogramSample> s{{{0, 0}, 5.0, 10}, {{1, 0}, 5.0, 20}};
        const auto t = experimental_variogram(s, 2.0, 3);
        CHECK(t.bins[0].gamma == 0.0);
        CHECK(t.bins[0].pair_count == 1);
        CHECK(t.bins[1].empty());
    }
    SUBCASE("single pair cancels its weight") {
        std::vector<VariogramSample> s{{{0, 0}, 0.0, 7}, {{1, 0}, 2.0, 1000}};
        CHECK(experimental_variogram(s, 2.0, 1).bins[0].gamma == doctest::Approx(2.0));
    }
    SUBCASE("three samples against a brute-force weighted sum") {
        std::vector<VariogramSample> s{{{0, 0}, 1.0, 100}, {{1, 0}, 4.0, 300}, {{0, 1.5}, 2.5, 50}};
        const auto t = experimental_variogram(s, 2.0, 2);
        double num = 0, den = 0;
        for (int i = 0; i < 3; ++i)
            for (int j = i + 1; j < 3; ++j) {
                const double w = s[i].population * s[j].population / (s[i].population + s[j].population);
                const double d = s[i].value - s[j].value;
                num += w * d * d / 2.0;
                den += w;
            }
        CHECK(t.bins[0].pair_count == 3);
        CHECK(t.bins[0].gamma == doctest::Approx(num / den).epsilon(1e-14));
    }
    SUBCASE("adding a constant leaves the table unchanged") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> u(0.0, 10.0);
        std::vector<VariogramSample> s, shifted;
        for (int i = 0; i < 30; ++i) {
            s.push_back({{u(rng), u(rng)}, u(rng), 1 + u(rng) * 100});
            shifted.push_back(s.back());
            shifted.back().value += 123.0;
        }
        const auto a = experimental_variogram(s, 1.5, 8), b = experimental_variogram(shifted, 1.5, 8);
        for (std::size_t k = 0; k < a.bins.size(); ++k) {
            CHECK(a.bins[k].pair_count == b.bins[k].pair_count);
            CHECK(a.bins[k].gamma == doctest::Approx(b.bins[k].gamma).epsilon(1e-9));
        }
    }
    SUBCASE("merge pools pair sums") {
        std::vector<VariogramSample> a{{{0, 0}, 1.0, 10}, {{1, 0}, 3.0, 10}};
        std::vector<VariogramSample> b{{{0, 0}, 0.0, 10}, {{1, 0}, 4.0, 30}};
        auto ta = experimental_variogram(a, 2.0, 1);
        ta.merge(experimental_variogram(b, 2.0, 1));
        const double wa = 5.0, wb = 7.5;
        CHECK(ta.bins[0].pair_count == 2);
        CHECK(ta.bins[0].gamma == doctest::Approx((wa * 2.0 + wb * 8.0) / (wa + wb)));
    }
}

namespace {

ExperimentalVariogram table_from_model(const VariogramModel& m, int n_lags, double width) {
    ExperimentalVariogram t;
    t.lag_width = width;
    for (int k = 0; k < n_lags; ++k) {
        LagBin b;
        b.lag = (k + 0.5) * width;
        b.gamma = gamma(m, b.lag);
        b.pair_count = 10 + k;
        t.bins.push_back(b);
    }
    return t;
}

}  // namespace

TEST_CASE("variogram fit") {
    SUBCASE("noise-free spherical table recovered within 1%") {
        const VariogramModel truth{Structure::spherical, 0.0, 1.0, 10.0};
        const auto fit = fit_variogram(table_from_model(truth, 20, 1.0), Structure::spherical);
        CHECK(std::abs(fit.model.sill - 1.0) <= 0.01);
        CHECK(std::abs(fit.model.range_km - 10.0) <= 0.1);
        CHECK(fit.model.nugget <= 0.01);
        CHECK_FALSE(fit.degenerate);
    }
    SUBCASE("nugget and exponential structure") {
        const VariogramModel truth{Structure::exponential, 0.3, 2.0, 12.0};
        const auto fit = fit_variogram(table_from_model(truth, 25, 1.0), Structure::exponential);
        CHECK(fit.model.nugget == doctest::Approx(0.3).epsilon(0.01));
        CHECK(fit.model.sill == doctest::Approx(2.0).epsilon(0.01));
        CHECK(fit.model.range_km == doctest::Approx(12.0).epsilon(0.01));
    }
    SUBCASE("constant field falls to the sill floor with a warning") {
        std::vector<VariogramSample> samples;
        for (int i = 0; i < 10; ++i) samples.push_back({{static_cast<double>(i), 0.0}, 12.0, 100.0});
        const auto fit = fit_variogram(experimental_variogram(samples, 1.0, 6), Structure::spherical);
        CHECK(fit.degenerate);
        CHECK_FALSE(fit.warning.empty());
        CHECK(fit.model.sill > 0.0);
        fit.model.validate();
    }
    SUBCASE("exponential table fit with a spherical structure leaves a residual") {
        const auto t = table_from_model({Structure::exponential, 0, 1, 10}, 20, 1.0);
        const auto wrong = fit_variogram(t, Structure::spherical);
        const auto right = fit_variogram(t, Structure::exponential);
        CHECK(wrong.residual > 0.0);
        CHECK(wrong.residual > right.residual);
    }
    SUBCASE("too few bins") {
        auto t = table_from_model({Structure::spherical, 0, 1, 10}, 5, 1.0);
        for (std::size_t k = 2; k < t.bins.size(); ++k) t.bins[k].pair_count = 0;
        CHECK_THROWS_AS(fit_variogram(t, Structure::spherical), std::invalid_argument);
    }
}

TEST_CASE("structure names") {
    CHECK(parse_structure("Spherical") == Structure::spherical);
    CHECK(to_string(Structure::gaussian) == "gaussian");
    CHECK_THROWS(parse_structure("cubic"));
}
