#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"

#include "covmap/dss.hpp"
#include "covmap/raster.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace covmap;
using namespace covmap::dss;
using geostat::Structure;

TEST_CASE("poisson risk variance") {
    CHECK(poisson_risk_variance(10, 5, 0) == 2.0);
    CHECK(poisson_risk_variance(0, 100, 4) == 4.0);
    CHECK(poisson_risk_variance(300, 1000, 1.5) == doctest::Approx(1.8).epsilon(1e-15));
    CHECK_THROWS_AS(poisson_risk_variance(1, 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(poisson_risk_variance(-1, 10, 0), std::invalid_argument);
}

TEST_CASE("kriging: exact interpolation and out-of-range data") {
    const VariogramModel m{Structure::spherical, 0.0, 3.0, 10.0};
    std::vector<PointDatum> one{{{1, 1}, 42.0}};
    auto r = solve_block_kriging({1, 1}, one, {}, m, 10.0);
    CHECK(r.mean == doctest::Approx(42.0).epsilon(1e-12));
    CHECK(r.variance == doctest::Approx(0.0).scale(1.0));

    std::vector<PointDatum> far{{{100, 100}, 7.0}, {{-50, 0}, 9.0}};
    r = solve_block_kriging({0, 0}, far, {}, m, 10.0);
    CHECK(r.mean == 10.0);
    CHECK(r.variance == 3.0);

    r = solve_block_kriging({0, 0}, {}, {}, m, 10.0);
    CHECK(r.empty_neighborhood);
    CHECK(r.mean == 10.0);
    CHECK(r.variance == 3.0);
}

TEST_CASE("kriging: 2 points + 1 two-cell block against a hand-assembled solve") {
    const VariogramModel m{Structure::exponential, 0.2, 2.0, 8.0};
    const std::vector<Point> block{{3, 0}, {4, 0}};
    std::vector<PointDatum> pts{{{0, 1}, 5.0}, {{2, 2}, 8.0}};
    std::vector<BlockObservation> blocks{{block, 6.5, 0.3}};
    const auto r = solve_block_kriging({1, 0}, pts, blocks, m, 6.0);
    const auto [mean, var] = oracle::simple_kriging(
        m, {1, 0}, {{{{0, 1}}, 5.0, 0.0}, {{{2, 2}}, 8.0, 0.0}, {block, 6.5, 0.3}}, 6.0);
    CHECK(std::abs(r.mean - mean) <= 1e-8);
    CHECK(std::abs(r.variance - var) <= 1e-8);
}

TEST_CASE("kriging variance stays within [0, C(0) + max error]") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const VariogramModel m{Structure::spherical, u(rng), 0.5 + u(rng), 2.0 + 10 * u(rng)};
        std::vector<PointDatum> pts;
        for (int i = 0; i < 1 + trial % 4; ++i) pts.push_back({{10 * u(rng), 10 * u(rng)}, 100 * u(rng)});
        std::vector<Point> support{{10 * u(rng), 10 * u(rng)}, {10 * u(rng), 10 * u(rng)}};
        const double err = u(rng);
        std::vector<BlockObservation> blocks{{support, 50.0, err}};
        const auto r = solve_block_kriging({5, 5}, pts, blocks, m, 50.0);
        CHECK(r.variance >= 0.0);
        CHECK(r.variance <= m.total_sill() + err + 1e-12);
    }
}

TEST_CASE("singular systems fall back to a ridge solve") {
    const VariogramModel m{Structure::gaussian, 0.0, 1.0, 50.0};
    std::vector<PointDatum> pts{{{0, 0}, 1.0}, {{0, 0}, 1.0}};
    const auto r = solve_block_kriging({1, 0}, pts, {}, m, 0.0);
    CHECK(r.ridge_fallback);
    CHECK(std::isfinite(r.mean));
}

TEST_CASE("random path") {
    geo::Grid g1({1, 1, 1, 0, 0}, {true});
    CHECK(random_path(5, g1) == std::vector<std::size_t>{0});
    geo::Grid g({10, 10, 1, 0, 0}, std::vector<bool>(100, true));
    const auto a = random_path(17, g), b = random_path(17, g);
    CHECK(a == b);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 100; ++i) CHECK(sorted[i] == i);
    CHECK(random_path(18, g) != a);
}

TEST_CASE("global distribution") {
    const std::vector<double> v{30, 10, 20, 10}, w{1, 1, 2, 4};
    const GlobalDistribution d(v, w);
    CHECK(d.atoms() == std::vector<double>{10, 20, 30});
    CHECK(d.mean() == doctest::Approx((30 + 10 + 40 + 40) / 8.0));
    CHECK(d.quantile(0.0) == 10.0);
    CHECK(d.quantile(0.5) == 10.0);
    CHECK(d.quantile(0.7) == 20.0);
    CHECK(d.quantile(1.0) == 30.0);
    CHECK(d.cumulative().back() == doctest::Approx(1.0));
    double prev = -1;
    for (int k = 0; k <= 100; ++k) {
        const double c = d.cdf(5.0 + 0.3 * k);
        CHECK(c >= prev);
        prev = c;
    }
}

TEST_CASE("local draw reproduces the local mean on the global histogram") {
    const std::vector<double> v{100, 150, 200, 130, 180, 230}, w{1.5, 1.6, 1.7, 1.8, 1.9, 2.0};
    const GlobalDistribution d(v, w);
    const LocalDrawTable table(d);
    for (double mean : {101.0, 110.0, 140.0, 165.0, 205.0, 229.0}) {
        for (double var : {5.0, 100.0, 800.0}) {
            const auto g = table.match(mean, var);
            CHECK(table.moments(g.mean, g.sd).first == doctest::Approx(mean).epsilon(1e-6));
        }
    }
    // moments() against a Monte Carlo of the back-transform
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    double s = 0;
    const int N = 200000;
    for (int i = 0; i < N; ++i) s += table.back_transform(0.3 + 0.7 * n(rng));
    CHECK(s / N == doctest::Approx(table.moments(0.3, 0.7).first).epsilon(2e-3));
    // every draw is an observed rate
    std::set<double> atoms(v.begin(), v.end());
    for (int i = 0; i < 1000; ++i) CHECK(atoms.count(table.draw(170.0, 300.0, n(rng))) == 1);
    // beyond the extreme atoms the draw collapses onto them
    CHECK(table.draw(50.0, 100.0, 2.5) == 100.0);
    CHECK(table.draw(500.0, 100.0, -2.5) == 230.0);
}

TEST_CASE("simulation: zero-rate single municipality gives an all-zero field") {
    const auto t = fixtures::block_territory(1, 1, 6, 5);
    const VariogramModel m{Structure::spherical, 0.0, 1.0, 5.0};
    SimulationConfig cfg;
    DssContext ctx(t, m, cfg);
    const std::vector<double> rates{0.0};
    const auto day = make_day_data(t, rates);
    const auto f = simulate_realization(ctx, day, Date{}, 3);
    for (double v : f.values) CHECK(v == 0.0);
}

TEST_CASE("simulation: deterministic replay and thread independence") {
    const auto t = fixtures::block_territory(3, 2, 5, 4);
    const VariogramModel m{Structure::spherical, 0.0, 1.0, 12.0};
    const std::vector<double> rates{80, 120, 160, 90, 140, 200};
    const auto day = make_day_data(t, rates);
    SimulationConfig c1;
    c1.n_realizations = 6;
    c1.threads = 1;
    SimulationConfig c3 = c1;
    c3.threads = 3;
    DssContext x1(t, m, c1), x3(t, m, c3);
    const auto a = simulate_set(x1, day, Date{}, 77);
    const auto b = simulate_set(x3, day, Date{}, 77);
    for (std::size_t r = 0; r < a.fields.size(); ++r) {
        CHECK(a.fields[r].values == b.fields[r].values);
        CHECK(a.seeds[r] == (77u ^ r));
        for (double v : a.fields[r].values) CHECK(v >= 0.0);
    }
    const auto again = simulate_realization(x1, day, Date{}, a.seeds[2]);
    CHECK(again.values == a.fields[2].values);
}

TEST_CASE("simulation: two-municipality conditioning within 5%") {
    const auto t = fixtures::block_territory(2, 1, 10, 10, 1500000, 500000);
    const VariogramModel m{Structure::spherical, 0.0, 1.0, 40.0};
    const std::vector<double> rates{160, 210};
    const auto day = make_day_data(t, rates);
    SimulationConfig cfg;
    DssContext ctx(t, m, cfg);
    const auto set = simulate_set(ctx, day, Date{}, 2024);
    REQUIRE(set.fields.size() == 100);
    for (int k = 0; k < 2; ++k) {
        double acc = 0.0;
        const auto& cells = t.municipalities[k].member_cells;
        for (const auto& f : set.fields) {
            double s = 0.0;
            for (auto c : cells) s += f.values[t.grid->land_ordinal(c)];
            acc += s / static_cast<double>(cells.size());
        }
        acc /= static_cast<double>(set.fields.size());
        CHECK(std::abs(acc / rates[k] - 1.0) <= 0.05);
    }
}

TEST_CASE("summaries") {
    const auto t = fixtures::block_territory(1, 1, 2, 2);
    RealizationSet set;
    SUBCASE("identical realizations") {
        auto f = geo::IncidenceField::zeros(t.grid, Date{});
        f.values = {1, 2, 3, 4};
        set.fields.assign(100, f);
        const auto s = summarize(set, 0.9);
        CHECK(s.median.values == f.values);
        CHECK(s.lower.values == f.values);
        CHECK(s.upper.values == f.values);
    }
    SUBCASE("three realizations") {
        for (double v : {1.0, 9.0, 2.0}) {
            auto f = geo::IncidenceField::zeros(t.grid, Date{});
            f.values.assign(4, v);
            set.fields.push_back(f);
        }
        CHECK(summarize(set, 0.9).median.values[0] == 2.0);
    }
    SUBCASE("percentiles match a sort-based oracle; lower <= median <= upper") {
        std::mt19937_64 rng(4);
        std::gamma_distribution<double> g(2.0, 30.0);
        for (int r = 0; r < 100; ++r) {
            auto f = geo::IncidenceField::zeros(t.grid, Date{});
            for (auto& v : f.values) v = g(rng);
            set.fields.push_back(f);
        }
        const auto s = summarize(set, 0.9);
        for (std::size_t c = 0; c < 4; ++c) {
            std::vector<double> col;
            for (const auto& f : set.fields) col.push_back(f.values[c]);
            CHECK(s.lower.values[c] == oracle::sorted_quantile(col, 0.05));
            CHECK(s.median.values[c] == oracle::sorted_quantile(col, 0.5));
            CHECK(s.upper.values[c] == oracle::sorted_quantile(col, 0.95));
            CHECK(s.lower.values[c] <= s.median.values[c]);
            CHECK(s.median.values[c] <= s.upper.values[c]);
        }
    }
}

TEST_CASE("quantile_inplace matches the sort oracle on random samples") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-5, 5);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> v(1 + rng() % 40);
        for (auto& x : v) x = u(rng);
        const double q = u(rng) / 10 + 0.5;
        auto w = v;
        CHECK(quantile_inplace(w, q) == oracle::sorted_quantile(v, q));
    }
}

TEST_CASE("realization sets persist with a manifest") {
    const auto dir = std::filesystem::temp_directory_path() / "covmap_test_realizations";
    std::filesystem::remove_all(dir);
    const auto t = fixtures::block_territory(2, 1, 3, 3);
    const VariogramModel m{Structure::spherical, 0.0, 1.0, 6.0};
    SimulationConfig cfg;
    cfg.n_realizations = 3;
    DssContext ctx(t, m, cfg);
    const std::vector<double> rates{10, 30};
    const auto set = simulate_set(ctx, make_day_data(t, rates), Date{}, 5);
    write_realization_set(dir, set);
    std::ifstream in(dir / "manifest.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "realization,seed,file");
    int n = 0;
    while (std::getline(in, line)) ++n;
    CHECK(n == 3);
    const auto r = geo::read_esri_ascii(dir / "realization_0001.asc");
    CHECK(r.ncols == 6);
}

TEST_CASE("simulation config validation") {
    SimulationConfig c;
    c.n_realizations = 0;
    CHECK_THROWS(c.validate());
    c = SimulationConfig{};
    c.max_point_neighbors = 0;
    CHECK_THROWS(c.validate());
}
