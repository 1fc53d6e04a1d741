#include <cmath>
#include <functional>

#include "covmap/errors.hpp"
#include "covmap/forecasters.hpp"
#include "covmap/pipeline.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace covmap;
using namespace covmap::eval;

namespace {

Dataset series_dataset(int days, const std::function<double(int, std::size_t)>& value) {
    auto territory = std::make_shared<geo::Territory>(fixtures::block_territory(2, 1, 3, 3));
    Dataset d;
    d.territory = territory;
    d.start = parse_iso_date("2020-03-01");
    for (int t = 0; t < days; ++t) {
        auto f = geo::IncidenceField::zeros(territory->grid, add_days(d.start, t));
        for (std::size_t k = 0; k < f.values.size(); ++k) f.values[k] = value(t, k);
        d.gold.push_back(std::move(f));
    }
    d.cases = Eigen::MatrixXd::Constant(days, 2, 5.0);
    return d;
}

Dataset synthetic_dataset() {
    pipeline::SyntheticSpec s;
    s.grid_cols = 6;
    s.grid_rows = 6;
    s.municipality_cols = 2;
    s.municipality_rows = 1;
    s.days = 40;
    s.waves = {{0, 0.35, 40}};
    s.initial_infected = 200.0;
    s.min_population = 20000;
    s.max_population = 60000;
    s.gold_realizations = 2;
    s.variogram = {geostat::Structure::spherical, 0.1, 0.9, 4.0};
    const auto c = pipeline::generate_synthetic(s, 17, 1);
    Dataset d;
    d.territory = std::make_shared<geo::Territory>(c.territory);
    d.start = s.start;
    d.gold = c.gold;
    d.cases = c.panel.cases;
    d.national_deaths = c.national.deaths;
    return d;
}

std::vector<double> flat(const ModelScores& s) {
    std::vector<double> out;
    for (const auto& d : s.days) {
        out.push_back(d.rmse);
        out.push_back(d.smape);
    }
    return out;
}

}  // namespace

TEST_CASE("ARMA forecaster matches the per-cell model and guards divergence") {
    const auto d = series_dataset(40, [](int t, std::size_t k) {
        return 50.0 + 10.0 * std::sin(0.4 * t + static_cast<double>(k)) + 0.5 * t;
    });
    HistoryView h(d, 30);
    ArmaForecaster f({2, 1, 1e9, 1});
    const std::vector<int> horizons{1, 3};
    const auto out = f.predict(h, horizons);
    REQUIRE(out.size() == 2);
    CHECK(out[1].date == add_days(h.origin_date(), 3));
    const auto panel = h.cell_panel(0);
    for (std::size_t k = 0; k < 3; ++k) {
        std::vector<double> series(panel.rows());
        for (Eigen::Index t = 0; t < panel.rows(); ++t) series[t] = panel(t, k);
        const auto path = baselines::forecast_arma(baselines::fit_arma(series, 2, 1), 3);
        CHECK(out[0].values[k] == doctest::Approx(path[0]).epsilon(1e-12));
        CHECK(out[1].values[k] == doctest::Approx(path[2]).epsilon(1e-12));
    }

    ArmaForecaster strict({2, 1, 1e-9, 1});
    const auto guarded = strict.predict(h, horizons);
    CHECK(strict.fallbacks() == static_cast<int>(out[0].values.size()));
    for (std::size_t k = 0; k < guarded[1].values.size(); ++k) CHECK(guarded[1].values[k] == panel(30, k));

    HistoryView shortview(d, 3);
    ArmaForecaster brief({7, 1, 10.0, 1});
    const auto persisted = brief.predict(shortview, horizons);
    CHECK(brief.fallbacks() > 0);
    CHECK(persisted[0].values[0] == d.gold[3].values[0]);
}

TEST_CASE("VAR forecaster falls back to persistence on short history and enforces the cell cap") {
    const auto d = series_dataset(30, [](int t, std::size_t k) { return 10.0 + t + static_cast<double>(k); });
    VarForecaster f({4, 1e-3, 2500});
    const std::vector<int> horizons{2};
    HistoryView early(d, 2);
    const auto out = f.predict(early, horizons);
    CHECK(f.fallbacks() == 1);
    CHECK(out[0].values[5] == d.gold[2].values[5]);

    HistoryView late(d, 25);
    const auto fitted = f.predict(late, horizons);
    CHECK(f.fallbacks() == 1);
    for (double v : fitted[0].values) CHECK(std::isfinite(v));

    VarForecaster capped({4, 1e-3, 5});
    CHECK_THROWS_AS(capped.predict(late, horizons), std::invalid_argument);
}

TEST_CASE("SIRD forecaster is reproducible and independent of the call history") {
    const auto d = synthetic_dataset();
    SirdDssOptions o;
    o.variogram = {geostat::Structure::spherical, 0.1, 0.9, 4.0};
    o.simulation.n_realizations = 3;
    o.simulation.threads = 1;
    o.seed = 11;
    const std::vector<int> horizons{7};
    SirdDssForecaster a(d.territory, o), b(d.territory, o);
    (void)a.predict(HistoryView(d, 20), horizons);
    const auto pa = a.predict(HistoryView(d, 25), horizons);
    const auto pb = b.predict(HistoryView(d, 25), horizons);
    CHECK(pa[0].values == pb[0].values);
    CHECK(pa[0].date == d.gold[32].date);
    for (double v : pa[0].values) CHECK((std::isfinite(v) && v >= 0.0));

    o.seed = 12;
    SirdDssForecaster c(d.territory, o);
    CHECK(c.predict(HistoryView(d, 25), horizons)[0].values != pa[0].values);
}

TEST_CASE("STConv forecaster trains inside the history window and is reproducible") {
    const auto d = synthetic_dataset();
    StConvOptions o;
    o.model.layers_per_block = 1;
    o.model.base_filters = 4;
    o.model.spatial_kernel = 3;
    o.model.temporal_kernel = 3;
    o.model.online_epochs = 1;
    o.horizons = {3};
    o.bands = 2;
    o.warmup_epochs = 2;
    o.seed = 4;
    EvalConfig cfg;
    cfg.horizons = {3};
    cfg.warmup_days = 20;
    StConvForecaster a(o), b(o);
    const auto sa = rolling_origin(a, d, cfg);
    const auto sb = rolling_origin(b, d, cfg);
    CHECK(sa.days.size() == 40 - 20 - 3 + 1);
    CHECK(flat(sa) == flat(sb));
    REQUIRE(a.warmup_logs().count(3) == 1);
    CHECK(a.warmup_logs().at(3).size() == 2);
    CHECK(a.models(3).size() == 2);
    CHECK_THROWS_AS(a.models(7), std::invalid_argument);

    o.seed = 5;
    StConvForecaster c(o);
    CHECK(flat(rolling_origin(c, d, cfg)) != flat(sa));
}

TEST_CASE("forecaster factory") {
    pipeline::PipelineConfig cfg;
    const auto d = series_dataset(5, [](int, std::size_t) { return 1.0; });
    for (const auto& name : pipeline::default_models()) {
        const auto f = pipeline::make_forecaster(name, cfg, d.territory, cfg.variogram);
        CHECK(f->name() == name);
    }
    CHECK_THROWS_AS(pipeline::make_forecaster("lstm", cfg, d.territory, cfg.variogram), UsageError);
}
