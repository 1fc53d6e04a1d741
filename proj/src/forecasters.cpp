#include "covmap/forecasters.hpp"

#include <algorithm>
#include <filesystem>
#include <stdexcept>

#include "covmap/errors.hpp"
#include "covmap/parallel.hpp"
#include "covmap/seeds.hpp"

namespace covmap::eval {

namespace {

int max_horizon(std::span<const int> horizons) {
    return horizons.empty() ? 0 : *std::max_element(horizons.begin(), horizons.end());
}

geo::IncidenceField from_dense(const Eigen::MatrixXd& dense, std::shared_ptr<const geo::Grid> grid, Date date) {
    auto f = geo::IncidenceField::zeros(grid, date);
    const auto& cells = grid->land_cells();
    for (std::size_t k = 0; k < cells.size(); ++k) f.values[k] = dense(grid->row_of(cells[k]), grid->col_of(cells[k]));
    return f;
}

}  // namespace

std::vector<geo::IncidenceField> ArmaForecaster::predict(const HistoryView& history, std::span<const int> horizons) {
    const Eigen::MatrixXd panel = history.cell_panel(0);
    const int reach = max_horizon(horizons);
    const auto n = static_cast<std::size_t>(panel.cols());
    std::vector<std::vector<double>> paths(n);
    std::vector<char> failed(n, 0);
    const unsigned threads = options_.threads == 0 ? default_thread_count() : options_.threads;
    parallel_for(n, threads, [&](std::size_t k) {
        std::vector<double> series(panel.rows());
        for (Eigen::Index t = 0; t < panel.rows(); ++t) series[t] = panel(t, k);
        try {
            paths[k] = baselines::forecast_arma(baselines::fit_arma(series, options_.p, options_.q), reach);
            const double peak = *std::max_element(series.begin(), series.end());
            for (double v : paths[k])
                if (!std::isfinite(v) || v > options_.max_growth * std::max(peak, 0.0))
                    throw NumericalError("divergent ARMA forecast");
        } catch (const std::exception&) {
            paths[k].assign(reach, std::max(0.0, series.back()));
            failed[k] = 1;
        }
    });
    fallbacks_ += static_cast<int>(std::count(failed.begin(), failed.end(), 1));
    std::vector<geo::IncidenceField> out;
    for (int h : horizons) {
        auto f = geo::IncidenceField::zeros(history.grid(), add_days(history.origin_date(), h));
        for (std::size_t k = 0; k < n; ++k) f.values[k] = paths[k][h - 1];
        out.push_back(std::move(f));
    }
    return out;
}

std::vector<geo::IncidenceField> VarForecaster::predict(const HistoryView& history, std::span<const int> horizons) {
    const Eigen::MatrixXd panel = history.cell_panel(0);
    const int reach = max_horizon(horizons);
    Eigen::MatrixXd path;
    try {
        const auto model = baselines::fit_var(panel, options_.p, options_.ridge, options_.max_cells);
        path = baselines::forecast_var(model, panel.bottomRows(options_.p), reach);
        if (!path.allFinite()) throw NumericalError("non-finite VAR forecast");
    } catch (const NumericalError&) {
        path = panel.bottomRows(1).cwiseMax(0.0).replicate(reach, 1);
        ++fallbacks_;
    } catch (const std::invalid_argument&) {
        if (panel.cols() > options_.max_cells) throw;
        path = panel.bottomRows(1).cwiseMax(0.0).replicate(reach, 1);
        ++fallbacks_;
    }
    std::vector<geo::IncidenceField> out;
    for (int h : horizons) {
        auto f = geo::IncidenceField::zeros(history.grid(), add_days(history.origin_date(), h));
        for (Eigen::Index k = 0; k < path.cols(); ++k) f.values[k] = path(h - 1, k);
        out.push_back(std::move(f));
    }
    return out;
}

SirdDssForecaster::SirdDssForecaster(std::shared_ptr<const geo::Territory> territory, SirdDssOptions options)
    : territory_(std::move(territory)), options_(std::move(options)) {
    if (!territory_) throw std::invalid_argument("SIRD forecaster needs a territory");
    options_.sird.validate();
    for (const auto& [h, k] : options_.pseudo_counts)
        if (h < 1 || k < 0.0) throw std::invalid_argument("pseudo-counts need horizon >= 1 and K >= 0");
    context_ = std::make_unique<dss::DssContext>(*territory_, options_.variogram, options_.simulation);
}

std::vector<geo::IncidenceField> SirdDssForecaster::predict(const HistoryView& history,
                                                           std::span<const int> horizons) {
    const auto cases = history.case_history();
    const auto deaths = history.deaths_history();
    std::vector<double> populations;
    for (const auto& m : territory_->municipalities) populations.push_back(static_cast<double>(m.population));
    std::vector<geo::IncidenceField> out;
    for (int h : horizons) {
        auto cfg = options_.sird;
        if (auto it = options_.pseudo_counts.find(h); it != options_.pseudo_counts.end()) cfg.pseudo_count = it->second;
        const auto fc = sird::forecast_municipalities(cases, populations, deaths, cfg, h);
        flags_ += fc.flags;
        std::vector<double> rates(territory_->municipalities.size());
        for (std::size_t m = 0; m < rates.size(); ++m) rates[m] = fc.incidence(h - 1, static_cast<Eigen::Index>(m));
        const auto data = dss::make_day_data(*territory_, rates);
        const Date target = add_days(history.origin_date(), h);
        const auto seed = derive_seed(options_.seed, {static_cast<std::uint64_t>(history.origin()),
                                                      static_cast<std::uint64_t>(h)});
        auto set = dss::simulate_set(*context_, data, target, seed);
        auto median = dss::summarize(set, 0.95).median;
        median.date = target;
        out.push_back(std::move(median));
    }
    return out;
}

StConvForecaster::StConvForecaster(StConvOptions options) : options_(std::move(options)) {
    options_.model.validate();
    if (options_.horizons.empty()) throw std::invalid_argument("STConv forecaster needs at least one horizon");
    if (options_.bands < 1) throw std::invalid_argument("band count must be >= 1");
    if (options_.warmup_epochs < 0) throw std::invalid_argument("warmup epochs must be >= 0");
}

void StConvForecaster::ensure_models(int rows, int cols) {
    if (!sets_.empty()) return;
    bands_ = stconv::split_bands(rows, options_.bands);
    for (int h : options_.horizons) {
        auto& set = sets_[h];
        for (std::size_t b = 0; b < bands_.size(); ++b) {
            auto cfg = options_.model;
            cfg.horizon = h;
            cfg.seed = derive_seed(options_.seed, {static_cast<std::uint64_t>(h), b});
            set.emplace_back(cfg, bands_[b].rows(), cols);
        }
    }
}

std::vector<Eigen::MatrixXd> StConvForecaster::window(const HistoryView& history, int first, int count) const {
    std::vector<Eigen::MatrixXd> out;
    for (int d = first; d < first + count; ++d) out.push_back(history.dense_field(d));
    return out;
}

std::vector<stconv::StConvModel>& StConvForecaster::models(int horizon) {
    auto it = sets_.find(horizon);
    if (it == sets_.end()) throw std::invalid_argument("no STConv models for horizon " + std::to_string(horizon));
    return it->second;
}

void StConvForecaster::warmup(const HistoryView& history) {
    const auto& g = *history.grid();
    ensure_models(g.n_rows(), g.n_cols());
    const double scale = options_.model.value_scale;
    for (int h : options_.horizons) {
        auto& set = models(h);
        for (std::size_t b = 0; b < bands_.size(); ++b) {
            std::vector<stconv::Sample> data;
            for (int s = 0; s + 2 * h - 1 <= history.origin(); ++s)
                data.push_back(stconv::make_sample(stconv::band_rows(window(history, s, h), bands_[b]),
                                                   stconv::band_rows(window(history, s + h, h), bands_[b]), scale));
            if (data.empty()) continue;
            warmup_logs_[h].push_back(stconv::train(set[b], data, options_.warmup_epochs));
        }
    }
}

std::vector<geo::IncidenceField> StConvForecaster::predict(const HistoryView& history, std::span<const int> horizons) {
    const auto& g = *history.grid();
    ensure_models(g.n_rows(), g.n_cols());
    std::vector<geo::IncidenceField> out;
    for (int h : horizons) {
        const int first = history.origin() - h + 1;
        const Date target = add_days(history.origin_date(), h);
        if (first < 0) {
            auto f = history.field(history.origin());
            f.date = target;
            out.push_back(std::move(f));
            continue;
        }
        const auto dense = stconv::predict_region_split(models(h), window(history, first, h));
        out.push_back(from_dense(dense, history.grid(), target));
    }
    return out;
}

void StConvForecaster::observe(const HistoryView& history) {
    const double scale = options_.model.value_scale;
    for (int h : options_.horizons) {
        const int first = history.origin() - 2 * h + 1;
        if (first < 0) continue;
        auto& set = models(h);
        const auto input = window(history, first, h);
        const auto target = window(history, first + h, h);
        for (std::size_t b = 0; b < bands_.size(); ++b)
            stconv::online_update(
                set[b],
                stconv::make_sample(stconv::band_rows(input, bands_[b]), stconv::band_rows(target, bands_[b]), scale),
                options_.model.online_epochs);
    }
}

void StConvForecaster::save(const std::string& dir) const {
    std::filesystem::create_directories(dir);
    for (const auto& [h, set] : sets_)
        for (std::size_t b = 0; b < set.size(); ++b)
            set[b].save((std::filesystem::path(dir) / ("stconv_h" + std::to_string(h) + "_band" + std::to_string(b) +
                                                       ".ckpt"))
                            .string());
}

}  // namespace covmap::eval
