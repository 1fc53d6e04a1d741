#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "covmap/baselines.hpp"
#include "covmap/dss.hpp"
#include "covmap/evaluation.hpp"
#include "covmap/sird.hpp"
#include "covmap/stconv.hpp"

namespace covmap::eval {

struct ArmaOptions {
    int p = 7;
    int q = 1;
    /// Forecasts above max_growth times the cell's historical maximum count
    /// as divergent.
    double max_growth = 10.0;
    unsigned threads = 0;  ///< 0: hardware concurrency
};

/// Per-cell ARMA(p, q) refit on each cell's full history at every origin.
/// Cells whose history is too short, fails to fit or diverges fall back to
/// persistence.
class ArmaForecaster : public Forecaster {
public:
    explicit ArmaForecaster(ArmaOptions options = {}) : options_(options) {}
    std::string name() const override { return "arma"; }
    std::vector<geo::IncidenceField> predict(const HistoryView& history, std::span<const int> horizons) override;
    int fallbacks() const { return fallbacks_; }

private:
    ArmaOptions options_;
    int fallbacks_ = 0;
};

/// VAR(p) over all land cells, refit at every origin.
class VarForecaster : public Forecaster {
public:
    explicit VarForecaster(baselines::VarOptions options = {}) : options_(options) {}
    std::string name() const override { return "var"; }
    std::vector<geo::IncidenceField> predict(const HistoryView& history, std::span<const int> horizons) override;
    int fallbacks() const { return fallbacks_; }

private:
    baselines::VarOptions options_;
    int fallbacks_ = 0;
};

struct SirdDssOptions {
    sird::SirdConfig sird;
    /// Pseudo-count per horizon; horizons not listed use sird.pseudo_count.
    std::map<int, double> pseudo_counts{{7, 1e4}, {10, 1e5}};
    geostat::VariogramModel variogram;
    dss::SimulationConfig simulation;  ///< n_realizations per predicted day
    std::uint64_t seed = 0;
};

/// Municipality SIRD forecasts mapped to cells by block DSS (median of the
/// realizations).
class SirdDssForecaster : public Forecaster {
public:
    SirdDssForecaster(std::shared_ptr<const geo::Territory> territory, SirdDssOptions options);
    std::string name() const override { return "sird"; }
    std::vector<geo::IncidenceField> predict(const HistoryView& history, std::span<const int> horizons) override;
    int flags() const { return flags_; }

private:
    std::shared_ptr<const geo::Territory> territory_;
    SirdDssOptions options_;
    std::unique_ptr<dss::DssContext> context_;
    int flags_ = 0;
};

struct StConvOptions {
    stconv::ModelConfig model;  ///< horizon is overwritten per model set
    std::vector<int> horizons{7, 10};
    int bands = 3;
    int warmup_epochs = 20;
    std::uint64_t seed = 0;
};

/// One set of band models per horizon. Each set maps the last T days to the
/// next T days; warmup trains on every complete pair inside the warmup
/// window and observe() fine-tunes on the newest complete pair.
class StConvForecaster : public Forecaster {
public:
    explicit StConvForecaster(StConvOptions options);
    std::string name() const override { return "stconv"; }
    void warmup(const HistoryView& history) override;
    std::vector<geo::IncidenceField> predict(const HistoryView& history, std::span<const int> horizons) override;
    void observe(const HistoryView& history) override;

    std::vector<stconv::StConvModel>& models(int horizon);
    const std::map<int, std::vector<stconv::TrainLog>>& warmup_logs() const { return warmup_logs_; }
    void save(const std::string& dir) const;

private:
    void ensure_models(int rows, int cols);
    std::vector<Eigen::MatrixXd> window(const HistoryView& history, int first, int count) const;

    StConvOptions options_;
    std::vector<stconv::Band> bands_;
    std::map<int, std::vector<stconv::StConvModel>> sets_;
    std::map<int, std::vector<stconv::TrainLog>> warmup_logs_;
};

}  // namespace covmap::eval
