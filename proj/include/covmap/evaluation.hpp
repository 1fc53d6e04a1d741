#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "covmap/dates.hpp"
#include "covmap/grid.hpp"

namespace covmap::eval {

/// Root mean square error over land cells; NODATA cells are skipped.
double rmse(std::span<const double> truth, std::span<const double> pred);
double rmse(const geo::IncidenceField& truth, const geo::IncidenceField& pred);

/// Mean of 2|z - p| / (z + p) over land cells; cells where both are 0 add 0.
double smape(std::span<const double> truth, std::span<const double> pred);
double smape(const geo::IncidenceField& truth, const geo::IncidenceField& pred);

/// Per-cell terms behind the two metrics (|z - p| and the sMAPE term).
geo::IncidenceField abs_error_map(const geo::IncidenceField& truth, const geo::IncidenceField& pred);
geo::IncidenceField smape_map(const geo::IncidenceField& truth, const geo::IncidenceField& pred);

/// Everything a forecaster may look at, one entry per calendar day.
struct Dataset {
    std::shared_ptr<const geo::Territory> territory;
    Date start{};
    std::vector<geo::IncidenceField> gold;  ///< cell-level incidence per day
    Eigen::MatrixXd cases;                  ///< days x municipalities, daily new cases
    std::vector<double> national_deaths;    ///< per day; may be empty
    int days() const { return static_cast<int>(gold.size()); }
    void validate() const;
};

/// Read access to a Dataset through day `origin`; anything later throws
/// LeakageError.
class HistoryView {
public:
    HistoryView(const Dataset& data, int origin);

    int origin() const { return origin_; }
    Date origin_date() const { return add_days(data_.start, origin_); }
    Date date_of(int day) const { return add_days(data_.start, day); }
    const geo::Territory& territory() const { return *data_.territory; }
    std::shared_ptr<const geo::Grid> grid() const { return data_.territory->grid; }

    const geo::IncidenceField& field(int day) const;
    /// Days first..origin of every land cell: (origin - first + 1) x n_land.
    Eigen::MatrixXd cell_panel(int first = 0) const;
    /// Dense rows x cols raster of a day; non-land cells are 0.
    Eigen::MatrixXd dense_field(int day) const;
    /// Daily new cases of every municipality through the origin, one vector per municipality.
    std::vector<std::vector<double>> case_history() const;
    std::vector<double> deaths_history() const;

private:
    void guard(int day) const;
    const Dataset& data_;
    int origin_;
};

class Forecaster {
public:
    virtual ~Forecaster() = default;
    virtual std::string name() const = 0;
    /// Initial training with data through the first origin.
    virtual void warmup(const HistoryView&) {}
    /// One field per requested horizon, for day origin + horizon.
    virtual std::vector<geo::IncidenceField> predict(const HistoryView& history, std::span<const int> horizons) = 0;
    /// Called after predict at the same origin (online updates).
    virtual void observe(const HistoryView&) {}
};

/// z(t + T) = z(t).
class PersistenceForecaster : public Forecaster {
public:
    std::string name() const override { return "persistence"; }
    std::vector<geo::IncidenceField> predict(const HistoryView& history, std::span<const int> horizons) override;
};

struct EvalConfig {
    std::vector<int> horizons{7, 10};
    /// Days 0..warmup_days-1 are the initial training window; the first
    /// origin is warmup_days - 1.
    int warmup_days = 60;
    void validate(int n_days) const;
};

struct DailyScore {
    Date date{};  ///< the predicted day
    int horizon = 0;
    double rmse = 0.0;
    double smape = 0.0;
};

struct ModelScores {
    std::string model;
    std::vector<DailyScore> days;
};

/// Receives every prediction next to its gold field.
using PredictionSink = std::function<void(int horizon, const geo::IncidenceField& truth,
                                          const geo::IncidenceField& pred)>;

/// Origins run from warmup_days - 1 to the last day minus the shortest
/// horizon; a horizon is scored only where its target day exists.
ModelScores rolling_origin(Forecaster& forecaster, const Dataset& data, const EvalConfig& config,
                           const PredictionSink& sink = {});

struct SummaryRow {
    std::string model;
    int horizon = 0;
    double rmse_mean = 0.0;
    double rmse_std = 0.0;
    double smape_mean = 0.0;
    double smape_std = 0.0;
    int days = 0;
};

/// Mean and sample standard deviation per (model, horizon), in input order.
std::vector<SummaryRow> summarize(std::span<const ModelScores> scores);

/// date,model,horizon,rmse,smape
void write_scores_csv(const std::string& path, std::span<const ModelScores> scores);
/// model,horizon,rmse_mean,rmse_std,smape_mean,smape_std
void write_summary_csv(const std::string& path, std::span<const SummaryRow> rows);

}  // namespace covmap::eval
