#include "covmap/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "covmap/errors.hpp"
#include "csv_util.hpp"

namespace covmap::eval {

namespace {

bool is_data(double v) { return v != geo::kNodata && std::isfinite(v); }

void check_pair(std::span<const double> truth, std::span<const double> pred) {
    if (truth.size() != pred.size())
        throw std::invalid_argument("fields differ in size: " + std::to_string(truth.size()) + " vs " +
                                    std::to_string(pred.size()));
}

void check_fields(const geo::IncidenceField& truth, const geo::IncidenceField& pred) {
    if (!truth.grid || !pred.grid) throw std::invalid_argument("field without a grid");
    if (truth.grid != pred.grid && !truth.grid->same_geometry(*pred.grid))
        throw std::invalid_argument("fields are on different grids");
    if (truth.date != pred.date)
        throw std::invalid_argument("fields are for different dates: " + format_iso_date(truth.date) + " vs " +
                                    format_iso_date(pred.date));
    check_pair(truth.values, pred.values);
}

double smape_term(double z, double p) {
    const double den = z + p;
    if (z == p) return 0.0;
    if (den <= 0.0) return 2.0;
    return std::min(2.0, 2.0 * std::abs(z - p) / den);
}

}  // namespace

double rmse(std::span<const double> truth, std::span<const double> pred) {
    check_pair(truth, pred);
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        if (!is_data(truth[k]) || !is_data(pred[k])) continue;
        const double d = truth[k] - pred[k];
        s += d * d;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("no land cells to score");
    return std::sqrt(s / static_cast<double>(n));
}

double smape(std::span<const double> truth, std::span<const double> pred) {
    check_pair(truth, pred);
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < truth.size(); ++k) {
        if (!is_data(truth[k]) || !is_data(pred[k])) continue;
        s += smape_term(truth[k], pred[k]);
        ++n;
    }
    if (n == 0) throw std::invalid_argument("no land cells to score");
    return s / static_cast<double>(n);
}

double rmse(const geo::IncidenceField& truth, const geo::IncidenceField& pred) {
    check_fields(truth, pred);
    return rmse(truth.values, pred.values);
}

double smape(const geo::IncidenceField& truth, const geo::IncidenceField& pred) {
    check_fields(truth, pred);
    return smape(truth.values, pred.values);
}

geo::IncidenceField abs_error_map(const geo::IncidenceField& truth, const geo::IncidenceField& pred) {
    check_fields(truth, pred);
    geo::IncidenceField out = truth;
    for (std::size_t k = 0; k < out.values.size(); ++k)
        out.values[k] = is_data(truth.values[k]) && is_data(pred.values[k])
                            ? std::abs(truth.values[k] - pred.values[k])
                            : geo::kNodata;
    return out;
}

geo::IncidenceField smape_map(const geo::IncidenceField& truth, const geo::IncidenceField& pred) {
    check_fields(truth, pred);
    geo::IncidenceField out = truth;
    for (std::size_t k = 0; k < out.values.size(); ++k)
        out.values[k] = is_data(truth.values[k]) && is_data(pred.values[k])
                            ? smape_term(truth.values[k], pred.values[k])
                            : geo::kNodata;
    return out;
}

void Dataset::validate() const {
    if (!territory || !territory->grid) throw DataError("dataset has no territory");
    if (gold.empty()) throw DataError("dataset has no days");
    const std::size_t n_land = territory->grid->n_land();
    for (std::size_t d = 0; d < gold.size(); ++d) {
        if (gold[d].values.size() != n_land)
            throw DataError("gold field for day " + std::to_string(d) + " has " +
                            std::to_string(gold[d].values.size()) + " values, grid has " +
                            std::to_string(n_land) + " land cells");
        if (gold[d].date != add_days(start, static_cast<long>(d)))
            throw DataError("gold field dates are not contiguous at " + format_iso_date(gold[d].date));
    }
    if (cases.size() > 0 &&
        (cases.rows() != days() || cases.cols() != static_cast<Eigen::Index>(territory->municipalities.size())))
        throw DataError("case panel must be days x municipalities");
    if (!national_deaths.empty() && static_cast<int>(national_deaths.size()) != days())
        throw DataError("national deaths must cover every day");
}

HistoryView::HistoryView(const Dataset& data, int origin) : data_(data), origin_(origin) {
    if (origin < 0 || origin >= data.days())
        throw std::invalid_argument("origin " + std::to_string(origin) + " outside the data range");
}

void HistoryView::guard(int day) const {
    if (day > origin_)
        throw LeakageError("forecaster asked for " + format_iso_date(date_of(day)) + " at origin " +
                           format_iso_date(origin_date()));
    if (day < 0) throw std::out_of_range("day " + std::to_string(day) + " precedes the data");
}

const geo::IncidenceField& HistoryView::field(int day) const {
    guard(day);
    return data_.gold[day];
}

Eigen::MatrixXd HistoryView::cell_panel(int first) const {
    guard(first);
    const auto n_land = static_cast<Eigen::Index>(data_.territory->grid->n_land());
    Eigen::MatrixXd out(origin_ - first + 1, n_land);
    for (int d = first; d <= origin_; ++d)
        for (Eigen::Index k = 0; k < n_land; ++k) out(d - first, k) = data_.gold[d].values[k];
    return out;
}

Eigen::MatrixXd HistoryView::dense_field(int day) const {
    const auto& f = field(day);
    const auto& g = *f.grid;
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(g.n_rows(), g.n_cols());
    const auto& cells = g.land_cells();
    for (std::size_t k = 0; k < cells.size(); ++k) {
        const double v = f.values[k];
        out(g.row_of(cells[k]), g.col_of(cells[k])) = is_data(v) ? v : 0.0;
    }
    return out;
}

std::vector<std::vector<double>> HistoryView::case_history() const {
    std::vector<std::vector<double>> out(data_.cases.cols(), std::vector<double>(origin_ + 1));
    for (Eigen::Index m = 0; m < data_.cases.cols(); ++m)
        for (int d = 0; d <= origin_; ++d) out[m][d] = data_.cases(d, m);
    return out;
}

std::vector<double> HistoryView::deaths_history() const {
    if (data_.national_deaths.empty()) return {};
    return {data_.national_deaths.begin(), data_.national_deaths.begin() + origin_ + 1};
}

std::vector<geo::IncidenceField> PersistenceForecaster::predict(const HistoryView& history,
                                                                std::span<const int> horizons) {
    std::vector<geo::IncidenceField> out;
    for (int h : horizons) {
        geo::IncidenceField f = history.field(history.origin());
        f.date = add_days(history.origin_date(), h);
        out.push_back(std::move(f));
    }
    return out;
}

void EvalConfig::validate(int n_days) const {
    if (horizons.empty()) throw UsageError("at least one horizon is required");
    for (int h : horizons)
        if (h < 1) throw UsageError("horizons must be >= 1");
    if (warmup_days < 1) throw UsageError("warmup must be at least one day");
    const int shortest = *std::min_element(horizons.begin(), horizons.end());
    if (warmup_days - 1 + shortest >= n_days)
        throw UsageError("the split leaves no test day: " + std::to_string(n_days) + " days, warmup " +
                         std::to_string(warmup_days) + ", horizon " + std::to_string(shortest));
}

ModelScores rolling_origin(Forecaster& forecaster, const Dataset& data, const EvalConfig& config,
                           const PredictionSink& sink) {
    data.validate();
    config.validate(data.days());
    ModelScores out;
    out.model = forecaster.name();
    const int first = config.warmup_days - 1;
    const int last_day = data.days() - 1;
    const int shortest = *std::min_element(config.horizons.begin(), config.horizons.end());
    forecaster.warmup(HistoryView(data, first));
    for (int origin = first; origin + shortest <= last_day; ++origin) {
        std::vector<int> due;
        for (int h : config.horizons)
            if (origin + h <= last_day) due.push_back(h);
        const HistoryView view(data, origin);
        const auto preds = forecaster.predict(view, due);
        if (preds.size() != due.size())
            throw std::logic_error(out.model + " returned " + std::to_string(preds.size()) + " fields for " +
                                   std::to_string(due.size()) + " horizons");
        for (std::size_t k = 0; k < due.size(); ++k) {
            const auto& truth = data.gold[origin + due[k]];
            DailyScore s;
            s.date = truth.date;
            s.horizon = due[k];
            s.rmse = rmse(truth, preds[k]);
            s.smape = smape(truth, preds[k]);
            out.days.push_back(s);
            if (sink) sink(due[k], truth, preds[k]);
        }
        forecaster.observe(view);
    }
    return out;
}

std::vector<SummaryRow> summarize(std::span<const ModelScores> scores) {
    std::vector<SummaryRow> rows;
    for (const auto& ms : scores) {
        std::vector<int> horizons;
        for (const auto& d : ms.days)
            if (std::find(horizons.begin(), horizons.end(), d.horizon) == horizons.end()) horizons.push_back(d.horizon);
        std::sort(horizons.begin(), horizons.end());
        for (int h : horizons) {
            std::vector<double> r, s;
            for (const auto& d : ms.days)
                if (d.horizon == h) {
                    r.push_back(d.rmse);
                    s.push_back(d.smape);
                }
            auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
                mean = 0.0;
                for (double x : v) mean += x;
                mean /= static_cast<double>(v.size());
                double ss = 0.0;
                for (double x : v) ss += (x - mean) * (x - mean);
                sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
            };
            SummaryRow row;
            row.model = ms.model;
            row.horizon = h;
            row.days = static_cast<int>(r.size());
            stats(r, row.rmse_mean, row.rmse_std);
            stats(s, row.smape_mean, row.smape_std);
            rows.push_back(row);
        }
    }
    return rows;
}

void write_scores_csv(const std::string& path, std::span<const ModelScores> scores) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "date,model,horizon,rmse,smape\n";
    for (const auto& ms : scores)
        for (const auto& d : ms.days)
            out << format_iso_date(d.date) << ',' << ms.model << ',' << d.horizon << ',' << detail::fmt6(d.rmse) << ','
                << detail::fmt6(d.smape) << '\n';
}

void write_summary_csv(const std::string& path, std::span<const SummaryRow> rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "model,horizon,rmse_mean,rmse_std,smape_mean,smape_std\n";
    for (const auto& r : rows)
        out << r.model << ',' << r.horizon << ',' << detail::fmt6(r.rmse_mean) << ',' << detail::fmt6(r.rmse_std)
            << ',' << detail::fmt6(r.smape_mean) << ',' << detail::fmt6(r.smape_std) << '\n';
}

}  // namespace covmap::eval
