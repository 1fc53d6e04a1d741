#include "covmap/variogram.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "covmap/errors.hpp"
#include "csv_util.hpp"

namespace covmap::geostat {

namespace {
constexpr double kSillFloor = 1e-9;
}

Structure parse_structure(std::string_view text) {
    std::string name(text);
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    if (name == "spherical") return Structure::spherical;
    if (name == "exponential") return Structure::exponential;
    if (name == "gaussian") return Structure::gaussian;
    throw std::invalid_argument("unknown variogram structure '" + std::string(text) + "'");
}

std::string_view to_string(Structure s) {
    switch (s) {
        case Structure::spherical: return "spherical";
        case Structure::exponential: return "exponential";
        case Structure::gaussian: return "gaussian";
    }
    return "?";
}

void VariogramModel::validate() const {
    if (!(nugget >= 0.0)) throw std::invalid_argument("variogram nugget must be >= 0");
    if (!(sill > 0.0)) throw std::invalid_argument("variogram sill must be > 0");
    if (!(range_km > 0.0)) throw std::invalid_argument("variogram range must be > 0");
}

VariogramModel VariogramModel::scaled(double factor) const {
    VariogramModel m = *this;
    m.nugget *= factor;
    m.sill *= factor;
    return m;
}

double structure_fn(Structure s, double h, double a) {
    switch (s) {
        case Structure::spherical: {
            if (h >= a) return 1.0;
            const double r = h / a;
            return 1.5 * r - 0.5 * r * r * r;
        }
        case Structure::exponential:
            return 1.0 - std::exp(-3.0 * h / a);
        case Structure::gaussian:
            return 1.0 - std::exp(-3.0 * (h * h) / (a * a));
    }
    return 0.0;
}

double gamma(const VariogramModel& model, double h) {
    if (h < 0.0) throw std::invalid_argument("variogram lag must be >= 0");
    if (h == 0.0) return 0.0;
    return model.nugget + model.sill * structure_fn(model.structure, h, model.range_km);
}

double covariance(const VariogramModel& model, double h) {
    return model.total_sill() - gamma(model, h);
}

double cov_point(const VariogramModel& model, Point a, Point b) {
    return covariance(model, geo::distance(a, b));
}

double cov_block(const VariogramModel& model, const BlockSupport& a, const BlockSupport& b) {
    if (a.points.empty() || b.points.empty()) throw std::invalid_argument("empty block support");
    double sum = 0.0;
    for (const Point& p : a.points)
        for (const Point& q : b.points) sum += cov_point(model, p, q);
    return sum / (static_cast<double>(a.points.size()) * static_cast<double>(b.points.size()));
}

double cov_block(const VariogramModel& model, const BlockSupport& a, Point b) {
    if (a.points.empty()) throw std::invalid_argument("empty block support");
    double sum = 0.0;
    for (const Point& p : a.points) sum += cov_point(model, p, b);
    return sum / static_cast<double>(a.points.size());
}

void ExperimentalVariogram::merge(const ExperimentalVariogram& other) {
    if (other.bins.size() != bins.size() || other.lag_width != lag_width)
        throw std::invalid_argument("cannot merge variogram tables with different binning");
    for (std::size_t k = 0; k < bins.size(); ++k) {
        LagBin& b = bins[k];
        const LagBin& o = other.bins[k];
        b.pair_count += o.pair_count;
        b.weight_sum += o.weight_sum;
        b.weighted_sq_sum += o.weighted_sq_sum;
        b.distance_sum += o.distance_sum;
        b.gamma = b.weight_sum > 0.0 ? b.weighted_sq_sum / b.weight_sum : 0.0;
        b.lag = b.pair_count > 0 ? b.distance_sum / b.pair_count : (k + 0.5) * lag_width;
    }
}

ExperimentalVariogram experimental_variogram(std::span<const VariogramSample> samples,
                                             double lag_width, int n_lags) {
    if (samples.size() < 2) throw std::invalid_argument("experimental variogram needs >= 2 samples");
    if (!(lag_width > 0.0) || n_lags < 1)
        throw std::invalid_argument("lag width must be > 0 and n_lags >= 1");
    ExperimentalVariogram table;
    table.lag_width = lag_width;
    table.bins.resize(n_lags);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (std::size_t j = i + 1; j < samples.size(); ++j) {
            const double h = geo::distance(samples[i].location, samples[j].location);
            const auto k = static_cast<long>(std::floor(h / lag_width));
            if (k >= n_lags) continue;
            const double ni = samples[i].population, nj = samples[j].population;
            const double w = ni * nj / (ni + nj);
            const double dz = samples[i].value - samples[j].value;
            LagBin& b = table.bins[k];
            b.pair_count += 1;
            b.weight_sum += w;
            b.weighted_sq_sum += w * dz * dz * 0.5;
            b.distance_sum += h;
        }
    }
    for (std::size_t k = 0; k < table.bins.size(); ++k) {
        LagBin& b = table.bins[k];
        b.gamma = b.weight_sum > 0.0 ? b.weighted_sq_sum / b.weight_sum : 0.0;
        b.lag = b.pair_count > 0 ? b.distance_sum / b.pair_count : (k + 0.5) * lag_width;
    }
    return table;
}

namespace {

struct LinearFit {
    double nugget = 0.0;
    double sill = 0.0;
    double sse = std::numeric_limits<double>::infinity();
};

// For fixed range the model is linear in (nugget, sill); solve the 2x2
// weighted normal equations, falling back to nugget = 0 when it goes negative.
LinearFit fit_linear(const std::vector<const LagBin*>& bins, Structure s, double range) {
    double sw = 0, sf = 0, sff = 0, sg = 0, sfg = 0;
    for (const LagBin* b : bins) {
        const double w = static_cast<double>(b->pair_count);
        const double f = structure_fn(s, b->lag, range);
        sw += w;
        sf += w * f;
        sff += w * f * f;
        sg += w * b->gamma;
        sfg += w * f * b->gamma;
    }
    LinearFit fit;
    const double det = sw * sff - sf * sf;
    if (std::abs(det) > 1e-14 * sw * sff) {
        fit.nugget = (sff * sg - sf * sfg) / det;
        fit.sill = (sw * sfg - sf * sg) / det;
    }
    if (!(fit.nugget >= 0.0) || std::abs(det) <= 1e-14 * sw * sff) {
        fit.nugget = 0.0;
        fit.sill = sff > 0.0 ? sfg / sff : 0.0;
    }
    if (fit.sill < kSillFloor) {
        fit.sill = kSillFloor;
        fit.nugget = std::max(0.0, (sg - kSillFloor * sf) / sw);
    }
    fit.sse = 0.0;
    for (const LagBin* b : bins) {
        const double r = b->gamma - fit.nugget - fit.sill * structure_fn(s, b->lag, range);
        fit.sse += static_cast<double>(b->pair_count) * r * r;
    }
    return fit;
}

}  // namespace

VariogramFit fit_variogram(const ExperimentalVariogram& table, Structure structure) {
    std::vector<const LagBin*> bins;
    for (const auto& b : table.bins)
        if (!b.empty()) bins.push_back(&b);
    if (bins.size() < 3) throw std::invalid_argument("variogram fit needs >= 3 non-empty bins");

    double max_lag = 0.0, min_lag = std::numeric_limits<double>::infinity(), total_w = 0.0;
    bool flat = true;
    for (const LagBin* b : bins) {
        max_lag = std::max(max_lag, b->lag);
        if (b->lag > 0.0) min_lag = std::min(min_lag, b->lag);
        total_w += static_cast<double>(b->pair_count);
        if (b->gamma > 0.0) flat = false;
    }
    if (!std::isfinite(min_lag)) min_lag = table.lag_width;

    VariogramFit out;
    out.model.structure = structure;
    if (flat) {
        out.model.nugget = 0.0;
        out.model.sill = kSillFloor;
        out.model.range_km = max_lag > 0.0 ? max_lag : table.lag_width;
        out.degenerate = true;
        out.warning = "experimental variogram is flat; sill set to floor";
        return out;
    }

    // Coarse log-spaced scan over the range, then golden-section refinement.
    const double lo = 0.25 * min_lag, hi = 4.0 * max_lag;
    constexpr int kScan = 400;
    double best_a = lo;
    double best_sse = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= kScan; ++i) {
        const double a = lo * std::pow(hi / lo, static_cast<double>(i) / kScan);
        const double sse = fit_linear(bins, structure, a).sse;
        if (sse < best_sse) {
            best_sse = sse;
            best_a = a;
        }
    }
    const double step = std::pow(hi / lo, 1.0 / kScan);
    double a = best_a / step, b = best_a * step;
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - phi * (b - a), d = a + phi * (b - a);
    double fc = fit_linear(bins, structure, c).sse, fd = fit_linear(bins, structure, d).sse;
    for (int it = 0; it < 200 && (b - a) > 1e-12 * best_a; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = fit_linear(bins, structure, c).sse;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = fit_linear(bins, structure, d).sse;
        }
    }
    double range = 0.5 * (a + b);
    LinearFit fit = fit_linear(bins, structure, range);
    if (best_sse < fit.sse) {
        range = best_a;
        fit = fit_linear(bins, structure, range);
    }
    out.model.nugget = fit.nugget;
    out.model.sill = fit.sill;
    out.model.range_km = range;
    out.residual = fit.sse / total_w;
    return out;
}

void write_variogram_csv(const std::filesystem::path& path, const ExperimentalVariogram& table) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "lag,gamma,pairs,empty\n";
    for (const auto& b : table.bins)
        out << detail::fmt6(b.lag) << ',' << detail::fmt6(b.gamma) << ',' << b.pair_count << ','
            << (b.empty() ? 1 : 0) << '\n';
}

}  // namespace covmap::geostat
