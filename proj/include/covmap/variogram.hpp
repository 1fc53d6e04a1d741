#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "covmap/grid.hpp"

namespace covmap::geostat {

using geo::Point;

enum class Structure { spherical, exponential, gaussian };

Structure parse_structure(std::string_view name);
std::string_view to_string(Structure s);

/// Isotropic stationary variogram: nugget plus one structure of partial
/// sill `sill` and (practical) range `range_km`.
struct VariogramModel {
    Structure structure = Structure::spherical;
    double nugget = 0.0;
    double sill = 1.0;
    double range_km = 1.0;

    double total_sill() const { return nugget + sill; }
    /// Throws std::invalid_argument unless nugget >= 0, sill > 0, range > 0.
    void validate() const;
    /// Same shape with nugget and sill multiplied by `factor`.
    VariogramModel scaled(double factor) const;
};

/// Unit structure function f(h), rising from 0 to 1.
double structure_fn(Structure s, double h, double range);

/// gamma(0) = 0; gamma(h) = nugget + sill * f(h) for h > 0.
double gamma(const VariogramModel& model, double h);
/// C(h) = C(0) - gamma(h) with C(0) = nugget + sill.
double covariance(const VariogramModel& model, double h);
double cov_point(const VariogramModel& model, Point a, Point b);

/// Area support discretized by member cell centers.
struct BlockSupport {
    std::vector<Point> points;
};

/// Average point covariance over all pairs of member points.
double cov_block(const VariogramModel& model, const BlockSupport& a, const BlockSupport& b);
double cov_block(const VariogramModel& model, const BlockSupport& a, Point b);

struct VariogramSample {
    Point location;
    double value = 0.0;
    double population = 1.0;
};

struct LagBin {
    double lag = 0.0;           ///< mean pair distance (bin center when empty)
    double gamma = 0.0;         ///< population-weighted semivariance
    long pair_count = 0;
    double weight_sum = 0.0;
    double weighted_sq_sum = 0.0;  ///< sum of w * (z_i - z_j)^2 / 2
    double distance_sum = 0.0;
    bool empty() const { return pair_count == 0; }
};

struct ExperimentalVariogram {
    double lag_width = 1.0;
    std::vector<LagBin> bins;

    /// Pools pair sums from another table with identical binning.
    void merge(const ExperimentalVariogram& other);
};

/// Population-weighted experimental semivariogram. Pair weight is
/// n_i n_j / (n_i + n_j); bin k covers distances [k w, (k+1) w).
ExperimentalVariogram experimental_variogram(std::span<const VariogramSample> samples,
                                             double lag_width, int n_lags);

struct VariogramFit {
    VariogramModel model;
    double residual = 0.0;  ///< pair-count-weighted mean squared misfit
    bool degenerate = false;
    std::string warning;
};

/// Weighted least squares fit (weights = pair counts) of nugget, sill and
/// range. Requires at least three non-empty bins.
VariogramFit fit_variogram(const ExperimentalVariogram& table, Structure structure);

void write_variogram_csv(const std::filesystem::path& path, const ExperimentalVariogram& table);

}  // namespace covmap::geostat
