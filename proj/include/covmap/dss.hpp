#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "covmap/grid.hpp"
#include "covmap/kriging.hpp"
#include "covmap/variogram.hpp"

namespace covmap::dss {

/// Per-100k rates to per-person rates: a rate r over population n has
/// Poisson error variance kRateScale * r / n in per-100k units.
inline constexpr double kRateScale = 100000.0;

struct SimulationConfig {
    int n_realizations = 100;
    std::uint64_t seed = 0;
    int max_point_neighbors = 12;
    int max_block_neighbors = 4;
    double search_radius_km = 0.0;  ///< <= 0 means the variogram range
    /// Rescale the variogram so nugget + sill equals each day's
    /// population-weighted rate variance.
    bool rescale_sill_to_data = true;
    unsigned threads = 0;  ///< 0: hardware concurrency

    void validate() const;
};

/// One municipality's rate for one day.
struct BlockDatum {
    int municipality = 0;  ///< index into Territory::municipalities
    double rate = 0.0;     ///< incidence per 100k
    double population = 1.0;
};

/// Population-weighted empirical distribution of the day's block rates.
/// quantile() is the step inverse of the empirical cdf, so draws stay on the
/// data values; cdf() interpolates linearly between mid-rank positions and
/// is used to place a local mean in probability space.
class GlobalDistribution {
public:
    GlobalDistribution(std::span<const double> values, std::span<const double> weights);

    double cdf(double z) const;
    double quantile(double p) const;
    double mean() const { return mean_; }
    double variance() const { return variance_; }
    bool degenerate() const { return atoms_.size() == 1; }
    const std::vector<double>& atoms() const { return atoms_; }
    /// Cumulative probability at each atom (last one is 1).
    const std::vector<double>& cumulative() const { return cum_p_; }

private:
    std::vector<double> atoms_;
    std::vector<double> mid_p_;
    std::vector<double> cum_p_;
    double mean_ = 0.0;
    double variance_ = 0.0;
};

/// Local-distribution lookup for direct sequential simulation. A local
/// (mean, variance) pair is matched to a normal-score interval N(y, s^2)
/// whose back-transform through the global quantile function has exactly
/// that mean and, as closely as the histogram allows, that variance.
/// Draws therefore stay on the global histogram while being centered at the
/// local mean and spread by the local variance.
class LocalDrawTable {
public:
    explicit LocalDrawTable(const GlobalDistribution& dist);

    struct Gaussian {
        double mean = 0.0;
        double sd = 0.0;
    };
    /// Normal-score parameters for a local mean and variance.
    Gaussian match(double local_mean, double local_variance) const;
    /// Back-transform of y = mean + sd * deviate.
    double back_transform(double y) const;
    double draw(double local_mean, double local_variance, double normal_deviate) const;

    /// Mean and variance of the back-transformed N(y, s^2), computed exactly
    /// from the atom probabilities.
    std::pair<double, double> moments(double y, double s) const;

private:
    Gaussian match_grid(double local_mean, double local_variance) const;

    std::vector<double> atoms_;
    std::vector<double> thresholds_;  ///< normal scores of the cumulative probabilities
    std::vector<double> s_grid_;
    std::vector<double> y_grid_;
    std::vector<double> mean_;  ///< [s][y]
    std::vector<double> var_;   ///< [s][y]
};

struct SimulationStats {
    long clamped = 0;
    long empty_neighborhoods = 0;
    long ridge_fallbacks = 0;

    SimulationStats& operator+=(const SimulationStats& o) {
        clamped += o.clamped;
        empty_neighborhoods += o.empty_neighborhoods;
        ridge_fallbacks += o.ridge_fallbacks;
        return *this;
    }
};

/// Random visiting order over land ordinals; deterministic in `seed`.
std::vector<std::size_t> random_path(std::uint64_t seed, const geo::Grid& grid);

/// Geometry and covariance caches shared by all realizations on a territory.
/// Covariances are cached for the base model and scaled per day.
class DssContext {
public:
    DssContext(const geo::Territory& territory, VariogramModel base_model, SimulationConfig config);

    const geo::Territory& territory() const { return territory_; }
    const SimulationConfig& config() const { return config_; }
    const VariogramModel& base_model() const { return base_model_; }
    double search_radius() const { return radius_; }

    /// Land ordinal of the cell standing in for municipality m's centroid.
    std::size_t centroid_cell(int m) const { return centroid_ordinal_[m]; }
    std::span<const Point> support(int m) const { return supports_[m]; }
    double block_block_cov(int a, int b) const { return block_block_[a * n_blocks_ + b]; }
    double block_cell_cov(int m, std::size_t ordinal) const {
        return block_cell_[m * n_land_ + ordinal];
    }
    double block_cell_distance(int m, std::size_t ordinal) const {
        return block_dist_[m * n_land_ + ordinal];
    }
    struct Offset {
        int drow;
        int dcol;
        double distance;
    };
    /// Cell offsets within the search radius, nearest first.
    const std::vector<Offset>& offsets() const { return offsets_; }

private:
    const geo::Territory& territory_;
    VariogramModel base_model_;
    SimulationConfig config_;
    double radius_ = 0.0;
    std::size_t n_land_ = 0;
    std::size_t n_blocks_ = 0;
    std::vector<std::vector<Point>> supports_;
    std::vector<std::size_t> centroid_ordinal_;
    std::vector<double> block_block_;
    std::vector<double> block_cell_;
    std::vector<double> block_dist_;
    std::vector<Offset> offsets_;
};

/// Builds one day's data from per-municipality rates (territory order).
std::vector<BlockDatum> make_day_data(const geo::Territory& territory, std::span<const double> rates);

/// Population-weighted mean of the day's block rates.
double global_mean(std::span<const BlockDatum> day_data);

/// One conditional realization along a random path seeded by `seed`.
geo::IncidenceField simulate_realization(const DssContext& ctx, std::span<const BlockDatum> day_data,
                                         Date date, std::uint64_t seed,
                                         SimulationStats* stats = nullptr);

struct RealizationSet {
    std::vector<geo::IncidenceField> fields;
    std::vector<std::uint64_t> seeds;
    SimulationStats stats;
};

/// n_realizations realizations with seeds config.seed ^ index (computed in
/// parallel; results are independent of the thread count).
RealizationSet simulate_set(const DssContext& ctx, std::span<const BlockDatum> day_data, Date date,
                            std::uint64_t seed);

struct FieldSummary {
    geo::IncidenceField median;
    geo::IncidenceField lower;
    geo::IncidenceField upper;
};

/// Linear-interpolated order statistic (numpy "linear" definition) of
/// `values` at probability q. `values` is reordered.
double quantile_inplace(std::vector<double>& values, double q);

/// Per-cell median and central `ci_level` interval.
FieldSummary summarize(const RealizationSet& set, double ci_level);

/// Writes one raster per realization plus manifest.csv (realization,seed,file).
void write_realization_set(const std::filesystem::path& dir, const RealizationSet& set);

}  // namespace covmap::dss
