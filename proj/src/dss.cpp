#include "covmap/dss.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

#include "covmap/errors.hpp"
#include "covmap/parallel.hpp"
#include "covmap/raster.hpp"

namespace covmap::dss {

void SimulationConfig::validate() const {
    if (n_realizations < 1) throw std::invalid_argument("n_realizations must be >= 1");
    if (max_point_neighbors < 1 || max_block_neighbors < 1)
        throw std::invalid_argument("neighbor caps must be >= 1");
}

// ---------------------------------------------------------------------------
// Global distribution

GlobalDistribution::GlobalDistribution(std::span<const double> values, std::span<const double> weights) {
    if (values.empty() || values.size() != weights.size())
        throw std::invalid_argument("global distribution needs matching values and weights");
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });

    std::vector<double> w;
    double total = 0.0;
    for (std::size_t i : order) {
        if (weights[i] < 0.0) throw std::invalid_argument("negative distribution weight");
        if (!atoms_.empty() && values[i] == atoms_.back()) {
            w.back() += weights[i];
        } else {
            atoms_.push_back(values[i]);
            w.push_back(weights[i]);
        }
        total += weights[i];
    }
    if (!(total > 0.0)) throw std::invalid_argument("distribution weights sum to zero");

    double cum = 0.0;
    for (std::size_t k = 0; k < atoms_.size(); ++k) {
        mid_p_.push_back((cum + 0.5 * w[k]) / total);
        cum += w[k];
        cum_p_.push_back(cum / total);
        mean_ += w[k] * atoms_[k] / total;
    }
    cum_p_.back() = 1.0;
    for (std::size_t k = 0; k < atoms_.size(); ++k)
        variance_ += w[k] * (atoms_[k] - mean_) * (atoms_[k] - mean_) / total;
}

double GlobalDistribution::cdf(double v) const {
    if (v <= atoms_.front()) return mid_p_.front();
    if (v >= atoms_.back()) return mid_p_.back();
    const auto it = std::upper_bound(atoms_.begin(), atoms_.end(), v);
    const auto k = static_cast<std::size_t>(it - atoms_.begin());
    const double t = (v - atoms_[k - 1]) / (atoms_[k] - atoms_[k - 1]);
    return mid_p_[k - 1] + t * (mid_p_[k] - mid_p_[k - 1]);
}

double GlobalDistribution::quantile(double p) const {
    const auto it = std::lower_bound(cum_p_.begin(), cum_p_.end(), p);
    if (it == cum_p_.end()) return atoms_.back();
    return atoms_[static_cast<std::size_t>(it - cum_p_.begin())];
}

namespace {

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

constexpr int kYSteps = 401;
constexpr double kYLimit = 8.0;
constexpr int kSSteps = 40;
constexpr double kSMin = 0.01;
constexpr double kSMax = 3.0;

}  // namespace

LocalDrawTable::LocalDrawTable(const GlobalDistribution& dist) : atoms_(dist.atoms()) {
    static const boost::math::normal_distribution<double> unit;
    const auto& cum = dist.cumulative();
    for (std::size_t k = 0; k + 1 < cum.size(); ++k)
        thresholds_.push_back(boost::math::quantile(unit, std::clamp(cum[k], 1e-15, 1.0 - 1e-15)));
    if (atoms_.size() == 1) return;

    for (int i = 0; i < kSSteps; ++i)
        s_grid_.push_back(kSMin * std::pow(kSMax / kSMin, static_cast<double>(i) / (kSSteps - 1)));
    for (int j = 0; j < kYSteps; ++j)
        y_grid_.push_back(-kYLimit + 2.0 * kYLimit * j / (kYSteps - 1));
    mean_.resize(s_grid_.size() * y_grid_.size());
    var_.resize(mean_.size());
    for (std::size_t i = 0; i < s_grid_.size(); ++i) {
        for (std::size_t j = 0; j < y_grid_.size(); ++j) {
            const auto [m, v] = moments(y_grid_[j], s_grid_[i]);
            mean_[i * y_grid_.size() + j] = m;
            var_[i * y_grid_.size() + j] = v;
        }
    }
}

std::pair<double, double> LocalDrawTable::moments(double y, double s) const {
    double m = 0.0, m2 = 0.0, prev = 0.0;
    for (std::size_t k = 0; k < atoms_.size(); ++k) {
        const double c = k < thresholds_.size() ? std_normal_cdf((thresholds_[k] - y) / s) : 1.0;
        const double p = c - prev;
        prev = c;
        m += p * atoms_[k];
        m2 += p * atoms_[k] * atoms_[k];
    }
    return {m, std::max(0.0, m2 - m * m)};
}

LocalDrawTable::Gaussian LocalDrawTable::match_grid(double local_mean, double local_variance) const {
    if (atoms_.size() == 1) return {0.0, 0.0};
    const std::size_t ny = y_grid_.size();
    // For each s: invert the (increasing) mean curve, then read the variance.
    // Rows that cannot reach the local mean are never used.
    auto solve_row = [&](std::size_t i, double& y, double& v) {
        const double* mrow = &mean_[i * ny];
        const double* vrow = &var_[i * ny];
        if (local_mean <= mrow[0] || local_mean >= mrow[ny - 1]) return false;
        const auto j = static_cast<std::size_t>(std::upper_bound(mrow, mrow + ny, local_mean) - mrow);
        const double span = mrow[j] - mrow[j - 1];
        const double t = span > 0.0 ? (local_mean - mrow[j - 1]) / span : 0.0;
        y = y_grid_[j - 1] + t * (y_grid_[j] - y_grid_[j - 1]);
        v = vrow[j - 1] + t * (vrow[j] - vrow[j - 1]);
        return true;
    };
    double y_prev = 0.0, v_prev = 0.0;
    if (!solve_row(0, y_prev, v_prev)) {
        // Mean at or beyond the extreme atoms: collapse onto that atom.
        return {local_mean <= atoms_.front() ? -2.0 * kYLimit : 2.0 * kYLimit, 0.0};
    }
    double s_prev = s_grid_[0];
    if (local_variance <= v_prev) return {y_prev, s_prev};
    for (std::size_t i = 1; i < s_grid_.size(); ++i) {
        double y = 0.0, v = 0.0;
        if (!solve_row(i, y, v)) break;
        if (v >= local_variance) {
            const double t = v > v_prev ? (local_variance - v_prev) / (v - v_prev) : 1.0;
            return {y_prev + t * (y - y_prev), s_prev + t * (s_grid_[i] - s_prev)};
        }
        y_prev = y;
        v_prev = v;
        s_prev = s_grid_[i];
    }
    return {y_prev, s_prev};
}

LocalDrawTable::Gaussian LocalDrawTable::match(double local_mean, double local_variance) const {
    Gaussian g = match_grid(local_mean, local_variance);
    if (atoms_.size() == 1 || g.sd <= 0.0) return g;
    // Polish y so the back-transformed mean is exact for the chosen sd.
    auto f = [&](double y) { return moments(y, g.sd).first - local_mean; };
    double lo = g.mean, hi = g.mean, step = 0.05;
    while (f(lo) > 0.0 && lo > -4.0 * kYLimit) lo -= (step *= 2.0);
    step = 0.05;
    while (f(hi) < 0.0 && hi < 4.0 * kYLimit) hi += (step *= 2.0);
    for (int it = 0; it < 60 && hi - lo > 1e-12; ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < 0.0 ? lo : hi) = mid;
    }
    g.mean = 0.5 * (lo + hi);
    return g;
}

double LocalDrawTable::back_transform(double y) const {
    const auto k = static_cast<std::size_t>(std::lower_bound(thresholds_.begin(), thresholds_.end(), y) -
                                            thresholds_.begin());
    return atoms_[k];
}

double LocalDrawTable::draw(double local_mean, double local_variance, double normal_deviate) const {
    if (atoms_.size() == 1) return atoms_.front();
    const Gaussian g = match(local_mean, local_variance);
    return back_transform(g.mean + g.sd * normal_deviate);
}

// ---------------------------------------------------------------------------
// Paths and context

namespace {

std::vector<std::size_t> shuffled_path(std::mt19937_64& engine, std::size_t n) {
    std::vector<std::size_t> path(n);
    std::iota(path.begin(), path.end(), 0);
    std::shuffle(path.begin(), path.end(), engine);
    return path;
}

}  // namespace

std::vector<std::size_t> random_path(std::uint64_t seed, const geo::Grid& grid) {
    if (grid.n_land() == 0) throw std::invalid_argument("grid has no land cells");
    std::mt19937_64 engine(seed);
    return shuffled_path(engine, grid.n_land());
}

DssContext::DssContext(const geo::Territory& territory, VariogramModel base_model, SimulationConfig config)
    : territory_(territory), base_model_(base_model), config_(config) {
    base_model_.validate();
    config_.validate();
    if (config_.threads == 0) config_.threads = default_thread_count();
    radius_ = config_.search_radius_km > 0.0 ? config_.search_radius_km : base_model_.range_km;

    const geo::Grid& grid = *territory.grid;
    n_land_ = grid.n_land();
    n_blocks_ = territory.municipalities.size();
    supports_.resize(n_blocks_);
    centroid_ordinal_.resize(n_blocks_);
    for (std::size_t m = 0; m < n_blocks_; ++m) {
        const auto& muni = territory.municipalities[m];
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t cell : muni.member_cells) {
            const Point c = grid.center(cell);
            supports_[m].push_back(c);
            const double d = geo::distance(c, muni.centroid);
            if (d < best) {
                best = d;
                centroid_ordinal_[m] = static_cast<std::size_t>(grid.land_ordinal(cell));
            }
        }
    }

    geostat::BlockSupport a, b;
    block_block_.assign(n_blocks_ * n_blocks_, 0.0);
    for (std::size_t i = 0; i < n_blocks_; ++i) {
        a.points = supports_[i];
        for (std::size_t j = 0; j <= i; ++j) {
            b.points = supports_[j];
            block_block_[i * n_blocks_ + j] = block_block_[j * n_blocks_ + i] =
                geostat::cov_block(base_model_, a, b);
        }
    }

    block_cell_.assign(n_blocks_ * n_land_, 0.0);
    block_dist_.assign(n_blocks_ * n_land_, 0.0);
    std::vector<std::size_t> ms(n_blocks_);
    std::iota(ms.begin(), ms.end(), 0);
    parallel_for(n_blocks_, config_.threads, [&](std::size_t m) {
        for (std::size_t ord = 0; ord < n_land_; ++ord) {
            const Point target = grid.center(grid.land_cells()[ord]);
            double sum = 0.0, nearest = std::numeric_limits<double>::infinity();
            for (const Point& p : supports_[m]) {
                const double h = geo::distance(p, target);
                sum += geostat::covariance(base_model_, h);
                nearest = std::min(nearest, h);
            }
            block_cell_[m * n_land_ + ord] = sum / static_cast<double>(supports_[m].size());
            block_dist_[m * n_land_ + ord] = nearest;
        }
    });

    const int reach = static_cast<int>(std::ceil(radius_ / grid.cell_size()));
    for (int dr = -reach; dr <= reach; ++dr) {
        for (int dc = -reach; dc <= reach; ++dc) {
            if (dr == 0 && dc == 0) continue;
            const double d = std::hypot(dr, dc) * grid.cell_size();
            if (d <= radius_) offsets_.push_back({dr, dc, d});
        }
    }
    std::sort(offsets_.begin(), offsets_.end(), [](const Offset& x, const Offset& y) {
        if (x.distance != y.distance) return x.distance < y.distance;
        if (x.drow != y.drow) return x.drow < y.drow;
        return x.dcol < y.dcol;
    });
}

std::vector<BlockDatum> make_day_data(const geo::Territory& territory, std::span<const double> rates) {
    if (rates.size() != territory.municipalities.size())
        throw std::invalid_argument("one rate per municipality required");
    std::vector<BlockDatum> day(rates.size());
    for (std::size_t m = 0; m < rates.size(); ++m)
        day[m] = {static_cast<int>(m), rates[m], static_cast<double>(territory.municipalities[m].population)};
    return day;
}

double global_mean(std::span<const BlockDatum> day_data) {
    double s = 0.0, w = 0.0;
    for (const auto& d : day_data) {
        s += d.population * d.rate;
        w += d.population;
    }
    return w > 0.0 ? s / w : 0.0;
}

// ---------------------------------------------------------------------------
// Simulation

geo::IncidenceField simulate_realization(const DssContext& ctx, std::span<const BlockDatum> day_data,
                                         Date date, std::uint64_t seed, SimulationStats* stats) {
    const geo::Territory& territory = ctx.territory();
    const geo::Grid& grid = *territory.grid;
    const auto& cfg = ctx.config();
    const std::size_t n_land = grid.n_land();
    if (day_data.size() != territory.municipalities.size())
        throw std::invalid_argument("day data must cover every municipality");

    std::vector<double> rates(day_data.size()), pops(day_data.size());
    std::vector<int> seen(day_data.size(), 0);
    for (const auto& d : day_data) {
        if (d.municipality < 0 || d.municipality >= static_cast<int>(day_data.size()))
            throw std::invalid_argument("block datum references unknown municipality");
        if (!(d.rate >= 0.0)) throw std::invalid_argument("block rate must be >= 0");
        rates[d.municipality] = d.rate;
        pops[d.municipality] = d.population;
        seen[d.municipality] += 1;
    }
    if (std::any_of(seen.begin(), seen.end(), [](int s) { return s != 1; }))
        throw std::invalid_argument("day data must cover every municipality exactly once");

    geo::IncidenceField field = geo::IncidenceField::zeros(territory.grid, date);
    const GlobalDistribution dist(rates, pops);
    if (dist.degenerate()) {
        std::fill(field.values.begin(), field.values.end(), dist.atoms().front());
        return field;
    }

    const LocalDrawTable table(dist);
    const VariogramModel& base = ctx.base_model();
    const double factor = cfg.rescale_sill_to_data ? dist.variance() / base.total_sill() : 1.0;
    const double c0 = base.total_sill() * factor;
    const double mean = global_mean(day_data);
    const std::size_t n_blocks = rates.size();
    std::vector<double> error(n_blocks);
    for (std::size_t m = 0; m < n_blocks; ++m) error[m] = poisson_risk_variance(kRateScale * mean, pops[m], 0.0);

    std::vector<double> value(n_land, 0.0);
    std::vector<char> known(n_land, 0);
    for (std::size_t m = 0; m < n_blocks; ++m) {
        value[ctx.centroid_cell(static_cast<int>(m))] = rates[m];
        known[ctx.centroid_cell(static_cast<int>(m))] = 1;
    }

    std::mt19937_64 engine(seed);
    const std::vector<std::size_t> path = shuffled_path(engine, n_land);
    std::normal_distribution<double> normal(0.0, 1.0);

    const auto max_points = static_cast<std::size_t>(cfg.max_point_neighbors);
    const auto max_blocks = static_cast<std::size_t>(cfg.max_block_neighbors);
    std::vector<std::size_t> pts;
    std::vector<std::pair<double, int>> blocks;
    KrigingSystem sys;
    SimulationStats local;

    for (const std::size_t ord : path) {
        const double deviate = normal(engine);
        if (known[ord]) continue;
        const std::size_t cell = grid.land_cells()[ord];
        const int row = grid.row_of(cell), col = grid.col_of(cell);

        pts.clear();
        for (const auto& off : ctx.offsets()) {
            const int r = row + off.drow, c = col + off.dcol;
            if (!grid.contains(r, c)) continue;
            const long o = grid.land_ordinal(grid.cell_index(r, c));
            if (o < 0 || !known[o]) continue;
            pts.push_back(static_cast<std::size_t>(o));
            if (pts.size() == max_points) break;
        }
        blocks.clear();
        for (std::size_t m = 0; m < n_blocks; ++m) {
            const double d = ctx.block_cell_distance(static_cast<int>(m), ord);
            if (d <= ctx.search_radius()) blocks.emplace_back(d, static_cast<int>(m));
        }
        if (blocks.size() > max_blocks) {
            std::partial_sort(blocks.begin(), blocks.begin() + static_cast<long>(max_blocks), blocks.end());
            blocks.resize(max_blocks);
        }

        const auto np = static_cast<Eigen::Index>(pts.size());
        const auto n = np + static_cast<Eigen::Index>(blocks.size());
        sys.lhs.resize(n, n);
        sys.rhs.resize(n);
        sys.values.resize(n);
        sys.global_mean = mean;
        sys.point_variance = c0;
        const Point target = grid.center(cell);
        for (Eigen::Index i = 0; i < np; ++i) {
            const Point pi = grid.center(grid.land_cells()[pts[i]]);
            sys.values(i) = value[pts[i]];
            sys.rhs(i) = factor * geostat::covariance(base, geo::distance(pi, target));
            sys.lhs(i, i) = c0;
            for (Eigen::Index j = 0; j < i; ++j) {
                const Point pj = grid.center(grid.land_cells()[pts[j]]);
                sys.lhs(i, j) = sys.lhs(j, i) = factor * geostat::covariance(base, geo::distance(pi, pj));
            }
        }
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const int m = blocks[b].second;
            const Eigen::Index row_b = np + static_cast<Eigen::Index>(b);
            sys.values(row_b) = rates[m];
            sys.rhs(row_b) = factor * ctx.block_cell_cov(m, ord);
            for (Eigen::Index i = 0; i < np; ++i)
                sys.lhs(row_b, i) = sys.lhs(i, row_b) = factor * ctx.block_cell_cov(m, pts[i]);
            for (std::size_t c = 0; c <= b; ++c) {
                const Eigen::Index row_c = np + static_cast<Eigen::Index>(c);
                sys.lhs(row_b, row_c) = sys.lhs(row_c, row_b) = factor * ctx.block_block_cov(m, blocks[c].second);
            }
            sys.lhs(row_b, row_b) += error[m];
        }

        const KrigingResult kr = solve_kriging_system(sys);
        if (kr.empty_neighborhood) ++local.empty_neighborhoods;
        if (kr.ridge_fallback) ++local.ridge_fallbacks;
        double z = table.draw(kr.mean, kr.variance, deviate);
        if (z < 0.0) {
            z = 0.0;
            ++local.clamped;
        }
        value[ord] = z;
        known[ord] = 1;
    }
    field.values = std::move(value);
    if (stats) *stats += local;
    return field;
}

RealizationSet simulate_set(const DssContext& ctx, std::span<const BlockDatum> day_data, Date date,
                            std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(ctx.config().n_realizations);
    RealizationSet set;
    set.fields.resize(n);
    set.seeds.resize(n);
    std::vector<SimulationStats> stats(n);
    parallel_for(n, ctx.config().threads, [&](std::size_t r) {
        set.seeds[r] = seed ^ static_cast<std::uint64_t>(r);
        set.fields[r] = simulate_realization(ctx, day_data, date, set.seeds[r], &stats[r]);
    });
    for (const auto& s : stats) set.stats += s;
    return set;
}

// ---------------------------------------------------------------------------
// Summaries

double quantile_inplace(std::vector<double>& v, double q) {
    if (v.empty()) throw std::invalid_argument("quantile of empty sample");
    const double h = (static_cast<double>(v.size()) - 1.0) * q;
    const auto k = static_cast<std::size_t>(std::floor(h));
    const double frac = h - static_cast<double>(k);
    std::nth_element(v.begin(), v.begin() + static_cast<long>(k), v.end());
    const double lo = v[k];
    if (frac == 0.0 || k + 1 >= v.size()) return lo;
    const double hi = *std::min_element(v.begin() + static_cast<long>(k) + 1, v.end());
    return lo + frac * (hi - lo);
}

FieldSummary summarize(const RealizationSet& set, double ci_level) {
    if (set.fields.empty()) throw std::invalid_argument("summarize needs >= 1 realization");
    if (!(ci_level > 0.0 && ci_level < 1.0)) throw std::invalid_argument("ci_level must be in (0, 1)");
    const auto& first = set.fields.front();
    FieldSummary out{geo::IncidenceField::zeros(first.grid, first.date),
                     geo::IncidenceField::zeros(first.grid, first.date),
                     geo::IncidenceField::zeros(first.grid, first.date)};
    const double tail = std::round(0.5e12 * (1.0 - ci_level)) / 1e12;
    std::vector<double> sample(set.fields.size());
    for (std::size_t ord = 0; ord < first.values.size(); ++ord) {
        for (std::size_t r = 0; r < set.fields.size(); ++r) sample[r] = set.fields[r].values[ord];
        out.median.values[ord] = quantile_inplace(sample, 0.5);
        out.lower.values[ord] = std::min(quantile_inplace(sample, tail), out.median.values[ord]);
        out.upper.values[ord] = std::max(quantile_inplace(sample, 1.0 - tail), out.median.values[ord]);
    }
    return out;
}

void write_realization_set(const std::filesystem::path& dir, const RealizationSet& set) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.csv");
    if (!manifest) throw DataError("cannot write " + (dir / "manifest.csv").string());
    manifest << "realization,seed,file\n";
    char name[64];
    for (std::size_t r = 0; r < set.fields.size(); ++r) {
        std::snprintf(name, sizeof name, "realization_%04zu.asc", r);
        geo::write_esri_ascii(dir / name, set.fields[r]);
        manifest << r << ',' << set.seeds[r] << ',' << name << '\n';
    }
}

}  // namespace covmap::dss
