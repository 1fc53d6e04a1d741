#include "covmap/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "covmap/errors.hpp"
#include "covmap/raster.hpp"
#include "covmap/seeds.hpp"
#include "csv_util.hpp"

namespace covmap::pipeline {

namespace pt = boost::property_tree;
using detail::fmt6;
using detail::fmt17;

namespace {

double wave_activity(const Wave& w, int t) {
    if (t < w.start || t >= w.start + w.duration) return 0.0;
    const double s = std::sin(std::numbers::pi * (t - w.start) / w.duration);
    return s * s;
}

/// Rounded draw around the expected count; noise 0 keeps the expectation.
double report(double expected, double noise, std::mt19937_64& rng) {
    if (expected <= 0.0) return 0.0;
    std::poisson_distribution<long long> pois(expected);
    const double drawn = static_cast<double>(pois(rng));
    return std::max(0.0, std::round(expected + noise * (drawn - expected)));
}

geo::Territory synthetic_territory(const SyntheticSpec& spec, std::mt19937_64& rng) {
    std::vector<geo::CellRect> rects;
    std::vector<geo::PopulationRow> pops;
    const int bw = spec.grid_cols / spec.municipality_cols;
    const int bh = spec.grid_rows / spec.municipality_rows;
    std::uniform_int_distribution<long long> pop(spec.min_population / 1000, spec.max_population / 1000);
    int k = 0;
    for (int br = 0; br < spec.municipality_rows; ++br)
        for (int bc = 0; bc < spec.municipality_cols; ++bc) {
            ++k;
            char id[16];
            std::snprintf(id, sizeof id, "M%02d", k);
            const int c1 = bc + 1 == spec.municipality_cols ? spec.grid_cols : (bc + 1) * bw;
            const int r1 = br + 1 == spec.municipality_rows ? spec.grid_rows : (br + 1) * bh;
            rects.push_back({id, bc * bw, c1, br * bh, r1});
            pops.push_back({id, "Municipality " + std::to_string(k), pop(rng) * 1000});
        }
    const auto rows = geo::rasterize_rectangles(rects);
    geo::GridParams gp{spec.grid_cols, spec.grid_rows, spec.cell_km, 0.0, 0.0};
    return geo::build_grid(gp, rows, pops);
}

std::vector<Wave> parse_waves(const std::string& text) {
    std::vector<Wave> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        item = detail::trim(item);
        if (item.empty()) continue;
        const auto f = detail::split(item, ':');
        if (f.size() != 3) throw UsageError("wave '" + item + "' must be start:peak_beta:duration");
        const auto s = detail::parse_number<int>(f[0]);
        const auto b = detail::parse_number<double>(f[1]);
        const auto d = detail::parse_number<int>(f[2]);
        if (!s || !b || !d) throw UsageError("wave '" + item + "' has a malformed number");
        out.push_back({*s, *b, *d});
    }
    return out;
}

std::string waves_text(const std::vector<Wave>& waves) {
    std::string out;
    for (std::size_t k = 0; k < waves.size(); ++k) {
        if (k) out += ";";
        out += std::to_string(waves[k].start) + ":" + fmt17(waves[k].peak_beta) + ":" +
               std::to_string(waves[k].duration);
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& key) {
    std::vector<int> out;
    for (const auto& f : detail::split(text, ',')) {
        const auto v = detail::parse_number<int>(f);
        if (!v) throw UsageError(key + ": '" + f + "' is not an integer");
        out.push_back(*v);
    }
    return out;
}

std::map<int, double> parse_pseudo_counts(const std::string& text) {
    std::map<int, double> out;
    for (const auto& item : detail::split(text, ',')) {
        if (item.empty()) continue;
        const auto f = detail::split(item, ':');
        if (f.size() != 2) throw UsageError("sird.pseudo_counts entries must be horizon:K");
        const auto h = detail::parse_number<int>(f[0]);
        const auto k = detail::parse_number<double>(f[1]);
        if (!h || !k) throw UsageError("sird.pseudo_counts: malformed entry '" + item + "'");
        out[*h] = *k;
    }
    return out;
}

std::string projection_name(sird::Projection p) {
    switch (p) {
        case sird::Projection::last: return "last";
        case sird::Projection::mean_n: return "mean_n";
        case sird::Projection::linear_extrapolation: return "linear_extrapolation";
    }
    return "last";
}

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys{
        {"paths", {"cells", "municipalities", "cases", "national", "gold_dir", "output_dir"}},
        {"grid", {"n_cols", "n_rows", "cell_size_km", "origin_x_km", "origin_y_km"}},
        {"variogram", {"mode", "structure", "nugget", "sill", "range_km"}},
        {"simulation",
         {"realizations", "max_point_neighbors", "max_block_neighbors", "search_radius_km", "rescale_sill",
          "threads", "ci_level"}},
        {"sird",
         {"pseudo_count", "pseudo_counts", "recovery_window", "bandwidth", "projection", "mean_n",
          "extrapolation_window", "incidence_window"}},
        {"arma", {"p", "q", "max_growth"}},
        {"var", {"p", "ridge", "max_cells"}},
        {"stconv",
         {"layers_per_block", "base_filters", "spatial_kernel", "temporal_kernel", "li_count", "lw_kernel",
          "value_scale", "eps", "momentum", "lr", "beta3", "optimizer_eps", "batch_size", "online_epochs", "warmup_epochs", "bands",
          "reduce_to_block_input"}},
        {"evaluation", {"horizons", "warmup_days"}},
        {"synthetic",
         {"grid_cols", "grid_rows", "cell_km", "municipality_cols", "municipality_rows", "days", "start", "waves",
          "noise", "gamma", "delta", "coupling_km", "coupling_strength", "imports_per_100k", "initial_infected",
          "min_population", "max_population", "gold_realizations", "structure", "nugget", "sill", "range_km"}},
        {"run", {"seed"}},
    };
    return keys;
}

template <class T>
T get(const pt::ptree& tree, const std::string& key, const T& fallback) {
    const auto node = tree.get_optional<std::string>(key);
    if (!node) return fallback;
    const std::string text = detail::trim(*node);
    if constexpr (std::is_same_v<T, std::string>) {
        return text;
    } else if constexpr (std::is_same_v<T, bool>) {
        if (text == "true" || text == "1" || text == "yes") return true;
        if (text == "false" || text == "0" || text == "no") return false;
        throw UsageError(key + ": expected true or false, got '" + text + "'");
    } else {
        const auto v = detail::parse_number<T>(text);
        if (!v) throw UsageError(key + ": cannot parse '" + text + "'");
        return *v;
    }
}

fs::path resolve(const fs::path& base, const std::string& text) {
    if (text.empty()) return {};
    const fs::path p(text);
    return p.is_absolute() ? p : (base / p).lexically_normal();
}

std::string relative_text(const fs::path& p, const fs::path& base) {
    if (p.empty()) return "";
    if (base.empty()) return p.generic_string();
    const auto rel = p.lexically_relative(base);
    return rel.empty() ? p.generic_string() : rel.generic_string();
}

std::string date_file(Date d) { return format_iso_date(d) + ".asc"; }

void add_file(RunResult& run, const fs::path& absolute) {
    run.files.push_back(absolute.lexically_relative(run.directory));
}

}  // namespace

void SyntheticSpec::validate() const {
    if (grid_cols < 1 || grid_rows < 1) throw UsageError("synthetic grid dimensions must be >= 1");
    if (!(cell_km > 0.0)) throw UsageError("synthetic cell size must be > 0");
    if (municipality_cols < 1 || municipality_rows < 1) throw UsageError("municipality counts must be >= 1");
    if (municipality_cols > grid_cols || municipality_rows > grid_rows)
        throw UsageError("more municipality columns/rows than grid cells");
    if (days < 1) throw UsageError("synthetic calendar must have >= 1 day");
    for (const auto& w : waves) {
        if (w.duration < 1) throw UsageError("wave duration must be >= 1");
        if (w.start < 0 || w.start + w.duration > days) throw UsageError("waves must lie within the calendar");
        if (w.peak_beta < 0.0) throw UsageError("wave peak beta must be >= 0");
    }
    if (noise < 0.0 || noise > 1.0) throw UsageError("noise must be in [0, 1]");
    if (gamma < 0.0 || delta < 0.0 || gamma + delta > 1.0) throw UsageError("gamma and delta must be rates in [0, 1]");
    if (!(coupling_km > 0.0) || coupling_strength < 0.0) throw UsageError("coupling parameters out of range");
    if (imports_per_100k < 0.0 || initial_infected < 0.0) throw UsageError("imports and seeds must be >= 0");
    if (min_population < 1000 || max_population < min_population) throw UsageError("population range invalid");
    if (gold_realizations < 1) throw UsageError("gold realizations must be >= 1");
    variogram.validate();
}

Eigen::MatrixXd incidence_panel(const Eigen::MatrixXd& cases, const geo::Territory& territory, int window) {
    Eigen::MatrixXd out(cases.rows(), cases.cols());
    for (Eigen::Index m = 0; m < cases.cols(); ++m) {
        std::vector<double> series(cases.rows());
        for (Eigen::Index t = 0; t < cases.rows(); ++t) series[t] = cases(t, m);
        const double pop = static_cast<double>(territory.municipalities[m].population);
        for (Eigen::Index t = 0; t < cases.rows(); ++t)
            out(t, m) = sird::trailing_incidence(series, static_cast<std::size_t>(t + 1), window, pop);
    }
    return out;
}

SyntheticCountry generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed, unsigned threads) {
    spec.validate();
    std::mt19937_64 layout_rng(derive_seed(seed, {1}));
    std::mt19937_64 noise_rng(derive_seed(seed, {2}));
    SyntheticCountry out;
    out.territory = synthetic_territory(spec, layout_rng);
    const auto& muni = out.territory.municipalities;
    const int M = static_cast<int>(muni.size());
    const int T = spec.days;

    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> susceptibility(M);
    for (auto& s : susceptibility) s = 1.0 + 0.15 * u(layout_rng);
    Eigen::MatrixXd coupling(M, M);
    for (int a = 0; a < M; ++a)
        for (int b = 0; b < M; ++b)
            coupling(a, b) = a == b ? 1.0
                                    : spec.coupling_strength *
                                          std::exp(-geo::distance(muni[a].centroid, muni[b].centroid) / spec.coupling_km);

    std::vector<double> N(M), S(M), I(M, 0.0), R(M, 0.0), D(M, 0.0);
    for (int a = 0; a < M; ++a) N[a] = static_cast<double>(muni[a].population);
    I[0] = std::min(spec.initial_infected, N[0]);
    for (int a = 0; a < M; ++a) S[a] = N[a] - I[a];

    out.clean_cases = Eigen::MatrixXd::Zero(T, M);
    out.panel.cases = Eigen::MatrixXd::Zero(T, M);
    out.panel.start = spec.start;
    out.national.start = spec.start;
    out.national.cases.assign(T, 0.0);
    out.national.deaths.assign(T, 0.0);
    for (int t = 0; t < T; ++t) {
        double activity = 0.0, beta = 0.0;
        for (const auto& w : spec.waves) {
            const double a = wave_activity(w, t);
            activity += a;
            beta += w.peak_beta * a;
        }
        std::vector<double> prevalence(M);
        for (int b = 0; b < M; ++b) prevalence[b] = I[b] / N[b];
        double deaths_expected = 0.0;
        for (int a = 0; a < M; ++a) {
            double pressure = 0.0;
            for (int b = 0; b < M; ++b) pressure += coupling(a, b) * prevalence[b];
            const double imports = spec.imports_per_100k * N[a] / 1e5 * activity;
            double infections = (beta * susceptibility[a] * pressure + imports / N[a]) * S[a];
            infections = std::clamp(infections, 0.0, S[a]);
            const double rec = spec.gamma * I[a];
            const double die = spec.delta * I[a];
            S[a] -= infections;
            I[a] += infections - rec - die;
            R[a] += rec;
            D[a] += die;
            deaths_expected += die;
            out.clean_cases(t, a) = infections;
            out.panel.cases(t, a) = report(infections, spec.noise, noise_rng);
            out.national.cases[t] += out.panel.cases(t, a);
        }
        out.national.deaths[t] = report(deaths_expected, spec.noise, noise_rng);
    }
    out.panel.incidence = incidence_panel(out.panel.cases, out.territory);
    out.clean_incidence = incidence_panel(out.clean_cases, out.territory);

    dss::SimulationConfig sim;
    sim.n_realizations = spec.gold_realizations;
    sim.threads = threads;
    const dss::DssContext ctx(out.territory, spec.variogram, sim);
    for (int t = 0; t < T; ++t) {
        std::vector<double> rates(M);
        for (int a = 0; a < M; ++a) rates[a] = out.clean_incidence(t, a);
        const auto data = dss::make_day_data(out.territory, rates);
        const Date date = add_days(spec.start, t);
        const auto set = dss::simulate_set(ctx, data, date, derive_seed(seed, {3, static_cast<std::uint64_t>(t)}));
        auto median = dss::summarize(set, 0.95).median;
        median.date = date;
        out.gold.push_back(std::move(median));
    }
    return out;
}

MunicipalityPanel ingest_cases(const fs::path& path, const geo::Territory& territory, int window) {
    detail::CsvReader in(path, "date,municipality_id,new_cases");
    struct Row {
        Date date;
        int m;
        double value;
        int line;
    };
    std::vector<Row> rows;
    std::vector<std::string> f;
    while (in.next(f)) {
        if (f.size() != 3) in.fail("expected 3 fields");
        Date d;
        try {
            d = parse_iso_date(f[0]);
        } catch (const DataError&) {
            in.fail("malformed date '" + f[0] + "'");
        }
        const int m = territory.find(f[1]);
        if (m < 0) in.fail("unknown municipality id '" + f[1] + "'");
        const auto v = detail::parse_number<double>(f[2]);
        if (!v || !std::isfinite(*v)) in.fail("new_cases must be a number");
        if (*v < 0.0) in.fail("negative case count " + f[2]);
        rows.push_back({d, m, *v, in.line()});
    }
    if (rows.empty()) throw DataError(path.string() + ": no case records");
    Date first = rows.front().date, last = rows.front().date;
    for (const auto& r : rows) {
        first = std::min(first, r.date);
        last = std::max(last, r.date);
    }
    MunicipalityPanel panel;
    panel.start = first;
    const auto days = days_between(first, last) + 1;
    const auto M = static_cast<Eigen::Index>(territory.municipalities.size());
    panel.cases = Eigen::MatrixXd::Zero(days, M);
    Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(days, M);
    for (const auto& r : rows) {
        const auto t = days_between(first, r.date);
        if (seen(t, r.m))
            throw DataError(path.string() + ":" + std::to_string(r.line) + ": duplicate record for " +
                            territory.municipalities[r.m].id + " on " + format_iso_date(r.date));
        seen(t, r.m) = 1;
        panel.cases(t, r.m) = r.value;
    }
    panel.filled_gaps = static_cast<int>(days * M - seen.sum());
    panel.incidence = incidence_panel(panel.cases, territory, window);
    return panel;
}

void write_cases_csv(const fs::path& path, const geo::Territory& territory, const MunicipalityPanel& panel) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "date,municipality_id,new_cases\n";
    for (int t = 0; t < panel.days(); ++t)
        for (std::size_t m = 0; m < territory.municipalities.size(); ++m)
            out << format_iso_date(panel.date_of(t)) << ',' << territory.municipalities[m].id << ','
                << fmt6(panel.cases(t, static_cast<Eigen::Index>(m))) << '\n';
}

NationalSeries read_national_csv(const fs::path& path) {
    detail::CsvReader in(path, "date,new_cases,deaths");
    NationalSeries s;
    std::vector<std::string> f;
    Date expected{};
    while (in.next(f)) {
        if (f.size() != 3) in.fail("expected 3 fields");
        Date d;
        try {
            d = parse_iso_date(f[0]);
        } catch (const DataError&) {
            in.fail("malformed date '" + f[0] + "'");
        }
        if (s.cases.empty())
            s.start = d;
        else if (d != expected)
            in.fail("dates must be contiguous and increasing; expected " + format_iso_date(expected));
        expected = add_days(d, 1);
        const auto c = detail::parse_number<double>(f[1]);
        const auto k = detail::parse_number<double>(f[2]);
        if (!c || !k) in.fail("counts must be numbers");
        if (*c < 0.0 || *k < 0.0) in.fail("negative count");
        s.cases.push_back(*c);
        s.deaths.push_back(*k);
    }
    if (s.cases.empty()) throw DataError(path.string() + ": no records");
    return s;
}

void write_national_csv(const fs::path& path, const NationalSeries& series) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "date,new_cases,deaths\n";
    for (std::size_t t = 0; t < series.cases.size(); ++t)
        out << format_iso_date(add_days(series.start, static_cast<long>(t))) << ',' << fmt6(series.cases[t]) << ','
            << fmt6(series.deaths[t]) << '\n';
}

void write_municipality_matrix_csv(const fs::path& path, const geo::Territory& territory, Date start,
                                   const Eigen::MatrixXd& values) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "date";
    for (const auto& m : territory.municipalities) out << ',' << m.id;
    out << '\n';
    for (Eigen::Index t = 0; t < values.rows(); ++t) {
        out << format_iso_date(add_days(start, static_cast<long>(t)));
        for (Eigen::Index m = 0; m < values.cols(); ++m) out << ',' << fmt6(values(t, m));
        out << '\n';
    }
}

fs::path gold_path(const fs::path& dir, Date date) { return dir / date_file(date); }

std::vector<geo::IncidenceField> read_gold(const fs::path& dir, std::shared_ptr<const geo::Grid> grid, Date start,
                                           int days) {
    std::vector<geo::IncidenceField> out;
    for (int t = 0; t < days; ++t) {
        const Date d = add_days(start, t);
        const auto p = gold_path(dir, d);
        if (!fs::exists(p)) throw DataError("missing gold raster " + p.string());
        out.push_back(geo::from_raster(geo::read_esri_ascii(p), grid, d));
    }
    return out;
}

void PipelineConfig::validate() const {
    variogram.validate();
    simulation.validate();
    if (!(ci_level > 0.0 && ci_level < 1.0)) throw UsageError("simulation.ci_level must be in (0, 1)");
    try {
        sird.validate();
        model.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (arma.p < 1 || arma.q < 0 || !(arma.max_growth > 0.0))
        throw UsageError("arma.p must be >= 1, arma.q >= 0 and arma.max_growth > 0");
    if (var.p < 1 || var.ridge < 0.0 || var.max_cells < 1) throw UsageError("var settings out of range");
    if (stconv_warmup_epochs < 0 || stconv_bands < 1) throw UsageError("stconv warmup/bands out of range");
    if (evaluation.horizons.empty()) throw UsageError("evaluation.horizons is empty");
    for (int h : evaluation.horizons)
        if (h < 1) throw UsageError("evaluation horizons must be >= 1");
    if (evaluation.warmup_days < 1) throw UsageError("evaluation.warmup_days must be >= 1");
    for (const auto& [h, k] : pseudo_counts)
        if (h < 1 || k < 0.0) throw UsageError("sird.pseudo_counts need horizon >= 1 and K >= 0");
    synthetic.validate();
}

PipelineConfig parse_config(const std::string& text, const fs::path& base_dir) {
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    const auto& keys = known_keys();
    for (const auto& [section, body] : tree) {
        const auto it = keys.find(section);
        if (it == keys.end()) throw UsageError("config: unknown section [" + section + "]");
        if (body.empty() && !body.data().empty()) throw UsageError("config: key '" + section + "' outside a section");
        for (const auto& [key, value] : body)
            if (!it->second.count(key)) throw UsageError("config: unknown key '" + key + "' in [" + section + "]");
    }

    PipelineConfig c;
    c.base_dir = base_dir;
    c.cells = resolve(base_dir, get<std::string>(tree, "paths.cells", ""));
    c.municipalities = resolve(base_dir, get<std::string>(tree, "paths.municipalities", ""));
    c.cases = resolve(base_dir, get<std::string>(tree, "paths.cases", ""));
    c.national = resolve(base_dir, get<std::string>(tree, "paths.national", ""));
    c.gold_dir = resolve(base_dir, get<std::string>(tree, "paths.gold_dir", ""));
    c.output_dir = resolve(base_dir, get<std::string>(tree, "paths.output_dir", "results"));

    c.grid.n_cols = get(tree, "grid.n_cols", c.grid.n_cols);
    c.grid.n_rows = get(tree, "grid.n_rows", c.grid.n_rows);
    c.grid.cell_size_km = get(tree, "grid.cell_size_km", c.grid.cell_size_km);
    c.grid.origin_x_km = get(tree, "grid.origin_x_km", c.grid.origin_x_km);
    c.grid.origin_y_km = get(tree, "grid.origin_y_km", c.grid.origin_y_km);

    const auto mode = get<std::string>(tree, "variogram.mode", "given");
    if (mode != "given" && mode != "fit") throw UsageError("variogram.mode must be 'given' or 'fit'");
    c.fit_variogram = mode == "fit";
    try {
        c.variogram.structure = geostat::parse_structure(
            get<std::string>(tree, "variogram.structure", std::string(geostat::to_string(c.variogram.structure))));
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("variogram.structure: ") + e.what());
    }
    c.variogram.nugget = get(tree, "variogram.nugget", c.variogram.nugget);
    c.variogram.sill = get(tree, "variogram.sill", c.variogram.sill);
    c.variogram.range_km = get(tree, "variogram.range_km", c.variogram.range_km);

    c.simulation.n_realizations = get(tree, "simulation.realizations", c.simulation.n_realizations);
    c.simulation.max_point_neighbors = get(tree, "simulation.max_point_neighbors", c.simulation.max_point_neighbors);
    c.simulation.max_block_neighbors = get(tree, "simulation.max_block_neighbors", c.simulation.max_block_neighbors);
    c.simulation.search_radius_km = get(tree, "simulation.search_radius_km", c.simulation.search_radius_km);
    c.simulation.rescale_sill_to_data = get(tree, "simulation.rescale_sill", c.simulation.rescale_sill_to_data);
    c.simulation.threads = get(tree, "simulation.threads", c.simulation.threads);
    c.ci_level = get(tree, "simulation.ci_level", c.ci_level);

    c.sird.pseudo_count = get(tree, "sird.pseudo_count", c.sird.pseudo_count);
    if (auto pc = tree.get_optional<std::string>("sird.pseudo_counts")) c.pseudo_counts = parse_pseudo_counts(*pc);
    c.sird.recovery_window = get(tree, "sird.recovery_window", c.sird.recovery_window);
    c.sird.bandwidth = get(tree, "sird.bandwidth", c.sird.bandwidth);
    try {
        c.sird.projection =
            sird::parse_projection(get<std::string>(tree, "sird.projection", projection_name(c.sird.projection)));
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("sird.projection: ") + e.what());
    }
    c.sird.mean_n = get(tree, "sird.mean_n", c.sird.mean_n);
    c.sird.extrapolation_window = get(tree, "sird.extrapolation_window", c.sird.extrapolation_window);
    c.sird.incidence_window = get(tree, "sird.incidence_window", c.sird.incidence_window);

    c.arma.p = get(tree, "arma.p", c.arma.p);
    c.arma.q = get(tree, "arma.q", c.arma.q);
    c.arma.max_growth = get(tree, "arma.max_growth", c.arma.max_growth);
    c.var.p = get(tree, "var.p", c.var.p);
    c.var.ridge = get(tree, "var.ridge", c.var.ridge);
    c.var.max_cells = get(tree, "var.max_cells", c.var.max_cells);

    auto& m = c.model;
    m.layers_per_block = get(tree, "stconv.layers_per_block", m.layers_per_block);
    m.base_filters = get(tree, "stconv.base_filters", m.base_filters);
    m.spatial_kernel = get(tree, "stconv.spatial_kernel", m.spatial_kernel);
    m.temporal_kernel = get(tree, "stconv.temporal_kernel", m.temporal_kernel);
    m.li_count = get(tree, "stconv.li_count", m.li_count);
    if (auto lw = tree.get_optional<std::string>("stconv.lw_kernel")) {
        const auto f = detail::split(detail::trim(*lw), 'x');
        const auto a = f.size() == 3 ? detail::parse_number<int>(f[0]) : std::nullopt;
        const auto b = f.size() == 3 ? detail::parse_number<int>(f[1]) : std::nullopt;
        const auto d = f.size() == 3 ? detail::parse_number<int>(f[2]) : std::nullopt;
        if (!a || !b || !d) throw UsageError("stconv.lw_kernel must look like 1x1x1");
        m.lw_kt = *a;
        m.lw_kh = *b;
        m.lw_kw = *d;
    }
    m.value_scale = get(tree, "stconv.value_scale", m.value_scale);
    m.eps = get(tree, "stconv.eps", m.eps);
    m.momentum = get(tree, "stconv.momentum", m.momentum);
    m.lr = get(tree, "stconv.lr", m.lr);
    m.beta3 = get(tree, "stconv.beta3", m.beta3);
    m.optimizer_eps = get(tree, "stconv.optimizer_eps", m.optimizer_eps);
    m.batch_size = get(tree, "stconv.batch_size", m.batch_size);
    m.online_epochs = get(tree, "stconv.online_epochs", m.online_epochs);
    m.reduce_to_block_input = get(tree, "stconv.reduce_to_block_input", m.reduce_to_block_input);
    c.stconv_warmup_epochs = get(tree, "stconv.warmup_epochs", c.stconv_warmup_epochs);
    c.stconv_bands = get(tree, "stconv.bands", c.stconv_bands);

    if (auto h = tree.get_optional<std::string>("evaluation.horizons"))
        c.evaluation.horizons = parse_int_list(*h, "evaluation.horizons");
    c.evaluation.warmup_days = get(tree, "evaluation.warmup_days", c.evaluation.warmup_days);

    auto& s = c.synthetic;
    s.grid_cols = get(tree, "synthetic.grid_cols", s.grid_cols);
    s.grid_rows = get(tree, "synthetic.grid_rows", s.grid_rows);
    s.cell_km = get(tree, "synthetic.cell_km", s.cell_km);
    s.municipality_cols = get(tree, "synthetic.municipality_cols", s.municipality_cols);
    s.municipality_rows = get(tree, "synthetic.municipality_rows", s.municipality_rows);
    s.days = get(tree, "synthetic.days", s.days);
    if (auto d = tree.get_optional<std::string>("synthetic.start")) {
        try {
            s.start = parse_iso_date(detail::trim(*d));
        } catch (const DataError& e) {
            throw UsageError(std::string("synthetic.start: ") + e.what());
        }
    }
    if (auto w = tree.get_optional<std::string>("synthetic.waves")) s.waves = parse_waves(*w);
    s.noise = get(tree, "synthetic.noise", s.noise);
    s.gamma = get(tree, "synthetic.gamma", s.gamma);
    s.delta = get(tree, "synthetic.delta", s.delta);
    s.coupling_km = get(tree, "synthetic.coupling_km", s.coupling_km);
    s.coupling_strength = get(tree, "synthetic.coupling_strength", s.coupling_strength);
    s.imports_per_100k = get(tree, "synthetic.imports_per_100k", s.imports_per_100k);
    s.initial_infected = get(tree, "synthetic.initial_infected", s.initial_infected);
    s.min_population = get(tree, "synthetic.min_population", s.min_population);
    s.max_population = get(tree, "synthetic.max_population", s.max_population);
    s.gold_realizations = get(tree, "synthetic.gold_realizations", s.gold_realizations);
    try {
        s.variogram.structure = geostat::parse_structure(
            get<std::string>(tree, "synthetic.structure", std::string(geostat::to_string(s.variogram.structure))));
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("synthetic.structure: ") + e.what());
    }
    s.variogram.nugget = get(tree, "synthetic.nugget", s.variogram.nugget);
    s.variogram.sill = get(tree, "synthetic.sill", s.variogram.sill);
    s.variogram.range_km = get(tree, "synthetic.range_km", s.variogram.range_km);

    c.seed = get<std::uint64_t>(tree, "run.seed", c.seed);
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    auto base = path.parent_path();
    if (base.empty()) base = ".";
    return parse_config(ss.str(), fs::absolute(base).lexically_normal());
}

std::string config_text(const PipelineConfig& c) {
    std::ostringstream o;
    const auto& b = c.base_dir;
    o << "[paths]\n"
      << "cells = " << relative_text(c.cells, b) << "\n"
      << "municipalities = " << relative_text(c.municipalities, b) << "\n"
      << "cases = " << relative_text(c.cases, b) << "\n"
      << "national = " << relative_text(c.national, b) << "\n"
      << "gold_dir = " << relative_text(c.gold_dir, b) << "\n"
      << "output_dir = " << relative_text(c.output_dir, b) << "\n\n";
    o << "[grid]\n"
      << "n_cols = " << c.grid.n_cols << "\n"
      << "n_rows = " << c.grid.n_rows << "\n"
      << "cell_size_km = " << fmt17(c.grid.cell_size_km) << "\n"
      << "origin_x_km = " << fmt17(c.grid.origin_x_km) << "\n"
      << "origin_y_km = " << fmt17(c.grid.origin_y_km) << "\n\n";
    o << "[variogram]\n"
      << "mode = " << (c.fit_variogram ? "fit" : "given") << "\n"
      << "structure = " << geostat::to_string(c.variogram.structure) << "\n"
      << "nugget = " << fmt17(c.variogram.nugget) << "\n"
      << "sill = " << fmt17(c.variogram.sill) << "\n"
      << "range_km = " << fmt17(c.variogram.range_km) << "\n\n";
    o << "[simulation]\n"
      << "realizations = " << c.simulation.n_realizations << "\n"
      << "max_point_neighbors = " << c.simulation.max_point_neighbors << "\n"
      << "max_block_neighbors = " << c.simulation.max_block_neighbors << "\n"
      << "search_radius_km = " << fmt17(c.simulation.search_radius_km) << "\n"
      << "rescale_sill = " << (c.simulation.rescale_sill_to_data ? "true" : "false") << "\n"
      << "threads = " << c.simulation.threads << "\n"
      << "ci_level = " << fmt17(c.ci_level) << "\n\n";
    o << "[sird]\n"
      << "pseudo_count = " << fmt17(c.sird.pseudo_count) << "\n"
      << "pseudo_counts = ";
    bool first = true;
    for (const auto& [h, k] : c.pseudo_counts) {
        o << (first ? "" : ",") << h << ":" << fmt17(k);
        first = false;
    }
    o << "\n"
      << "recovery_window = " << c.sird.recovery_window << "\n"
      << "bandwidth = " << fmt17(c.sird.bandwidth) << "\n"
      << "projection = " << projection_name(c.sird.projection) << "\n"
      << "mean_n = " << c.sird.mean_n << "\n"
      << "extrapolation_window = " << c.sird.extrapolation_window << "\n"
      << "incidence_window = " << c.sird.incidence_window << "\n\n";
    o << "[arma]\np = " << c.arma.p << "\nq = " << c.arma.q << "\nmax_growth = " << fmt17(c.arma.max_growth)
      << "\n\n";
    o << "[var]\np = " << c.var.p << "\nridge = " << fmt17(c.var.ridge) << "\nmax_cells = " << c.var.max_cells
      << "\n\n";
    const auto& m = c.model;
    o << "[stconv]\n"
      << "layers_per_block = " << m.layers_per_block << "\n"
      << "base_filters = " << m.base_filters << "\n"
      << "spatial_kernel = " << m.spatial_kernel << "\n"
      << "temporal_kernel = " << m.temporal_kernel << "\n"
      << "li_count = " << m.li_count << "\n"
      << "lw_kernel = " << m.lw_kt << "x" << m.lw_kh << "x" << m.lw_kw << "\n"
      << "value_scale = " << fmt17(m.value_scale) << "\n"
      << "eps = " << fmt17(m.eps) << "\n"
      << "momentum = " << fmt17(m.momentum) << "\n"
      << "lr = " << fmt17(m.lr) << "\n"
      << "beta3 = " << fmt17(m.beta3) << "\n"
      << "optimizer_eps = " << fmt17(m.optimizer_eps) << "\n"
      << "batch_size = " << m.batch_size << "\n"
      << "online_epochs = " << m.online_epochs << "\n"
      << "warmup_epochs = " << c.stconv_warmup_epochs << "\n"
      << "bands = " << c.stconv_bands << "\n"
      << "reduce_to_block_input = " << (m.reduce_to_block_input ? "true" : "false") << "\n\n";
    o << "[evaluation]\nhorizons = ";
    for (std::size_t k = 0; k < c.evaluation.horizons.size(); ++k) o << (k ? "," : "") << c.evaluation.horizons[k];
    o << "\nwarmup_days = " << c.evaluation.warmup_days << "\n\n";
    const auto& s = c.synthetic;
    o << "[synthetic]\n"
      << "grid_cols = " << s.grid_cols << "\n"
      << "grid_rows = " << s.grid_rows << "\n"
      << "cell_km = " << fmt17(s.cell_km) << "\n"
      << "municipality_cols = " << s.municipality_cols << "\n"
      << "municipality_rows = " << s.municipality_rows << "\n"
      << "days = " << s.days << "\n"
      << "start = " << format_iso_date(s.start) << "\n"
      << "waves = " << waves_text(s.waves) << "\n"
      << "noise = " << fmt17(s.noise) << "\n"
      << "gamma = " << fmt17(s.gamma) << "\n"
      << "delta = " << fmt17(s.delta) << "\n"
      << "coupling_km = " << fmt17(s.coupling_km) << "\n"
      << "coupling_strength = " << fmt17(s.coupling_strength) << "\n"
      << "imports_per_100k = " << fmt17(s.imports_per_100k) << "\n"
      << "initial_infected = " << fmt17(s.initial_infected) << "\n"
      << "min_population = " << s.min_population << "\n"
      << "max_population = " << s.max_population << "\n"
      << "gold_realizations = " << s.gold_realizations << "\n"
      << "structure = " << geostat::to_string(s.variogram.structure) << "\n"
      << "nugget = " << fmt17(s.variogram.nugget) << "\n"
      << "sill = " << fmt17(s.variogram.sill) << "\n"
      << "range_km = " << fmt17(s.variogram.range_km) << "\n\n";
    o << "[run]\nseed = " << c.seed << "\n";
    return o.str();
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw NumericalError("SHA-256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

std::uint64_t Seeds::synthetic() const { return derive_seed(master, {101}); }
std::uint64_t Seeds::simulate() const { return derive_seed(master, {103}); }
std::uint64_t Seeds::sird() const { return derive_seed(master, {104}); }
std::uint64_t Seeds::stconv() const { return derive_seed(master, {105}); }

geo::Territory load_territory(const PipelineConfig& config) {
    if (config.cells.empty() || config.municipalities.empty())
        throw UsageError("config needs paths.cells and paths.municipalities");
    const auto cells = geo::read_cells_csv(config.cells);
    const auto pops = geo::read_municipalities_csv(config.municipalities);
    return geo::build_grid(config.grid, cells, pops);
}

eval::Dataset load_dataset(const PipelineConfig& config) {
    if (config.cases.empty()) throw UsageError("config needs paths.cases");
    if (config.gold_dir.empty()) throw UsageError("config needs paths.gold_dir");
    auto territory = std::make_shared<const geo::Territory>(load_territory(config));
    const auto panel = ingest_cases(config.cases, *territory, config.sird.incidence_window);
    eval::Dataset d;
    d.territory = territory;
    d.start = panel.start;
    d.cases = panel.cases;
    d.gold = read_gold(config.gold_dir, territory->grid, panel.start, panel.days());
    if (!config.national.empty()) {
        const auto nat = read_national_csv(config.national);
        const auto offset = days_between(nat.start, panel.start);
        if (offset < 0 || offset + panel.days() > static_cast<long>(nat.deaths.size()))
            throw DataError(config.national.string() + " does not cover the case calendar " +
                            format_iso_date(panel.start) + " .. " + format_iso_date(panel.date_of(panel.days() - 1)));
        d.national_deaths.assign(nat.deaths.begin() + offset, nat.deaths.begin() + offset + panel.days());
    }
    d.validate();
    return d;
}

geostat::VariogramModel resolve_variogram(const PipelineConfig& config, const geo::Territory& territory,
                                          const Eigen::MatrixXd& incidence) {
    if (!config.fit_variogram) return config.variogram;
    const auto& grid = *territory.grid;
    const double extent = std::hypot(grid.n_cols(), grid.n_rows()) * grid.cell_size();
    const int n_lags = 12;
    const double lag = extent / 2.0 / n_lags;
    geostat::ExperimentalVariogram pooled;
    bool any = false;
    for (Eigen::Index t = 0; t < incidence.rows(); ++t) {
        const Eigen::VectorXd row = incidence.row(t).transpose();
        const double mean = row.mean();
        const double sd = std::sqrt((row.array() - mean).square().mean());
        if (!(sd > 0.0)) continue;
        std::vector<geostat::VariogramSample> samples;
        for (Eigen::Index m = 0; m < row.size(); ++m)
            samples.push_back({territory.municipalities[m].centroid, (row(m) - mean) / sd,
                               static_cast<double>(territory.municipalities[m].population)});
        const auto table = geostat::experimental_variogram(samples, lag, n_lags);
        if (!any)
            pooled = table;
        else
            pooled.merge(table);
        any = true;
    }
    if (!any) throw DataError("variogram fit: every day has identical municipality rates");
    try {
        const auto fit = geostat::fit_variogram(pooled, config.variogram.structure);
        if (fit.degenerate) throw DataError("variogram fit is degenerate: " + fit.warning);
        return fit.model;
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("variogram fit failed: ") + e.what());
    }
}

std::unique_ptr<eval::Forecaster> make_forecaster(const std::string& model, const PipelineConfig& config,
                                                  std::shared_ptr<const geo::Territory> territory,
                                                  const geostat::VariogramModel& variogram) {
    const Seeds seeds{config.seed};
    if (model == "persistence") return std::make_unique<eval::PersistenceForecaster>();
    if (model == "arma") {
        auto o = config.arma;
        o.threads = config.simulation.threads;
        return std::make_unique<eval::ArmaForecaster>(o);
    }
    if (model == "var") return std::make_unique<eval::VarForecaster>(config.var);
    if (model == "sird") {
        eval::SirdDssOptions o;
        o.sird = config.sird;
        o.pseudo_counts = config.pseudo_counts;
        o.variogram = variogram;
        o.simulation = config.simulation;
        o.seed = seeds.sird();
        return std::make_unique<eval::SirdDssForecaster>(std::move(territory), o);
    }
    if (model == "stconv") {
        eval::StConvOptions o;
        o.model = config.model;
        o.horizons = config.evaluation.horizons;
        o.bands = config.stconv_bands;
        o.warmup_epochs = config.stconv_warmup_epochs;
        o.seed = seeds.stconv();
        return std::make_unique<eval::StConvForecaster>(o);
    }
    throw UsageError("unknown model '" + model + "' (expected arma, var, sird, stconv or persistence)");
}

RunResult run_synth(const PipelineConfig& config, const fs::path& out_dir) {
    const Seeds seeds{config.seed};
    const auto& spec = config.synthetic;
    const auto country = generate_synthetic(spec, seeds.synthetic(), config.simulation.threads);
    RunResult run;
    run.directory = fs::absolute(out_dir).lexically_normal();
    fs::create_directories(run.directory / "gold");

    geo::write_cells_csv(run.directory / "cells.csv", country.territory);
    add_file(run, run.directory / "cells.csv");
    geo::write_municipalities_csv(run.directory / "municipalities.csv", country.territory);
    add_file(run, run.directory / "municipalities.csv");
    write_cases_csv(run.directory / "cases.csv", country.territory, country.panel);
    add_file(run, run.directory / "cases.csv");
    write_national_csv(run.directory / "national.csv", country.national);
    add_file(run, run.directory / "national.csv");
    write_municipality_matrix_csv(run.directory / "truth_incidence.csv", country.territory, spec.start,
                                  country.clean_incidence);
    add_file(run, run.directory / "truth_incidence.csv");
    for (const auto& f : country.gold) {
        const auto p = gold_path(run.directory / "gold", f.date);
        geo::write_esri_ascii(p, f);
        add_file(run, p);
    }

    PipelineConfig next = config;
    next.base_dir = run.directory;
    next.cells = run.directory / "cells.csv";
    next.municipalities = run.directory / "municipalities.csv";
    next.cases = run.directory / "cases.csv";
    next.national = run.directory / "national.csv";
    next.gold_dir = run.directory / "gold";
    next.output_dir = run.directory / "results";
    next.grid = country.territory.grid->params();
    next.fit_variogram = false;
    next.variogram = spec.variogram;
    {
        std::ofstream o(run.directory / "pipeline.ini");
        if (!o) throw DataError("cannot write " + (run.directory / "pipeline.ini").string());
        o << config_text(next);
    }
    add_file(run, run.directory / "pipeline.ini");
    write_manifest(run, "synth", config);
    return run;
}

RunResult run_simulate(const PipelineConfig& config) {
    const Seeds seeds{config.seed};
    const auto territory = load_territory(config);
    if (config.cases.empty()) throw UsageError("config needs paths.cases");
    const auto panel = ingest_cases(config.cases, territory, config.sird.incidence_window);
    const auto variogram = resolve_variogram(config, territory, panel.incidence);
    const dss::DssContext ctx(territory, variogram, config.simulation);
    RunResult run;
    run.directory = (config.output_dir / "simulate").lexically_normal();
    for (const char* sub : {"median", "lower", "upper"}) fs::create_directories(run.directory / sub);
    write_municipality_matrix_csv(run.directory / "incidence.csv", territory, panel.start, panel.incidence);
    add_file(run, run.directory / "incidence.csv");
    for (int t = 0; t < panel.days(); ++t) {
        std::vector<double> rates(panel.incidence.cols());
        for (Eigen::Index m = 0; m < panel.incidence.cols(); ++m) rates[m] = panel.incidence(t, m);
        const auto data = dss::make_day_data(territory, rates);
        const Date date = panel.date_of(t);
        const auto set =
            dss::simulate_set(ctx, data, date, derive_seed(seeds.simulate(), {static_cast<std::uint64_t>(t)}));
        auto summary = dss::summarize(set, config.ci_level);
        for (auto [name, field] : {std::pair{"median", &summary.median}, std::pair{"lower", &summary.lower},
                                   std::pair{"upper", &summary.upper}}) {
            field->date = date;
            const auto p = run.directory / name / date_file(date);
            geo::write_esri_ascii(p, *field);
            add_file(run, p);
        }
    }
    write_manifest(run, "simulate", config);
    return run;
}

RunResult run_forecast(const PipelineConfig& config, const std::string& model, int horizon) {
    if (horizon < 1) throw UsageError("--horizon must be >= 1");
    PipelineConfig c = config;
    c.evaluation.horizons = {horizon};
    const auto data = load_dataset(c);
    const auto variogram = resolve_variogram(c, *data.territory, incidence_panel(data.cases, *data.territory,
                                                                                   c.sird.incidence_window));
    auto forecaster = make_forecaster(model, c, data.territory, variogram);
    RunResult run;
    run.directory = (c.output_dir / ("forecast_" + model + "_h" + std::to_string(horizon))).lexically_normal();
    fs::create_directories(run.directory / "predictions");
    const auto scores = eval::rolling_origin(*forecaster, data, c.evaluation,
                                             [&](int, const geo::IncidenceField&, const geo::IncidenceField& pred) {
                                                 const auto p = run.directory / "predictions" / date_file(pred.date);
                                                 geo::write_esri_ascii(p, pred);
                                                 add_file(run, p);
                                             });
    const std::vector<eval::ModelScores> all{scores};
    eval::write_scores_csv((run.directory / "scores.csv").string(), all);
    add_file(run, run.directory / "scores.csv");
    write_manifest(run, "forecast", c);
    return run;
}

RunResult run_evaluate(const PipelineConfig& config, const std::vector<std::string>& models) {
    if (models.empty()) throw UsageError("no models to evaluate");
    const auto data = load_dataset(config);
    const auto variogram = resolve_variogram(
        config, *data.territory, incidence_panel(data.cases, *data.territory, config.sird.incidence_window));
    RunResult run;
    run.directory = (config.output_dir / "evaluate").lexically_normal();
    fs::create_directories(run.directory);
    std::vector<eval::ModelScores> all;
    for (const auto& name : models) {
        auto forecaster = make_forecaster(name, config, data.territory, variogram);
        const auto dir = run.directory / "errors" / name;
        fs::create_directories(dir);
        all.push_back(eval::rolling_origin(
            *forecaster, data, config.evaluation,
            [&](int h, const geo::IncidenceField& truth, const geo::IncidenceField& pred) {
                const std::string stem = "h" + std::to_string(h) + "_" + format_iso_date(pred.date);
                const auto a = dir / ("abs_" + stem + ".asc");
                const auto s = dir / ("smape_" + stem + ".asc");
                geo::write_esri_ascii(a, eval::abs_error_map(truth, pred));
                geo::write_esri_ascii(s, eval::smape_map(truth, pred));
                add_file(run, a);
                add_file(run, s);
            }));
        if (auto* st = dynamic_cast<eval::StConvForecaster*>(forecaster.get())) {
            const auto ckpt = run.directory / "checkpoints";
            st->save(ckpt.string());
            for (const auto& e : fs::directory_iterator(ckpt)) add_file(run, e.path());
            for (const auto& [h, logs] : st->warmup_logs())
                for (std::size_t b = 0; b < logs.size(); ++b) {
                    const auto p = run.directory / "training" /
                                   ("stconv_h" + std::to_string(h) + "_band" + std::to_string(b) + ".csv");
                    fs::create_directories(p.parent_path());
                    stconv::write_training_log(p.string(), logs[b]);
                    add_file(run, p);
                }
        }
    }
    eval::write_scores_csv((run.directory / "scores.csv").string(), all);
    add_file(run, run.directory / "scores.csv");
    eval::write_summary_csv((run.directory / "summary.csv").string(), eval::summarize(all));
    add_file(run, run.directory / "summary.csv");
    write_manifest(run, "evaluate", config);
    return run;
}

void write_manifest(const RunResult& run, const std::string& command, const PipelineConfig& config) {
    const Seeds seeds{config.seed};
    nlohmann::json j;
    j["command"] = command;
    j["config_sha256"] = sha256_hex(config_text(config));
    j["seeds"] = {{"master", config.seed},
                  {"synthetic", seeds.synthetic()},
                  {"simulate", seeds.simulate()},
                  {"sird", seeds.sird()},
                  {"stconv", seeds.stconv()}};
    auto files = run.files;
    std::sort(files.begin(), files.end());
    nlohmann::json list = nlohmann::json::array();
    for (const auto& f : files) {
        const auto p = run.directory / f;
        list.push_back({{"path", f.generic_string()},
                        {"bytes", static_cast<std::uint64_t>(fs::file_size(p))},
                        {"sha256", sha256_file(p)}});
    }
    j["files"] = list;
    std::ofstream o(run.directory / "manifest.json");
    if (!o) throw DataError("cannot write " + (run.directory / "manifest.json").string());
    o << j.dump(2) << '\n';
}

}  // namespace covmap::pipeline
