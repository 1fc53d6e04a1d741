#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "covmap/baselines.hpp"
#include "covmap/dss.hpp"
#include "covmap/evaluation.hpp"
#include "covmap/forecasters.hpp"
#include "covmap/grid.hpp"
#include "covmap/sird.hpp"
#include "covmap/stconv.hpp"
#include "covmap/variogram.hpp"

namespace covmap::pipeline {

namespace fs = std::filesystem;

struct Wave {
    int start = 0;            ///< day index
    double peak_beta = 0.0;   ///< transmission rate at the wave's peak
    int duration = 1;         ///< days
};

struct SyntheticSpec {
    int grid_cols = 30;
    int grid_rows = 30;
    double cell_km = 1.0;
    int municipality_cols = 3;
    int municipality_rows = 2;
    int days = 240;
    Date start = std::chrono::sys_days{std::chrono::year{2020} / 3 / 1};
    std::vector<Wave> waves{{0, 0.24, 80}, {100, 0.21, 130}};
    double noise = 1.0;             ///< 0: rounded expected counts, 1: Poisson counts
    double gamma = 0.1;             ///< recovery rate
    double delta = 0.002;           ///< death rate
    double coupling_km = 10.0;      ///< distance decay of cross-infection
    double coupling_strength = 0.05;
    double imports_per_100k = 0.05; ///< daily imported infections at full wave activity
    double initial_infected = 20.0; ///< in the first municipality
    long long min_population = 50000;
    long long max_population = 400000;
    int gold_realizations = 16;
    geostat::VariogramModel variogram{geostat::Structure::spherical, 0.1, 0.9, 12.0};

    void validate() const;
    int n_municipalities() const { return municipality_cols * municipality_rows; }
};

/// Daily new cases per municipality (territory order) on a contiguous calendar.
struct MunicipalityPanel {
    Date start{};
    Eigen::MatrixXd cases;      ///< days x municipalities
    Eigen::MatrixXd incidence;  ///< trailing 14-day incidence per 100k
    int filled_gaps = 0;        ///< (day, municipality) pairs missing from the file, set to 0
    int days() const { return static_cast<int>(cases.rows()); }
    Date date_of(int day) const { return add_days(start, day); }
};

struct NationalSeries {
    Date start{};
    std::vector<double> cases;
    std::vector<double> deaths;
};

struct SyntheticCountry {
    geo::Territory territory;
    MunicipalityPanel panel;          ///< reported (noisy) cases
    Eigen::MatrixXd clean_cases;      ///< expected daily infections
    Eigen::MatrixXd clean_incidence;  ///< noise-free 14-day incidence per 100k
    NationalSeries national;
    std::vector<geo::IncidenceField> gold;  ///< median block-DSS field per day
};

/// Rectangular country split into a grid of rectangular municipalities,
/// each running a SIRD epidemic coupled to the others by distance-decayed
/// cross-infection. Deterministic in `seed`.
SyntheticCountry generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed, unsigned threads = 0);

/// Trailing-window incidence of every municipality and day.
Eigen::MatrixXd incidence_panel(const Eigen::MatrixXd& cases, const geo::Territory& territory, int window = 14);

/// cases.csv: date,municipality_id,new_cases. Missing (date, municipality)
/// pairs inside the calendar are filled with 0 and counted.
MunicipalityPanel ingest_cases(const fs::path& path, const geo::Territory& territory, int window = 14);
void write_cases_csv(const fs::path& path, const geo::Territory& territory, const MunicipalityPanel& panel);

/// national.csv: date,new_cases,deaths.
NationalSeries read_national_csv(const fs::path& path);
void write_national_csv(const fs::path& path, const NationalSeries& series);

/// Per-day matrix as CSV: date,<municipality ids...>.
void write_municipality_matrix_csv(const fs::path& path, const geo::Territory& territory, Date start,
                                   const Eigen::MatrixXd& values);

/// Gold rasters are <dir>/<YYYY-MM-DD>.asc.
fs::path gold_path(const fs::path& dir, Date date);
std::vector<geo::IncidenceField> read_gold(const fs::path& dir, std::shared_ptr<const geo::Grid> grid, Date start,
                                           int days);

struct PipelineConfig {
    fs::path cells;
    fs::path municipalities;
    fs::path cases;
    fs::path national;  ///< optional
    fs::path gold_dir;
    fs::path output_dir = "results";

    geo::GridParams grid;
    bool fit_variogram = false;
    geostat::VariogramModel variogram{geostat::Structure::spherical, 0.1, 0.9, 12.0};
    dss::SimulationConfig simulation;
    double ci_level = 0.95;

    sird::SirdConfig sird;
    std::map<int, double> pseudo_counts{{7, 1e4}, {10, 1e5}};
    eval::ArmaOptions arma;
    baselines::VarOptions var;
    stconv::ModelConfig model;
    int stconv_warmup_epochs = 20;
    int stconv_bands = 3;
    eval::EvalConfig evaluation;
    SyntheticSpec synthetic;
    std::uint64_t seed = 0;

    fs::path base_dir;  ///< relative paths are written relative to this

    void validate() const;
};

/// Flat key = value file with [section] headers. Relative paths resolve
/// against the file's directory. Throws UsageError / DataError.
PipelineConfig load_config(const fs::path& path);
PipelineConfig parse_config(const std::string& text, const fs::path& base_dir);
/// Canonical text of every setting; load_config(write) reproduces the config.
std::string config_text(const PipelineConfig& config);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& path);

/// Named seed streams derived from the master seed.
struct Seeds {
    std::uint64_t master = 0;
    std::uint64_t synthetic() const;
    std::uint64_t simulate() const;
    std::uint64_t sird() const;
    std::uint64_t stconv() const;
};

/// Territory and gold-field dataset described by the config.
geo::Territory load_territory(const PipelineConfig& config);
eval::Dataset load_dataset(const PipelineConfig& config);

/// Variogram from the config, or fitted to the daily municipality rates
/// (days x municipalities incidence).
geostat::VariogramModel resolve_variogram(const PipelineConfig& config, const geo::Territory& territory,
                                          const Eigen::MatrixXd& incidence);

/// Forecaster by name for the config's horizons.
std::unique_ptr<eval::Forecaster> make_forecaster(const std::string& model, const PipelineConfig& config,
                                                  std::shared_ptr<const geo::Territory> territory,
                                                  const geostat::VariogramModel& variogram);

struct RunResult {
    fs::path directory;
    std::vector<fs::path> files;  ///< relative to directory, manifest excluded
};

/// Writes the synthetic file set, gold rasters and a ready-to-use
/// pipeline.ini into `out`.
RunResult run_synth(const PipelineConfig& config, const fs::path& out);
/// Daily median / CI rasters from the case file.
RunResult run_simulate(const PipelineConfig& config);
/// Prediction rasters for every test day of one model and horizon.
RunResult run_forecast(const PipelineConfig& config, const std::string& model, int horizon);
/// Scores, summary and error rasters for every model and horizon.
RunResult run_evaluate(const PipelineConfig& config, const std::vector<std::string>& models);

/// manifest.json: command, config hash, seeds and a checksum per file.
void write_manifest(const RunResult& run, const std::string& command, const PipelineConfig& config);

inline const std::vector<std::string>& default_models() {
    static const std::vector<std::string> m{"arma", "var", "sird", "stconv", "persistence"};
    return m;
}

}  // namespace covmap::pipeline
