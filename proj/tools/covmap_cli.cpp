#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "covmap/errors.hpp"
#include "covmap/pipeline.hpp"

using namespace covmap;
namespace pl = covmap::pipeline;

namespace {

pl::PipelineConfig config_from(const std::string& path) {
    if (path.empty()) return pl::parse_config("", std::filesystem::current_path());
    return pl::load_config(path);
}

void print_summary(const std::filesystem::path& summary) {
    std::ifstream in(summary);
    std::string line;
    std::getline(in, line);
    std::printf("%-12s %3s  %-24s %-24s\n", "model", "T", "rmse", "smape");
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
        if (f.size() != 6) continue;
        std::printf("%-12s %3s  %-24s %-24s\n", f[0].c_str(), f[1].c_str(), (f[2] + " +- " + f[3]).c_str(),
                    (f[4] + " +- " + f[5]).c_str());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatio-temporal incidence mapping and forecasting"};
    app.require_subcommand(1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    app.add_option("-c,--config", config_path, "pipeline configuration file");
    app.add_option("--seed", seed, "override the master seed");
    app.add_option("--threads", threads, "worker threads (0: all cores)");

    auto* synth = app.add_subcommand("synth", "generate a synthetic country and its gold-standard rasters");
    std::string out_dir;
    synth->add_option("-o,--out", out_dir, "output directory")->required();

    auto* simulate = app.add_subcommand("simulate", "daily median and confidence rasters from case counts");
    std::optional<int> realizations;
    simulate->add_option("-n,--realizations", realizations, "realizations per day")->check(CLI::PositiveNumber);

    auto* forecast = app.add_subcommand("forecast", "rolling-origin predictions of one model");
    std::string model;
    int horizon = 7;
    forecast->add_option("-m,--model", model, "arma | var | sird | stconv | persistence")
        ->required()
        ->check(CLI::IsMember({"arma", "var", "sird", "stconv", "persistence"}));
    forecast->add_option("-t,--horizon", horizon, "days ahead")->required()->check(CLI::PositiveNumber);

    auto* evaluate = app.add_subcommand("evaluate", "scores, summary and error maps for several models");
    std::vector<std::string> models = pl::default_models();
    evaluate->add_option("-m,--models", models, "models to compare")
        ->delimiter(',')
        ->check(CLI::IsMember({"arma", "var", "sird", "stconv", "persistence"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        auto config = config_from(config_path);
        if (seed) config.seed = *seed;
        if (threads) config.simulation.threads = *threads;
        if (realizations) config.simulation.n_realizations = *realizations;
        const auto t0 = std::chrono::steady_clock::now();
        pl::RunResult run;
        if (synth->parsed()) {
            run = pl::run_synth(config, out_dir);
        } else if (simulate->parsed()) {
            run = pl::run_simulate(config);
        } else if (forecast->parsed()) {
            run = pl::run_forecast(config, model, horizon);
        } else {
            run = pl::run_evaluate(config, models);
            print_summary(run.directory / "summary.csv");
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::fprintf(stderr, "wrote %zu files to %s (%.1f s)\n", run.files.size() + 1, run.directory.c_str(), secs);
        return 0;
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n%s", e.what(), app.help().c_str());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
