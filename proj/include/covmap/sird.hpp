#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace covmap::sird {

struct SirdState {
    double S = 0.0;
    double I = 0.0;
    double R = 0.0;
    double D = 0.0;
    double N = 0.0;
    double total() const { return S + I + R + D; }
};

enum class Projection { last, mean_n, linear_extrapolation };

Projection parse_projection(const std::string& name);

struct SirdConfig {
    double pseudo_count = 10000.0;   ///< K
    int recovery_window = 14;        ///< w, days
    double bandwidth = 10.0;         ///< Nadaraya-Watson bandwidth, days
    Projection projection = Projection::linear_extrapolation;
    int mean_n = 7;                  ///< window for Projection::mean_n
    int extrapolation_window = 14;   ///< trailing days for the line fit
    int incidence_window = 14;       ///< days summed into the incidence rate
    void validate() const;
};

/// mu = deaths / active_lagged; 0 (and *flagged set) when the denominator is 0.
double national_mortality(double deaths, double active_lagged, bool* flagged = nullptr);

/// Running active cases I(t) = sum_{s<=t} i(s) - r(s) - d(s); a negative
/// running value is floored at 0 and counted.
struct ActiveCases {
    std::vector<double> active;
    int floored = 0;
};
ActiveCases active_cases(std::span<const double> i, std::span<const double> r, std::span<const double> d);

/// Removals approximated from the mortality series: d(t) = mu(t) I(t-w) and
/// r(t) = I(t) - d(t), solved jointly with the active-case recursion, which
/// gives I(t) = (I(t-1) + i(t)) / 2. When r would be negative it is floored
/// at 0 (flagged) and I(t) follows from the recursion with r = 0.
struct Removals {
    std::vector<double> active;
    std::vector<double> recoveries;
    std::vector<double> deaths;
    int floored = 0;
};
Removals approximate_recoveries_deaths(std::span<const double> new_cases, std::span<const double> mu, int w);

/// National mortality series from national new cases and deaths; days with
/// t < w or a zero lagged denominator get mu = 0 and are counted in *flags.
std::vector<double> mortality_series(std::span<const double> national_cases,
                                     std::span<const double> national_deaths, int w,
                                     int* flags = nullptr);

/// beta = i/I, gamma = r/I, delta = d/I; days with I <= 0 are missing.
struct RateSeries {
    std::vector<double> beta;
    std::vector<double> gamma;
    std::vector<double> delta;
    std::vector<char> present;
    std::size_t size() const { return beta.size(); }
};
RateSeries derive_rates(std::span<const double> i, std::span<const double> r, std::span<const double> d,
                        std::span<const double> active);

/// Nadaraya-Watson smoother with a Gaussian kernel over the present values,
/// evaluated at every day. Returns zeros when nothing is present.
std::vector<double> smooth(std::span<const double> series, std::span<const char> present, double bandwidth);
std::vector<double> smooth(std::span<const double> series, double bandwidth);
RateSeries smooth(const RateSeries& rates, double bandwidth);

/// (K * national + n * regional) / (K + n). Throws when K = n = 0.
double blend(double regional, double national, double K, double n);
RateSeries blend(const RateSeries& regional, const RateSeries& national, double K, double n);

struct RateTriple {
    double beta = 0.0;
    double gamma = 0.0;
    double delta = 0.0;
};
struct ProjectedRates {
    std::vector<RateTriple> rates;
    bool fallback = false;  ///< not enough history for the mode; used `last`
};
ProjectedRates project_rates(const RateSeries& smoothed, Projection mode, int horizon, int mean_n = 7,
                             int extrapolation_window = 14);

/// Explicit daily step. Flows use the pre-update I and are capped so no
/// compartment goes negative.
struct Trajectory {
    std::vector<SirdState> states;  ///< states[0] = initial
    std::vector<double> new_cases;  ///< new infections per step
};
Trajectory integrate(const SirdState& initial, std::span<const RateTriple> rates);

/// Trailing-window incidence per 100k from daily new cases.
double trailing_incidence(std::span<const double> daily_cases, std::size_t end_exclusive, int window,
                          double population);

struct MunicipalityForecast {
    std::vector<double> incidence;  ///< per 100k, one per horizon day
    RateSeries raw;
    RateSeries smoothed;
    RateSeries blended;
    int flags = 0;
    bool failed = false;  ///< fell back to persistence of the last rate
};

struct SirdForecast {
    Eigen::MatrixXd incidence;  ///< horizon x municipalities, per 100k
    std::vector<MunicipalityForecast> municipalities;
    int flags = 0;
};

/// cases[m] holds municipality m's daily new cases (all the same length);
/// national_deaths may be empty (mortality taken as 0, flagged).
SirdForecast forecast_municipalities(const std::vector<std::vector<double>>& cases,
                                     std::span<const double> populations,
                                     std::span<const double> national_deaths, const SirdConfig& config,
                                     int horizon);

/// Diagnostics: day,series,beta,gamma,delta for raw/smoothed/blended.
void write_rate_series_csv(const std::string& path, const MunicipalityForecast& forecast);

}  // namespace covmap::sird
