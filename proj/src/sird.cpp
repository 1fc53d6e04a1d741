#include "covmap/sird.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "covmap/errors.hpp"
#include "csv_util.hpp"

namespace covmap::sird {

namespace {

constexpr double kPer100k = 100000.0;

template <class DeathFn>
Removals removal_recursion(std::span<const double> new_cases, int w, DeathFn deaths_at) {
    const std::size_t n = new_cases.size();
    Removals out;
    out.active.assign(n, 0.0);
    out.recoveries.assign(n, 0.0);
    out.deaths.assign(n, 0.0);
    double prev = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double lagged = t >= static_cast<std::size_t>(w) ? out.active[t - w] : 0.0;
        double d = deaths_at(t, lagged);
        const double joint = 0.5 * (prev + new_cases[t]);
        double r = joint - d;
        double active = joint;
        if (r < 0.0) {
            ++out.floored;
            r = 0.0;
            active = prev + new_cases[t] - d;
            if (active < 0.0) {
                d = prev + new_cases[t];
                active = 0.0;
            }
        }
        out.active[t] = active;
        out.recoveries[t] = r;
        out.deaths[t] = d;
        prev = active;
    }
    return out;
}

void check_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw std::invalid_argument(std::string(what) + ": series lengths differ");
}

}  // namespace

Projection parse_projection(const std::string& name) {
    if (name == "last") return Projection::last;
    if (name == "mean_n" || name == "mean") return Projection::mean_n;
    if (name == "linear_extrapolation" || name == "linear") return Projection::linear_extrapolation;
    throw std::invalid_argument("unknown projection mode '" + name + "'");
}

void SirdConfig::validate() const {
    if (!(pseudo_count >= 0.0)) throw std::invalid_argument("pseudo_count must be >= 0");
    if (recovery_window < 1) throw std::invalid_argument("recovery_window must be >= 1");
    if (!(bandwidth > 0.0)) throw std::invalid_argument("bandwidth must be > 0");
    if (mean_n < 1) throw std::invalid_argument("mean_n must be >= 1");
    if (extrapolation_window < 2) throw std::invalid_argument("extrapolation_window must be >= 2");
    if (incidence_window < 1) throw std::invalid_argument("incidence_window must be >= 1");
}

double national_mortality(double deaths, double active_lagged, bool* flagged) {
    if (flagged) *flagged = false;
    if (!(active_lagged > 0.0)) {
        if (flagged) *flagged = true;
        return 0.0;
    }
    return deaths / active_lagged;
}

ActiveCases active_cases(std::span<const double> i, std::span<const double> r, std::span<const double> d) {
    check_same_length(i.size(), r.size(), "active_cases");
    check_same_length(i.size(), d.size(), "active_cases");
    ActiveCases out;
    out.active.resize(i.size());
    double run = 0.0;
    for (std::size_t t = 0; t < i.size(); ++t) {
        run += i[t] - r[t] - d[t];
        if (run < 0.0) {
            run = 0.0;
            ++out.floored;
        }
        out.active[t] = run;
    }
    return out;
}

Removals approximate_recoveries_deaths(std::span<const double> new_cases, std::span<const double> mu, int w) {
    check_same_length(new_cases.size(), mu.size(), "approximate_recoveries_deaths");
    if (w < 1) throw std::invalid_argument("recovery window must be >= 1");
    return removal_recursion(new_cases, w, [&](std::size_t t, double lagged) { return mu[t] * lagged; });
}

std::vector<double> mortality_series(std::span<const double> national_cases,
                                     std::span<const double> national_deaths, int w, int* flags) {
    check_same_length(national_cases.size(), national_deaths.size(), "mortality_series");
    const Removals nat = removal_recursion(national_cases, w,
                                           [&](std::size_t t, double) { return national_deaths[t]; });
    std::vector<double> mu(national_cases.size(), 0.0);
    int flagged = 0;
    for (std::size_t t = 0; t < mu.size(); ++t) {
        bool f = true;
        if (t >= static_cast<std::size_t>(w)) mu[t] = national_mortality(national_deaths[t], nat.active[t - w], &f);
        if (f && national_deaths[t] > 0.0) ++flagged;
    }
    if (flags) *flags += flagged;
    return mu;
}

RateSeries derive_rates(std::span<const double> i, std::span<const double> r, std::span<const double> d,
                        std::span<const double> active) {
    check_same_length(i.size(), r.size(), "derive_rates");
    check_same_length(i.size(), d.size(), "derive_rates");
    check_same_length(i.size(), active.size(), "derive_rates");
    RateSeries out;
    const std::size_t n = i.size();
    out.beta.assign(n, 0.0);
    out.gamma.assign(n, 0.0);
    out.delta.assign(n, 0.0);
    out.present.assign(n, 0);
    for (std::size_t t = 0; t < n; ++t) {
        if (!(active[t] > 0.0)) continue;
        out.beta[t] = i[t] / active[t];
        out.gamma[t] = r[t] / active[t];
        out.delta[t] = d[t] / active[t];
        out.present[t] = 1;
    }
    return out;
}

std::vector<double> smooth(std::span<const double> series, std::span<const char> present, double bandwidth) {
    check_same_length(series.size(), present.size(), "smooth");
    if (!(bandwidth > 0.0)) throw std::invalid_argument("bandwidth must be > 0");
    const std::size_t n = series.size();
    std::vector<double> kernel(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double u = static_cast<double>(k) / bandwidth;
        kernel[k] = std::exp(-0.5 * u * u);
    }
    std::vector<double> out(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        double num = 0.0, den = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            if (!present[s]) continue;
            const double k = kernel[t > s ? t - s : s - t];
            num += k * series[s];
            den += k;
        }
        out[t] = den > 0.0 ? num / den : 0.0;
    }
    return out;
}

std::vector<double> smooth(std::span<const double> series, double bandwidth) {
    const std::vector<char> all(series.size(), 1);
    return smooth(series, all, bandwidth);
}

RateSeries smooth(const RateSeries& rates, double bandwidth) {
    RateSeries out;
    out.beta = smooth(rates.beta, rates.present, bandwidth);
    out.gamma = smooth(rates.gamma, rates.present, bandwidth);
    out.delta = smooth(rates.delta, rates.present, bandwidth);
    const bool any = std::any_of(rates.present.begin(), rates.present.end(), [](char c) { return c != 0; });
    out.present.assign(rates.size(), any ? 1 : 0);
    return out;
}

double blend(double regional, double national, double K, double n) {
    if (K < 0.0 || n < 0.0) throw std::invalid_argument("blend weights must be >= 0");
    if (K == 0.0 && n == 0.0) throw std::invalid_argument("blend needs K > 0 or n > 0");
    if (K == 0.0) return regional;
    if (n == 0.0) return national;
    return (K * national + n * regional) / (K + n);
}

RateSeries blend(const RateSeries& regional, const RateSeries& national, double K, double n) {
    check_same_length(regional.size(), national.size(), "blend");
    RateSeries out = regional;
    for (std::size_t t = 0; t < regional.size(); ++t) {
        out.beta[t] = blend(regional.beta[t], national.beta[t], K, n);
        out.gamma[t] = blend(regional.gamma[t], national.gamma[t], K, n);
        out.delta[t] = blend(regional.delta[t], national.delta[t], K, n);
        out.present[t] = regional.present[t] || national.present[t];
    }
    return out;
}

namespace {

std::vector<double> project_one(const std::vector<double>& s, Projection mode, int horizon, int mean_n,
                                 int window, bool& fallback) {
    const int n = static_cast<int>(s.size());
    std::vector<double> out(horizon, n > 0 ? s.back() : 0.0);
    if (n == 0) {
        fallback = true;
        return out;
    }
    if (mode == Projection::mean_n) {
        if (n < mean_n) {
            fallback = true;
            return out;
        }
        const double m = std::accumulate(s.end() - mean_n, s.end(), 0.0) / mean_n;
        std::fill(out.begin(), out.end(), m);
    } else if (mode == Projection::linear_extrapolation) {
        if (n < 2) {
            fallback = true;
            return out;
        }
        const int k = std::min(window, n);
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (int j = 0; j < k; ++j) {
            const double x = static_cast<double>(n - k + j), y = s[n - k + j];
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
        const double icpt = (sy - slope * sx) / k;
        for (int h = 0; h < horizon; ++h)
            out[h] = std::max(0.0, icpt + slope * static_cast<double>(n - 1 + h + 1));
    }
    return out;
}

}  // namespace

ProjectedRates project_rates(const RateSeries& smoothed, Projection mode, int horizon, int mean_n,
                             int extrapolation_window) {
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    ProjectedRates out;
    const auto b = project_one(smoothed.beta, mode, horizon, mean_n, extrapolation_window, out.fallback);
    const auto g = project_one(smoothed.gamma, mode, horizon, mean_n, extrapolation_window, out.fallback);
    const auto d = project_one(smoothed.delta, mode, horizon, mean_n, extrapolation_window, out.fallback);
    out.rates.resize(horizon);
    for (int h = 0; h < horizon; ++h) out.rates[h] = {b[h], g[h], d[h]};
    return out;
}

Trajectory integrate(const SirdState& initial, std::span<const RateTriple> rates) {
    Trajectory out;
    out.states.reserve(rates.size() + 1);
    out.states.push_back(initial);
    SirdState s = initial;
    for (const auto& r : rates) {
        if (r.beta < 0.0 || r.gamma < 0.0 || r.delta < 0.0) throw std::invalid_argument("negative SIRD rate");
        const double I0 = s.I;
        double infected = s.N > 0.0 ? r.beta * I0 * s.S / s.N : 0.0;
        infected = std::clamp(infected, 0.0, s.S);
        double recovered = r.gamma * I0, died = r.delta * I0;
        const double leaving = recovered + died;
        if (leaving > I0 && leaving > 0.0) {
            recovered *= I0 / leaving;
            died = I0 - recovered;
        }
        s.S -= infected;
        s.I = I0 + infected - recovered - died;
        s.R += recovered;
        s.D += died;
        if (s.I < 0.0) s.I = 0.0;
        out.states.push_back(s);
        out.new_cases.push_back(infected);
    }
    return out;
}

double trailing_incidence(std::span<const double> daily_cases, std::size_t end_exclusive, int window,
                          double population) {
    if (!(population >= 1.0)) throw std::invalid_argument("population must be >= 1");
    const std::size_t begin = end_exclusive > static_cast<std::size_t>(window) ? end_exclusive - window : 0;
    double sum = 0.0;
    for (std::size_t t = begin; t < end_exclusive; ++t) sum += daily_cases[t];
    return kPer100k * sum / population;
}

SirdForecast forecast_municipalities(const std::vector<std::vector<double>>& cases,
                                     std::span<const double> populations,
                                     std::span<const double> national_deaths, const SirdConfig& config,
                                     int horizon) {
    config.validate();
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    const std::size_t M = cases.size();
    if (M == 0 || populations.size() != M) throw std::invalid_argument("one case series per municipality");
    const std::size_t n = cases.front().size();
    for (const auto& c : cases) check_same_length(c.size(), n, "forecast_municipalities");
    if (n < 2) throw std::invalid_argument("SIRD needs at least two days of history");

    SirdForecast out;
    std::vector<double> nat_cases(n, 0.0), nat_deaths(n, 0.0);
    for (const auto& c : cases)
        for (std::size_t t = 0; t < n; ++t) nat_cases[t] += c[t];
    if (national_deaths.empty()) {
        ++out.flags;
    } else {
        if (national_deaths.size() < n) throw DataError("national deaths series is shorter than the case history");
        std::copy_n(national_deaths.begin(), n, nat_deaths.begin());
    }
    const int w = config.recovery_window;
    const std::vector<double> mu = mortality_series(nat_cases, nat_deaths, w, &out.flags);
    const Removals nat = removal_recursion(nat_cases, w, [&](std::size_t t, double) { return nat_deaths[t]; });
    const RateSeries nat_smoothed =
        smooth(derive_rates(nat_cases, nat.recoveries, nat.deaths, nat.active), config.bandwidth);

    out.incidence.resize(horizon, static_cast<Eigen::Index>(M));
    out.municipalities.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
        auto& mf = out.municipalities[m];
        const double pop = populations[m];
        try {
            const Removals rem = approximate_recoveries_deaths(cases[m], mu, w);
            mf.flags += rem.floored;
            mf.raw = derive_rates(cases[m], rem.recoveries, rem.deaths, rem.active);
            mf.smoothed = smooth(mf.raw, config.bandwidth);
            mf.blended = blend(mf.smoothed, nat_smoothed, config.pseudo_count, pop);
            const ProjectedRates proj = project_rates(mf.blended, config.projection, horizon, config.mean_n,
                                                      config.extrapolation_window);
            if (proj.fallback) ++mf.flags;
            SirdState s0;
            s0.N = pop;
            s0.I = rem.active.back();
            s0.R = std::accumulate(rem.recoveries.begin(), rem.recoveries.end(), 0.0);
            s0.D = std::accumulate(rem.deaths.begin(), rem.deaths.end(), 0.0);
            s0.S = std::max(0.0, pop - s0.I - s0.R - s0.D);
            s0.N = s0.S + s0.I + s0.R + s0.D;
            const Trajectory traj = integrate(s0, proj.rates);
            std::vector<double> spliced(cases[m]);
            spliced.insert(spliced.end(), traj.new_cases.begin(), traj.new_cases.end());
            for (int h = 0; h < horizon; ++h) {
                const double v = trailing_incidence(spliced, n + h + 1, config.incidence_window, pop);
                if (!std::isfinite(v)) throw NumericalError("non-finite SIRD forecast");
                mf.incidence.push_back(v);
            }
        } catch (const std::exception&) {
            mf.failed = true;
            ++mf.flags;
            const double last = trailing_incidence(cases[m], n, config.incidence_window, std::max(1.0, pop));
            mf.incidence.assign(horizon, last);
        }
        for (int h = 0; h < horizon; ++h) out.incidence(h, static_cast<Eigen::Index>(m)) = mf.incidence[h];
        out.flags += mf.flags;
    }
    return out;
}

void write_rate_series_csv(const std::string& path, const MunicipalityForecast& f) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "day,series,beta,gamma,delta\n";
    auto dump = [&](const char* name, const RateSeries& r) {
        for (std::size_t t = 0; t < r.size(); ++t)
            out << t << ',' << name << ',' << detail::fmt6(r.beta[t]) << ',' << detail::fmt6(r.gamma[t]) << ','
                << detail::fmt6(r.delta[t]) << '\n';
    };
    dump("raw", f.raw);
    dump("smoothed", f.smoothed);
    dump("blended", f.blended);
}

}  // namespace covmap::sird
