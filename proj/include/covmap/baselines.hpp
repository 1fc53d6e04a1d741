#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace covmap::baselines {

struct ArmaModel {
    int p = 0;
    int q = 0;
    double intercept = 0.0;
    std::vector<double> ar;         ///< phi(1..p)
    std::vector<double> ma;         ///< theta(1..q)
    std::vector<double> tail;       ///< last p observations, oldest first
    std::vector<double> residuals;  ///< in-sample residuals, aligned with the series
    bool constant = false;          ///< fitted on a constant series (intercept only)
    /// MA polynomial has a root on or inside the unit circle; residuals are
    /// then the stage-two regression residuals instead of the recursion.
    bool noninvertible = false;
};

/// True when every root of 1 + theta_1 z + ... + theta_q z^q lies outside
/// the unit circle.
bool ma_invertible(std::span<const double> theta);

/// Two-stage regression: a long autoregression supplies residual proxies,
/// then z(t) is regressed on p lags and q lagged proxies.
/// Needs series.size() >= 3 * (p + q) + 10, p >= 1, q >= 0.
ArmaModel fit_arma(std::span<const double> series, int p, int q);

/// Iterated one-step forecasts with future innovations set to zero.
/// Emitted values are clamped at 0; the recursion itself is not.
std::vector<double> forecast_arma(const ArmaModel& model, int horizon);

/// One-step prediction for every t >= p of `series` using the model's
/// coefficients and zero-started residual recursion.
std::vector<double> arma_residuals(const ArmaModel& model, std::span<const double> series);

struct VarModel {
    int p = 0;
    Eigen::VectorXd intercept;       ///< length N
    std::vector<Eigen::MatrixXd> A;  ///< A[i] multiplies z(t - 1 - i)
    int n() const { return static_cast<int>(intercept.size()); }
};

struct VarOptions {
    int p = 4;
    double ridge = 1e-3;
    int max_cells = 2500;
};

/// Joint least squares over all equations; `panel` is T_obs x N (rows are
/// days). With ridge > 0 the slopes are penalized, the intercept is not.
/// Throws std::invalid_argument on bad shapes and NumericalError when the
/// unpenalized design is rank deficient.
VarModel fit_var(const Eigen::MatrixXd& panel, int p, double ridge, int max_cells = 2500);

/// Iterated forecasts from the last p rows of `recent`; returns horizon x N,
/// clamped at 0 on emission.
Eigen::MatrixXd forecast_var(const VarModel& model, const Eigen::MatrixXd& recent, int horizon);

/// Simulates z(t) = k + sum A_i z(t-i) + noise(t) from initial rows.
Eigen::MatrixXd simulate_var(const VarModel& model, const Eigen::MatrixXd& initial, int steps,
                             const Eigen::MatrixXd* noise = nullptr);

/// Coefficient tables: cell,term,lag,value / equation,term,lag,regressor,value.
void write_arma_csv(const std::string& path, std::span<const ArmaModel> models);
void write_var_csv(const std::string& path, const VarModel& model);

}  // namespace covmap::baselines
