#include "covmap/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "covmap/errors.hpp"
#include "csv_util.hpp"

namespace covmap::baselines {

namespace {

constexpr double kRankThreshold = 1e-10;

Eigen::VectorXd least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
    cod.setThreshold(kRankThreshold);
    return cod.solve(y);
}

bool is_constant(std::span<const double> s) {
    const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
    return *hi - *lo <= 1e-12 * std::max(1.0, std::abs(*hi));
}

}  // namespace

// ---------------------------------------------------------------------------
// ARMA

bool ma_invertible(std::span<const double> theta) {
    const auto q = static_cast<Eigen::Index>(theta.size());
    if (q == 0) return true;
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(q, q);
    for (Eigen::Index j = 0; j < q; ++j) C(0, j) = -theta[j];
    for (Eigen::Index j = 1; j < q; ++j) C(j, j - 1) = 1.0;
    const Eigen::VectorXcd roots = Eigen::EigenSolver<Eigen::MatrixXd>(C, false).eigenvalues();
    return roots.cwiseAbs().maxCoeff() < 1.0;
}

std::vector<double> arma_residuals(const ArmaModel& model, std::span<const double> series) {
    const std::size_t n = series.size();
    std::vector<double> eps(n, 0.0);
    for (std::size_t t = static_cast<std::size_t>(model.p); t < n; ++t) {
        double pred = model.intercept;
        for (int i = 0; i < model.p; ++i) pred += model.ar[i] * series[t - 1 - i];
        for (int j = 0; j < model.q && static_cast<std::size_t>(j) < t; ++j)
            pred += model.ma[j] * eps[t - 1 - j];
        eps[t] = series[t] - pred;
    }
    return eps;
}

ArmaModel fit_arma(std::span<const double> series, int p, int q) {
    if (p < 1 || q < 0) throw std::invalid_argument("ARMA orders need p >= 1 and q >= 0");
    const int n = static_cast<int>(series.size());
    if (n < 3 * (p + q) + 10)
        throw std::invalid_argument("series too short for ARMA(" + std::to_string(p) + "," +
                                    std::to_string(q) + ")");
    for (double v : series)
        if (!std::isfinite(v)) throw DataError("ARMA series contains non-finite values");

    ArmaModel model;
    model.p = p;
    model.q = q;
    model.ar.assign(p, 0.0);
    model.ma.assign(q, 0.0);
    model.tail.assign(series.end() - p, series.end());

    if (is_constant(series)) {
        model.intercept = series.back();
        model.constant = true;
        model.residuals.assign(series.size(), 0.0);
        return model;
    }

    std::vector<double> proxy(n, 0.0);
    int start = p;
    if (q > 0) {
        const int m = std::min(std::max(2 * (p + q), static_cast<int>(std::ceil(10.0 * std::log10(n)))),
                               (n - 1) / 3);
        Eigen::MatrixXd X(n - m, m + 1);
        Eigen::VectorXd y(n - m);
        for (int t = m; t < n; ++t) {
            X(t - m, 0) = 1.0;
            for (int i = 0; i < m; ++i) X(t - m, i + 1) = series[t - 1 - i];
            y(t - m) = series[t];
        }
        const Eigen::VectorXd b = least_squares(X, y);
        const Eigen::VectorXd r = y - X * b;
        for (int t = m; t < n; ++t) proxy[t] = r(t - m);
        start = std::max(p, m + q);
    }

    const int rows = n - start;
    Eigen::MatrixXd X(rows, 1 + p + q);
    Eigen::VectorXd y(rows);
    for (int t = start; t < n; ++t) {
        const int r = t - start;
        X(r, 0) = 1.0;
        for (int i = 0; i < p; ++i) X(r, 1 + i) = series[t - 1 - i];
        for (int j = 0; j < q; ++j) X(r, 1 + p + j) = proxy[t - 1 - j];
        y(r) = series[t];
    }
    const Eigen::VectorXd b = least_squares(X, y);
    model.intercept = b(0);
    for (int i = 0; i < p; ++i) model.ar[i] = b(1 + i);
    for (int j = 0; j < q; ++j) model.ma[j] = b(1 + p + j);
    if (ma_invertible(model.ma)) {
        model.residuals = arma_residuals(model, series);
    } else {
        model.noninvertible = true;
        model.residuals.assign(n, 0.0);
        const Eigen::VectorXd r = y - X * b;
        for (int t = start; t < n; ++t) model.residuals[t] = r(t - start);
    }
    return model;
}

std::vector<double> forecast_arma(const ArmaModel& model, int horizon) {
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    std::vector<double> hist = model.tail;
    std::vector<double> eps(model.residuals.end() - std::min<std::size_t>(model.q, model.residuals.size()),
                            model.residuals.end());
    eps.insert(eps.begin(), static_cast<std::size_t>(model.q) - eps.size(), 0.0);
    std::vector<double> out;
    out.reserve(horizon);
    for (int h = 0; h < horizon; ++h) {
        double pred = model.intercept;
        for (int i = 0; i < model.p; ++i) pred += model.ar[i] * hist[hist.size() - 1 - i];
        for (int j = 0; j < model.q; ++j) pred += model.ma[j] * eps[eps.size() - 1 - j];
        hist.push_back(pred);
        eps.push_back(0.0);
        out.push_back(std::max(0.0, pred));
    }
    return out;
}

// ---------------------------------------------------------------------------
// VAR

VarModel fit_var(const Eigen::MatrixXd& panel, int p, double ridge, int max_cells) {
    if (p < 1) throw std::invalid_argument("VAR order must be >= 1");
    if (!(ridge >= 0.0)) throw std::invalid_argument("ridge must be >= 0");
    const auto T = static_cast<int>(panel.rows());
    const auto N = static_cast<int>(panel.cols());
    if (N < 1) throw std::invalid_argument("VAR panel has no series");
    if (N > max_cells)
        throw std::invalid_argument("VAR over " + std::to_string(N) + " cells exceeds the cap of " +
                                    std::to_string(max_cells));
    if (ridge == 0.0 && T < N * p + p + 5)
        throw std::invalid_argument("VAR needs at least N*p + p + 5 rows without ridge");
    if (T < p + 2) throw std::invalid_argument("VAR panel too short");
    if (!panel.allFinite()) throw DataError("VAR panel contains non-finite values");

    const int rows = T - p;
    const int cols = N * p;
    Eigen::MatrixXd X(rows, cols);
    Eigen::MatrixXd Y = panel.bottomRows(rows);
    for (int i = 0; i < p; ++i) X.middleCols(i * N, N) = panel.middleRows(p - 1 - i, rows);

    const Eigen::RowVectorXd x_mean = X.colwise().mean();
    const Eigen::RowVectorXd y_mean = Y.colwise().mean();
    X.rowwise() -= x_mean;
    Y.rowwise() -= y_mean;

    Eigen::MatrixXd B;
    if (ridge == 0.0) {
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
        cod.setThreshold(kRankThreshold);
        if (cod.rank() < cols)
            throw NumericalError("VAR design is rank deficient (rank " + std::to_string(cod.rank()) +
                                 " < " + std::to_string(cols) + "); use ridge > 0");
        B = cod.solve(Y);
    } else if (cols > rows) {
        Eigen::MatrixXd K = X * X.transpose();
        K.diagonal().array() += ridge;
        B = X.transpose() * K.llt().solve(Y);
    } else {
        Eigen::MatrixXd G = X.transpose() * X;
        G.diagonal().array() += ridge;
        B = G.llt().solve(X.transpose() * Y);
    }

    VarModel model;
    model.p = p;
    model.intercept = (y_mean - x_mean * B).transpose();
    for (int i = 0; i < p; ++i) model.A.push_back(B.middleRows(i * N, N).transpose());
    return model;
}

namespace {

Eigen::VectorXd var_step(const VarModel& model, const Eigen::MatrixXd& hist, Eigen::Index last) {
    Eigen::VectorXd z = model.intercept;
    for (int i = 0; i < model.p; ++i) z.noalias() += model.A[i] * hist.row(last - i).transpose();
    return z;
}

}  // namespace

Eigen::MatrixXd forecast_var(const VarModel& model, const Eigen::MatrixXd& recent, int horizon) {
    if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
    if (recent.rows() < model.p) throw std::invalid_argument("forecast_var needs >= p recent rows");
    if (recent.cols() != model.n()) throw std::invalid_argument("recent rows have the wrong width");
    Eigen::MatrixXd hist(model.p + horizon, model.n());
    hist.topRows(model.p) = recent.bottomRows(model.p);
    for (int h = 0; h < horizon; ++h)
        hist.row(model.p + h) = var_step(model, hist, model.p + h - 1).transpose();
    return hist.bottomRows(horizon).cwiseMax(0.0);
}

Eigen::MatrixXd simulate_var(const VarModel& model, const Eigen::MatrixXd& initial, int steps,
                             const Eigen::MatrixXd* noise) {
    if (initial.rows() < model.p || initial.cols() != model.n())
        throw std::invalid_argument("simulate_var needs p initial rows of width N");
    Eigen::MatrixXd out(initial.rows() + steps, model.n());
    out.topRows(initial.rows()) = initial;
    for (int s = 0; s < steps; ++s) {
        const Eigen::Index t = initial.rows() + s;
        out.row(t) = var_step(model, out, t - 1).transpose();
        if (noise) out.row(t) += noise->row(s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

void write_arma_csv(const std::string& path, std::span<const ArmaModel> models) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "cell,term,lag,value\n";
    for (std::size_t c = 0; c < models.size(); ++c) {
        const auto& m = models[c];
        out << c << ",intercept,0," << detail::fmt17(m.intercept) << '\n';
        for (int i = 0; i < m.p; ++i) out << c << ",ar," << i + 1 << ',' << detail::fmt17(m.ar[i]) << '\n';
        for (int j = 0; j < m.q; ++j) out << c << ",ma," << j + 1 << ',' << detail::fmt17(m.ma[j]) << '\n';
    }
}

void write_var_csv(const std::string& path, const VarModel& model) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "equation,term,lag,regressor,value\n";
    for (int e = 0; e < model.n(); ++e) {
        out << e << ",intercept,0,," << detail::fmt17(model.intercept(e)) << '\n';
        for (int i = 0; i < model.p; ++i)
            for (int r = 0; r < model.n(); ++r)
                out << e << ",A," << i + 1 << ',' << r << ',' << detail::fmt17(model.A[i](e, r)) << '\n';
    }
}

}  // namespace covmap::baselines
