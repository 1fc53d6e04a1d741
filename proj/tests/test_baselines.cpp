#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"

#include "covmap/baselines.hpp"
#include "covmap/errors.hpp"

using namespace covmap;
using namespace covmap::baselines;

namespace {

std::vector<double> simulate_arma(double k, const std::vector<double>& phi, const std::vector<double>& theta,
                                  std::vector<double> start, int n, double noise_sd, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> e(0.0, noise_sd);
    std::vector<double> z = std::move(start), eps(z.size(), 0.0);
    while (static_cast<int>(z.size()) < n) {
        const std::size_t t = z.size();
        const double shock = noise_sd > 0 ? e(rng) : 0.0;
        double v = k + shock;
        for (std::size_t i = 0; i < phi.size(); ++i) v += phi[i] * z[t - 1 - i];
        for (std::size_t j = 0; j < theta.size(); ++j) v += theta[j] * eps[t - 1 - j];
        z.push_back(v);
        eps.push_back(shock);
    }
    return z;
}

}  // namespace

TEST_CASE("ARMA: noise-free AR(1) recovery") {
    std::vector<double> z{100.0};
    for (int t = 1; t < 200; ++t) z.push_back(0.5 * z.back());
    const auto m = fit_arma(z, 1, 0);
    CHECK(std::abs(m.ar[0] - 0.5) <= 1e-6);
    CHECK(std::abs(m.intercept) <= 1e-6);
}

TEST_CASE("ARMA: noise-free AR(2) with intercept, fitted with an MA term too") {
    const auto z = simulate_arma(20.0, {1.6, -0.7}, {}, {50.0, 60.0}, 300, 0.0, 0);
    for (int q : {0, 1}) {
        const auto m = fit_arma(z, 2, q);
        CHECK(std::abs(m.ar[0] - 1.6) <= 1e-6);
        CHECK(std::abs(m.ar[1] + 0.7) <= 1e-6);
        CHECK(std::abs(m.intercept - 20.0) <= 1e-6);
        if (q) CHECK(std::abs(m.ma[0]) <= 1e-6);
    }
}

TEST_CASE("ARMA: refitting on the model's own output reproduces it") {
    const auto z = simulate_arma(5.0, {0.9, -0.3}, {}, {10.0, 30.0}, 200, 0.0, 0);
    const auto m1 = fit_arma(z, 2, 0);
    const auto z2 = simulate_arma(m1.intercept, m1.ar, {}, {10.0, 30.0}, 200, 0.0, 0);
    const auto m2 = fit_arma(z2, 2, 0);
    CHECK(std::abs(m2.ar[0] - m1.ar[0]) <= 1e-6);
    CHECK(std::abs(m2.ar[1] - m1.ar[1]) <= 1e-6);
    CHECK(std::abs(m2.intercept - m1.intercept) <= 1e-6);
}

TEST_CASE("ARMA: constant series") {
    const std::vector<double> z(40, 7.0);
    const auto m = fit_arma(z, 2, 1);
    CHECK(m.constant);
    for (double v : forecast_arma(m, 5)) CHECK(v == 7.0);
    for (double v : m.ar) CHECK(v == 0.0);
}

TEST_CASE("ARMA: order and length validation") {
    const std::vector<double> z(20, 1.0);
    CHECK_THROWS_AS(fit_arma(z, 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(fit_arma(z, 7, 1), std::invalid_argument);  // needs 34 points
}

TEST_CASE("ARMA: forecasts") {
    ArmaModel m;
    m.p = 1;
    m.ar = {0.5};
    m.tail = {8.0};
    m.residuals = {0.0};
    const auto f = forecast_arma(m, 3);
    CHECK(f == std::vector<double>{4.0, 2.0, 1.0});

    ArmaModel c;
    c.p = 2;
    c.ar = {0.0, 0.0};
    c.intercept = 3.5;
    c.tail = {1.0, 2.0};
    for (double v : forecast_arma(c, 4)) CHECK(v == 3.5);

    // negative values are clamped on emission only
    ArmaModel n;
    n.p = 1;
    n.ar = {-1.0};
    n.intercept = 0.0;
    n.tail = {2.0};
    CHECK(forecast_arma(n, 2) == std::vector<double>{0.0, 2.0});
}

TEST_CASE("ARMA: one-step forecast equals the regression prediction") {
    const auto z = simulate_arma(3.0, {0.6}, {0.4}, {10.0}, 200, 1.0, 12);
    const auto m = fit_arma(z, 1, 1);
    const double pred = m.intercept + m.ar[0] * z.back() + m.ma[0] * m.residuals.back();
    CHECK(forecast_arma(m, 1)[0] == doctest::Approx(std::max(0.0, pred)).epsilon(1e-12));
    CHECK(m.residuals.size() == z.size());
}

TEST_CASE("ARMA: default configuration p=7, q=1 fits") {
    const auto z = simulate_arma(10.0, {0.5, 0.1, 0.05, 0.05, 0.05, 0.05, 0.1}, {0.3},
                                 {100, 100, 100, 100, 100, 100, 100}, 240, 5.0, 3);
    const auto m = fit_arma(z, 7, 1);
    CHECK(m.ar.size() == 7);
    CHECK(m.ma.size() == 1);
    for (double v : forecast_arma(m, 10)) CHECK(std::isfinite(v));
}

TEST_CASE("ARMA: shifting the series changes only the intercept") {
    const auto z = simulate_arma(10.0, {0.7, 0.1}, {}, {40.0, 45.0}, 300, 2.0, 21);
    auto shifted = z;
    for (auto& v : shifted) v += 250.0;
    const auto a = fit_arma(z, 2, 0), b = fit_arma(shifted, 2, 0);
    CHECK(a.ar[0] == doctest::Approx(b.ar[0]).epsilon(1e-9));
    CHECK(a.ar[1] == doctest::Approx(b.ar[1]).epsilon(1e-9));
    CHECK(b.intercept - a.intercept == doctest::Approx(250.0 * (1.0 - a.ar[0] - a.ar[1])).epsilon(1e-8));
    for (std::size_t t = 2; t < z.size(); ++t)
        CHECK(a.residuals[t] == doctest::Approx(b.residuals[t]).scale(1.0).epsilon(1e-8));
}

TEST_CASE("VAR: noise-free 2-cell recovery and forecast by hand") {
    VarModel truth;
    truth.p = 1;
    truth.intercept = Eigen::Vector2d::Zero();
    Eigen::Matrix2d A;
    A << 0.5, 0.1, 0.0, 0.4;
    truth.A = {A};
    Eigen::MatrixXd init(1, 2);
    init << 100.0, 80.0;
    const Eigen::MatrixXd panel = simulate_var(truth, init, 299);
    // exactly representable range only: the series decays to 1e-90, still well scaled for QR
    const auto m = fit_var(panel.topRows(60), 1, 0.0);
    CHECK((m.A[0] - A).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(m.intercept.cwiseAbs().maxCoeff() <= 1e-6);

    const Eigen::MatrixXd f = forecast_var(m, panel.topRows(10), 2);
    const Eigen::Vector2d z1 = A * panel.row(9).transpose();
    const Eigen::Vector2d z2 = A * z1;
    CHECK((f.row(0).transpose() - z1).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((f.row(1).transpose() - z2).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("VAR: identity dynamics") {
    SUBCASE("a constant panel is rank deficient without ridge") {
        Eigen::MatrixXd panel = Eigen::MatrixXd::Constant(30, 2, 5.0);
        CHECK_THROWS_AS(fit_var(panel, 1, 0.0), NumericalError);
    }
    SUBCASE("a random walk panel recovers A = I") {
        std::mt19937_64 rng(5);
        std::normal_distribution<double> n(0.0, 1.0);
        Eigen::MatrixXd panel(2000, 2);
        panel.row(0) << 50.0, 70.0;
        for (int t = 1; t < 2000; ++t)
            panel.row(t) = panel.row(t - 1) + Eigen::RowVector2d(n(rng), n(rng));
        const auto m = fit_var(panel, 1, 0.0);
        CHECK((m.A[0] - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() <= 0.02);
    }
    SUBCASE("identity A repeats the last row") {
        VarModel m;
        m.p = 1;
        m.intercept = Eigen::Vector3d::Zero();
        m.A = {Eigen::Matrix3d::Identity()};
        Eigen::MatrixXd recent(2, 3);
        recent << 1, 2, 3, 4, 5, 6;
        const auto f = forecast_var(m, recent, 5);
        for (int h = 0; h < 5; ++h) CHECK((f.row(h) - recent.row(1)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("VAR: zero model forecasts zeros") {
    VarModel m;
    m.p = 2;
    m.intercept = Eigen::VectorXd::Zero(4);
    m.A = {Eigen::MatrixXd::Zero(4, 4), Eigen::MatrixXd::Zero(4, 4)};
    const auto f = forecast_var(m, Eigen::MatrixXd::Random(3, 4), 3);
    CHECK(f.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("VAR: default configuration p=4 with ridge in the wide regime") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd panel(60, 40);
    for (int i = 0; i < 60; ++i)
        for (int j = 0; j < 40; ++j) panel(i, j) = 100.0 + 10.0 * std::sin(0.1 * i + j) + n(rng);
    const auto m = fit_var(panel, 4, 1e-3);
    CHECK(m.A.size() == 4);
    CHECK(m.n() == 40);
    const auto f = forecast_var(m, panel, 7);
    CHECK(f.rows() == 7);
    CHECK(f.allFinite());
    CHECK(f.minCoeff() >= 0.0);
    CHECK_THROWS_AS(fit_var(panel, 4, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(fit_var(panel, 4, 1e-3, 10), std::invalid_argument);
}

TEST_CASE("VAR ridge: primal and dual forms agree") {
    std::mt19937_64 rng(10);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd panel(40, 6);
    for (int i = 0; i < 40; ++i)
        for (int j = 0; j < 6; ++j) panel(i, j) = n(rng);
    // 6*4 = 24 regressors vs 36 rows (primal) and 6*8 = 48 vs 32 rows (dual)
    for (int p : {4, 8}) {
        const auto m = fit_var(panel, p, 0.5);
        // brute force: penalized normal equations over centered data
        const int rows = 40 - p, cols = 6 * p;
        Eigen::MatrixXd X(rows, cols), Y = panel.bottomRows(rows);
        for (int i = 0; i < p; ++i) X.middleCols(i * 6, 6) = panel.middleRows(p - 1 - i, rows);
        const Eigen::RowVectorXd xm = X.colwise().mean(), ym = Y.colwise().mean();
        X.rowwise() -= xm;
        Y.rowwise() -= ym;
        const Eigen::MatrixXd G = X.transpose() * X + 0.5 * Eigen::MatrixXd::Identity(cols, cols);
        const Eigen::MatrixXd B = G.fullPivLu().solve(X.transpose() * Y);
        for (int i = 0; i < p; ++i)
            CHECK((m.A[i] - B.middleRows(i * 6, 6).transpose()).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("diagonal VAR and per-cell AR agree on decoupled systems") {
    VarModel v;
    v.p = 1;
    v.intercept = Eigen::Vector2d(4.0, 1.0);
    Eigen::Matrix2d A = Eigen::Matrix2d::Zero();
    A(0, 0) = 0.8;
    A(1, 1) = -0.6;
    v.A = {A};
    Eigen::MatrixXd init(1, 2);
    init << 30.0, 12.0;
    const Eigen::MatrixXd panel = simulate_var(v, init, 80);
    const auto fv = forecast_var(v, panel, 6);
    for (int c = 0; c < 2; ++c) {
        ArmaModel a;
        a.p = 1;
        a.ar = {A(c, c)};
        a.intercept = v.intercept(c);
        a.tail = {panel(panel.rows() - 1, c)};
        const auto fa = forecast_arma(a, 6);
        for (int h = 0; h < 6; ++h) CHECK(std::abs(fa[h] - fv(h, c)) <= 1e-8);

        std::vector<double> series(panel.rows());
        for (int t = 0; t < panel.rows(); ++t) series[t] = panel(t, c);
        const auto fitted = forecast_arma(fit_arma(series, 1, 0), 6);
        const auto fitted_var = forecast_var(fit_var(panel, 1, 0.0), panel, 6);
        for (int h = 0; h < 6; ++h) CHECK(std::abs(fitted[h] - fitted_var(h, c)) <= 1e-8);
    }
}

TEST_CASE("coefficient tables") {
    const auto dir = std::filesystem::temp_directory_path() / "covmap_test_baselines";
    std::filesystem::create_directories(dir);
    VarModel v;
    v.p = 1;
    v.intercept = Eigen::Vector2d(1.0, 2.0);
    v.A = {Eigen::Matrix2d::Identity()};
    write_var_csv((dir / "var.csv").string(), v);
    std::ifstream in(dir / "var.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "equation,term,lag,regressor,value");
    int lines = 0;
    for (std::string l; std::getline(in, l);) ++lines;
    CHECK(lines == 2 + 4);
    ArmaModel a;
    a.p = 1;
    a.q = 1;
    a.ar = {0.5};
    a.ma = {0.1};
    std::vector<ArmaModel> models{a, a};
    write_arma_csv((dir / "arma.csv").string(), models);
    std::ifstream in2(dir / "arma.csv");
    lines = 0;
    for (std::string l; std::getline(in2, l);) ++lines;
    CHECK(lines == 1 + 2 * 3);
}

TEST_CASE("ARMA: MA invertibility") {
    const std::vector<double> inside{0.5}, outside{1.5}, pair{0.2, 0.3}, unstable_pair{0.5, 1.2};
    CHECK(ma_invertible(inside));
    CHECK_FALSE(ma_invertible(outside));
    CHECK(ma_invertible(pair));
    CHECK_FALSE(ma_invertible(unstable_pair));
    CHECK(ma_invertible(std::vector<double>{}));
}
