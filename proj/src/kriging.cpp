#include "covmap/kriging.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace covmap::dss {

double poisson_risk_variance(double mean_rate, double population, double sigma_r2) {
    if (!(population >= 1.0)) throw std::invalid_argument("population must be >= 1");
    if (!(mean_rate >= 0.0)) throw std::invalid_argument("mean rate must be >= 0");
    return sigma_r2 + mean_rate / population;
}

KrigingResult solve_kriging_system(const KrigingSystem& s) {
    KrigingResult r;
    const auto n = s.rhs.size();
    if (n == 0) {
        r.mean = s.global_mean;
        r.variance = s.point_variance;
        r.empty_neighborhood = true;
        return r;
    }
    Eigen::VectorXd weights;
    Eigen::LLT<Eigen::MatrixXd> llt(s.lhs);
    const double scale = std::max(s.lhs.diagonal().maxCoeff(), 1e-300);
    bool ok = llt.info() == Eigen::Success;
    if (ok) {
        // Reject factorizations with a collapsed pivot; they give garbage weights.
        const double min_pivot = llt.matrixLLT().diagonal().minCoeff();
        ok = min_pivot * min_pivot > 1e-12 * scale;
    }
    if (ok) {
        weights = llt.solve(s.rhs);
    } else {
        Eigen::MatrixXd ridged = s.lhs;
        ridged.diagonal().array() += 1e-8 * scale;
        weights = ridged.ldlt().solve(s.rhs);
        r.ridge_fallback = true;
    }
    r.mean = s.global_mean + weights.dot(s.values - Eigen::VectorXd::Constant(n, s.global_mean));
    r.variance = std::max(0.0, s.point_variance - weights.dot(s.rhs));
    return r;
}

KrigingResult solve_block_kriging(Point target, std::span<const PointDatum> points,
                                  std::span<const BlockObservation> blocks,
                                  const VariogramModel& model, double global_mean) {
    using geostat::cov_point;
    const auto np = static_cast<Eigen::Index>(points.size());
    const auto nb = static_cast<Eigen::Index>(blocks.size());
    KrigingSystem s;
    s.global_mean = global_mean;
    s.point_variance = model.total_sill();
    s.lhs.resize(np + nb, np + nb);
    s.rhs.resize(np + nb);
    s.values.resize(np + nb);

    std::vector<geostat::BlockSupport> supports(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (blocks[b].support.empty()) throw std::invalid_argument("empty block support");
        supports[b].points.assign(blocks[b].support.begin(), blocks[b].support.end());
    }

    for (Eigen::Index i = 0; i < np; ++i) {
        s.values(i) = points[i].value;
        s.rhs(i) = cov_point(model, points[i].location, target);
        for (Eigen::Index j = 0; j <= i; ++j)
            s.lhs(i, j) = s.lhs(j, i) = cov_point(model, points[i].location, points[j].location);
    }
    for (Eigen::Index b = 0; b < nb; ++b) {
        const Eigen::Index row = np + b;
        s.values(row) = blocks[b].value;
        s.rhs(row) = geostat::cov_block(model, supports[b], target);
        for (Eigen::Index i = 0; i < np; ++i)
            s.lhs(row, i) = s.lhs(i, row) = geostat::cov_block(model, supports[b], points[i].location);
        for (Eigen::Index c = 0; c <= b; ++c)
            s.lhs(row, np + c) = s.lhs(np + c, row) = geostat::cov_block(model, supports[b], supports[c]);
        s.lhs(row, row) += blocks[b].error_variance;
    }
    return solve_kriging_system(s);
}

}  // namespace covmap::dss
