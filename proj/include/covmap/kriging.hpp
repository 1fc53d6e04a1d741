#pragma once

#include <span>

#include <Eigen/Dense>

#include "covmap/variogram.hpp"

namespace covmap::dss {

using geo::Point;
using geostat::VariogramModel;

/// Risk variance of a rate observed over `population` people:
/// sigma_r2 + mean_rate / population. Throws std::invalid_argument when
/// population < 1 or mean_rate < 0.
double poisson_risk_variance(double mean_rate, double population, double sigma_r2);

struct PointDatum {
    Point location;
    double value = 0.0;
};

/// Block (area) datum. `support` views the block's discretization points.
struct BlockObservation {
    std::span<const Point> support;
    double value = 0.0;
    double error_variance = 0.0;  ///< added to the block's own diagonal entry
};

struct KrigingResult {
    double mean = 0.0;
    double variance = 0.0;
    bool empty_neighborhood = false;
    bool ridge_fallback = false;
};

/// Dense simple-kriging system: lhs * weights = rhs.
struct KrigingSystem {
    Eigen::MatrixXd lhs;
    Eigen::VectorXd rhs;
    Eigen::VectorXd values;
    double point_variance = 0.0;  ///< C(0) at the target
    double global_mean = 0.0;
};

/// Solves with a Cholesky factorization; retries with a small diagonal
/// ridge when the matrix is not numerically positive definite.
KrigingResult solve_kriging_system(const KrigingSystem& system);

/// Simple block kriging at `target` from point and block data, anchored at
/// `global_mean`. Covariances are point-point, point-block and block-block
/// averages; block error variances enter the block diagonal only.
/// With no data returns (global_mean, C(0)) flagged as empty.
KrigingResult solve_block_kriging(Point target, std::span<const PointDatum> points,
                                  std::span<const BlockObservation> blocks,
                                  const VariogramModel& model, double global_mean);

}  // namespace covmap::dss
