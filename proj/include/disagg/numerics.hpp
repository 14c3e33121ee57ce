#pragma once

// Numerical primitives shared by the estimation modules: normal quantile,
// F-distribution CDF through the regularized incomplete beta, and a
// rank-revealing weighted least-squares solve.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace disagg {

// sign(v) * max(|v| - t, 0); t >= 0.
inline double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

double log_gamma(double x);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

// Standard normal CDF / quantile. Quantile accurate to well below 1e-9
// on (0, 1); arguments outside (0, 1) raise a domain error.
double normal_cdf(double x);
double normal_quantile(double p);

// CDF of the F distribution with d1, d2 degrees of freedom.
// Absolute error below 1e-10 for moderate df.
double f_cdf(double x, double d1, double d2);

struct WlsResult {
    Eigen::VectorXd solution;  // minimum-norm minimizer
    double rss = 0.0;          // residual sum of squares in the weighted metric
    Eigen::Index rank = 0;     // numerical rank of sqrt(W) * A
};

// Minimum-norm minimizer of sum_i w_i (A x - b)_i^2 via a rank-revealing
// complete orthogonal decomposition. Rank tolerance is relative to the
// largest diagonal of the factor (threshold 1e-10).
WlsResult weighted_least_squares(const Eigen::MatrixXd& design,
                                 const Eigen::VectorXd& response,
                                 const Eigen::VectorXd& weights);

} // namespace disagg
