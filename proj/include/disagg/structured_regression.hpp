#pragma once

// Variance-weighted l1-penalized regression of group-level estimates on
// group features, cross-validated choice of the penalty, and residual
// bootstrap lasso+partial ridge confidence intervals.
//
// The objective is
//
//   L(t0, t) = sum_a w_a (t0 + t . phi_a - Z_a)^2 + lambda * sum_j s_j |t_j|
//
// over groups with a defined Z_a, with w_a = 1 / sigma_a^2. Penalized
// columns are rescaled internally to unit weighted standard deviation
// (s_j above), so a single lambda is comparable across heterogeneous
// columns; the intercept is never penalized. At lambda = 0 the fit
// interpolates the standard estimates whenever group-identity indicators
// are present; past lambda_max it collapses to their weighted mean.

#include "disagg/core_data.hpp"
#include "disagg/feature_builder.hpp"
#include "disagg/metrics.hpp"
#include "disagg/variance_ci.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace disagg {

struct LassoOptions {
    double tolerance = 1e-7;   // max coefficient update per sweep
    int max_sweeps = 100000;
    bool track_objective = false;  // record the objective after every sweep
};

struct LassoFit {
    double intercept = 0.0;
    std::vector<double> coefficients;  // original column scale
    double lambda = 0.0;
    std::vector<double> weights;       // 1/sigma_a^2 actually used (0 = excluded)
    std::vector<double> fitted;        // all groups, defined groups or not
    std::vector<std::size_t> active;   // nonzero coefficient columns
    std::vector<std::size_t> sizes;    // group sizes, when fitted from an EstimateSet
    double objective = 0.0;
    int sweeps = 0;
    double final_max_update = 0.0;
    bool converged = false;
};

// Loss weights from pooled variances; degenerate variances are floored at
// 1e-12 * pooled scale (all-equal weights when the scale itself is zero).
// Groups with undefined Z get weight 0 and are excluded from the loss.
std::vector<double> lasso_weights(const EstimateSet& z, const VarianceModel& variances);

LassoFit fit_weighted_lasso(const FeatureMatrix& phi, const EstimateSet& z,
                            const VarianceModel& variances, double lambda,
                            const LassoOptions& options = {});

// Same fit with explicit per-group weights (0 excludes a group).
LassoFit fit_weighted_lasso_raw(const FeatureMatrix& phi,
                                const std::vector<std::optional<double>>& z,
                                const std::vector<double>& weights, double lambda,
                                const LassoOptions& options = {});

// The exact objective the optimizer minimizes (standardized penalty).
double lasso_objective(const FeatureMatrix& phi, const std::vector<std::optional<double>>& z,
                       const std::vector<double>& weights, double lambda, double intercept,
                       const std::vector<double>& coefficients);

// Smallest lambda at which every penalized coefficient is zero.
double lasso_lambda_max(const FeatureMatrix& phi, const std::vector<std::optional<double>>& z,
                        const std::vector<double>& weights);

// count log-spaced values from lambda_max down to ratio * lambda_max.
std::vector<double> lambda_grid(double lambda_max, int count = 50, double min_ratio = 1e-4);

struct CvOptions {
    int folds = 10;
    int grid_size = 50;
    double grid_min_ratio = 1e-4;
    int variance_replicates = kDefaultVarianceBootstrap;
    LassoOptions lasso;
};

struct CvResult {
    std::vector<double> grid;       // strictly decreasing
    std::vector<double> mean_loss;  // mean validation loss per grid point
    double selected_lambda = 0.0;
    std::uint64_t seed = 0;
};

// Stratified K-fold selection of lambda. Folds are dealt within each
// group; per fold, estimates, variances and data-derived feature columns
// are recomputed on the training portion and scored against held-out
// standard estimates under pooled weights at validation sizes.
CvResult cv_select_lambda(const std::vector<EvalRecord>& records,
                          const AttributeSchema& schema, const MetricConfig& metric,
                          const FeatureSpec& features, std::uint64_t seed,
                          const CvOptions& options = {});

EstimateSet sr_estimates(const LassoFit& fit);

struct LprFit {
    std::vector<std::size_t> active;  // lasso-selected columns
    double intercept = 0.0;
    std::vector<double> coefficients;
    std::vector<double> fitted;  // all groups
};

// Lasso feature selection at lambda_lasso, then a weighted ridge refit
// penalizing only the unselected columns (standardized scale); intercept
// and selected columns stay unpenalized.
LprFit fit_lpr(const FeatureMatrix& phi, const std::vector<std::optional<double>>& z,
               const std::vector<double>& weights, double lambda_lasso, double lambda_ridge,
               const LassoOptions& options = {});

inline constexpr double kDefaultLambdaRidge = 1e-2;
inline constexpr int kDefaultRblprBootstrap = 200;

// Residual bootstrap lasso+partial ridge intervals: standardized LPR
// residuals are recentered, resampled, and scaled back onto the LPR fit;
// each replicate refits LPR at the same penalties and the interval is the
// percentile band of replicate fitted values.
IntervalSet rblpr_ci(const FeatureMatrix& phi, const EstimateSet& z,
                     const VarianceModel& variances, double lambda_lasso,
                     double lambda_ridge, int replicates, double alpha, std::uint64_t seed,
                     const LassoOptions& options = {});

} // namespace disagg
