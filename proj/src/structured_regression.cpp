#include "disagg/structured_regression.hpp"

#include "disagg/error.hpp"
#include "disagg/numerics.hpp"
#include "disagg/parallel.hpp"
#include "disagg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace disagg {

namespace {

// Problem restricted to groups with defined Z and positive weight, with
// penalized columns centered and rescaled to unit weighted standard
// deviation. Columns constant across the included groups are pinned at
// coefficient zero (the intercept already spans them).
struct Standardized {
    std::vector<std::size_t> rows;  // group indices in the loss
    Eigen::VectorXd w;              // weights on those rows
    double weight_total = 0.0;
    Eigen::VectorXd z;
    double z_mean = 0.0;            // weighted mean of z
    Eigen::MatrixXd x;              // centered, scaled columns on rows
    Eigen::VectorXd col_mean;
    Eigen::VectorXd col_scale;      // 0 marks a pinned column
};

Standardized standardize(const FeatureMatrix& phi, const std::vector<std::optional<double>>& z,
                         const std::vector<double>& weights) {
    const auto n_groups = static_cast<std::size_t>(phi.values.rows());
    if (z.size() != n_groups || weights.size() != n_groups) {
        fail(ErrorKind::param, "lasso: inputs not aligned with the feature matrix");
    }

    Standardized s;
    for (std::size_t g = 0; g < n_groups; ++g) {
        if (!z[g] || weights[g] <= 0.0) continue;
        if (!std::isfinite(*z[g]) || !std::isfinite(weights[g])) {
            fail(ErrorKind::numeric, "lasso: non-finite estimate or weight");
        }
        s.rows.push_back(g);
    }
    if (s.rows.size() < 2) {
        fail(ErrorKind::estimation, "lasso: need at least 2 groups with defined estimates");
    }

    const auto n = static_cast<Eigen::Index>(s.rows.size());
    const Eigen::Index p = phi.values.cols();
    s.w.resize(n);
    s.z.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        s.w(i) = weights[s.rows[i]];
        s.z(i) = *z[s.rows[i]];
    }
    s.weight_total = s.w.sum();
    s.z_mean = s.w.dot(s.z) / s.weight_total;

    s.x.resize(n, p);
    s.col_mean.resize(p);
    s.col_scale.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            s.x(i, j) = phi.values(static_cast<Eigen::Index>(s.rows[i]), j);
        }
        if (!s.x.col(j).allFinite()) fail(ErrorKind::numeric, "lasso: non-finite feature");
        const double mean = s.w.dot(s.x.col(j)) / s.weight_total;
        s.col_mean(j) = mean;
        s.x.col(j).array() -= mean;
        const double var = s.w.dot(s.x.col(j).cwiseProduct(s.x.col(j))) / s.weight_total;
        const double scale = std::sqrt(std::max(var, 0.0));
        if (scale < 1e-12) {
            s.col_scale(j) = 0.0;
            s.x.col(j).setZero();
        } else {
            s.col_scale(j) = scale;
            s.x.col(j) /= scale;
        }
    }
    return s;
}

struct CdSolution {
    Eigen::VectorXd theta;  // standardized-scale coefficients
    int sweeps = 0;
    double final_max_update = 0.0;
    bool converged = false;
};

double standardized_objective(const Standardized& s, double lambda,
                              const Eigen::VectorXd& theta) {
    const Eigen::VectorXd resid = s.z.array() - s.z_mean - (s.x * theta).array();
    return s.w.dot(resid.cwiseProduct(resid)) + lambda * theta.lpNorm<1>();
}

// Cyclic coordinate descent with soft-thresholding updates. With the
// columns at unit weighted variance every coordinate has curvature
// weight_total, so the update is a single correlation plus a threshold.
CdSolution coordinate_descent(const Standardized& s, double lambda,
                              const LassoOptions& options, const Eigen::VectorXd* warm_start) {
    const Eigen::Index p = s.x.cols();
    CdSolution out;
    out.theta = warm_start ? *warm_start : Eigen::VectorXd::Zero(p);

    Eigen::VectorXd resid = s.z.array() - s.z_mean - (s.x * out.theta).array();
    const double threshold = 0.5 * lambda / s.weight_total;
    // The unpenalized endpoint must interpolate to 1e-8 in fitted values,
    // which needs a tighter update criterion than the penalized default.
    const double tolerance =
        lambda == 0.0 ? std::min(options.tolerance, 1e-10) : options.tolerance;
    double previous_objective = std::numeric_limits<double>::infinity();
    if (options.track_objective) previous_objective = standardized_objective(s, lambda, out.theta);

    for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
        double max_update = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (s.col_scale(j) == 0.0) continue;
            const double rho =
                out.theta(j) + s.x.col(j).cwiseProduct(s.w).dot(resid) / s.weight_total;
            const double updated = soft_threshold(rho, threshold);
            const double delta = updated - out.theta(j);
            if (delta != 0.0) {
                resid -= delta * s.x.col(j);
                out.theta(j) = updated;
                max_update = std::max(max_update, std::fabs(delta));
            }
        }
        out.sweeps = sweep;
        out.final_max_update = max_update;
        if (options.track_objective) {
            const double objective = standardized_objective(s, lambda, out.theta);
            if (objective > previous_objective * (1.0 + 1e-12) + 1e-12) {
                fail(ErrorKind::numeric, "lasso: objective increased during a sweep");
            }
            previous_objective = objective;
        }
        if (max_update < tolerance) {
            out.converged = true;
            break;
        }
    }
    return out;
}

LassoFit assemble_fit(const FeatureMatrix& phi, const Standardized& s,
                      const std::vector<double>& weights, double lambda,
                      const CdSolution& cd) {
    LassoFit fit;
    fit.lambda = lambda;
    fit.weights = weights;
    fit.sweeps = cd.sweeps;
    fit.final_max_update = cd.final_max_update;
    fit.converged = cd.converged;

    const Eigen::Index p = phi.values.cols();
    fit.coefficients.assign(static_cast<std::size_t>(p), 0.0);
    double intercept = s.z_mean;
    for (Eigen::Index j = 0; j < p; ++j) {
        if (s.col_scale(j) == 0.0 || cd.theta(j) == 0.0) continue;
        const double coef = cd.theta(j) / s.col_scale(j);
        fit.coefficients[static_cast<std::size_t>(j)] = coef;
        intercept -= coef * s.col_mean(j);
        fit.active.push_back(static_cast<std::size_t>(j));
    }
    fit.intercept = intercept;

    const auto n_groups = static_cast<std::size_t>(phi.values.rows());
    fit.fitted.resize(n_groups);
    const Eigen::VectorXd coef =
        Eigen::Map<const Eigen::VectorXd>(fit.coefficients.data(), p);
    const Eigen::VectorXd predictions = (phi.values * coef).array() + fit.intercept;
    for (std::size_t g = 0; g < n_groups; ++g) {
        fit.fitted[g] = predictions(static_cast<Eigen::Index>(g));
    }
    fit.objective = standardized_objective(s, lambda, cd.theta);
    return fit;
}

} // namespace

std::vector<double> lasso_weights(const EstimateSet& z, const VarianceModel& variances) {
    if (z.values.size() != variances.pooled_var.size()) {
        fail(ErrorKind::param, "lasso_weights: estimate/variance size mismatch");
    }
    const double floor = 1e-12 * variances.pooled_scale;
    std::vector<double> weights(z.values.size(), 0.0);
    for (std::size_t g = 0; g < z.values.size(); ++g) {
        if (!z.values[g] || !variances.pooled_var[g]) continue;
        if (variances.pooled_scale <= 0.0) {
            weights[g] = 1.0;  // noiseless data: equal weights keep the loss finite
        } else {
            weights[g] = 1.0 / std::max(*variances.pooled_var[g], floor);
        }
    }
    return weights;
}

LassoFit fit_weighted_lasso_raw(const FeatureMatrix& phi,
                                const std::vector<std::optional<double>>& z,
                                const std::vector<double>& weights, double lambda,
                                const LassoOptions& options) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        fail(ErrorKind::param, "lasso: lambda must be finite and >= 0");
    }
    const Standardized s = standardize(phi, z, weights);
    const CdSolution cd = coordinate_descent(s, lambda, options, nullptr);
    return assemble_fit(phi, s, weights, lambda, cd);
}

LassoFit fit_weighted_lasso(const FeatureMatrix& phi, const EstimateSet& z,
                            const VarianceModel& variances, double lambda,
                            const LassoOptions& options) {
    auto fit = fit_weighted_lasso_raw(phi, z.values, lasso_weights(z, variances), lambda,
                                      options);
    fit.sizes = z.sizes;
    return fit;
}

double lasso_objective(const FeatureMatrix& phi, const std::vector<std::optional<double>>& z,
                       const std::vector<double>& weights, double lambda, double intercept,
                       const std::vector<double>& coefficients) {
    const Standardized s = standardize(phi, z, weights);
    if (coefficients.size() != static_cast<std::size_t>(phi.values.cols())) {
        fail(ErrorKind::param, "lasso_objective: coefficient count mismatch");
    }
    double loss = 0.0;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(s.rows.size()); ++i) {
        const std::size_t g = s.rows[static_cast<std::size_t>(i)];
        double prediction = intercept;
        for (Eigen::Index j = 0; j < phi.values.cols(); ++j) {
            prediction += coefficients[static_cast<std::size_t>(j)] *
                          phi.values(static_cast<Eigen::Index>(g), j);
        }
        const double r = prediction - s.z(i);
        loss += s.w(i) * r * r;
    }
    double penalty = 0.0;
    for (Eigen::Index j = 0; j < phi.values.cols(); ++j) {
        penalty += s.col_scale(j) * std::fabs(coefficients[static_cast<std::size_t>(j)]);
    }
    return loss + lambda * penalty;
}

double lasso_lambda_max(const FeatureMatrix& phi, const std::vector<std::optional<double>>& z,
                        const std::vector<double>& weights) {
    const Standardized s = standardize(phi, z, weights);
    const Eigen::VectorXd centered = s.z.array() - s.z_mean;
    double best = 0.0;
    for (Eigen::Index j = 0; j < s.x.cols(); ++j) {
        if (s.col_scale(j) == 0.0) continue;
        best = std::max(best, std::fabs(s.x.col(j).cwiseProduct(s.w).dot(centered)));
    }
    return 2.0 * best;
}

std::vector<double> lambda_grid(double lambda_max, int count, double min_ratio) {
    if (count < 1 || !(min_ratio > 0.0) || !(min_ratio < 1.0)) {
        fail(ErrorKind::param, "lambda_grid: invalid parameters");
    }
    if (!(lambda_max > 0.0)) return {0.0};
    std::vector<double> grid;
    grid.reserve(count);
    if (count == 1) return {lambda_max};
    const double log_max = std::log(lambda_max);
    const double log_min = std::log(lambda_max * min_ratio);
    for (int i = 0; i < count; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(count - 1);
        grid.push_back(std::exp(log_max + t * (log_min - log_max)));
    }
    return grid;
}

EstimateSet sr_estimates(const LassoFit& fit) {
    if (!fit.converged) {
        fail(ErrorKind::estimation, "sr_estimates: lasso fit did not converge");
    }
    EstimateSet out;
    out.method = "sr";
    out.values.reserve(fit.fitted.size());
    for (const double v : fit.fitted) out.values.emplace_back(v);
    out.sizes = fit.sizes;
    if (out.sizes.empty()) out.sizes.assign(fit.fitted.size(), 0);
    return out;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

namespace {

struct FoldSplit {
    std::vector<EvalRecord> train;
    std::vector<EvalRecord> validation;
};

std::vector<FoldSplit> stratified_folds(const GroupedDataset& grouped, int folds,
                                        std::uint64_t seed) {
    std::vector<FoldSplit> out(static_cast<std::size_t>(folds));
    for (std::size_t g = 0; g < grouped.groups.size(); ++g) {
        const auto& group = grouped.groups[g];
        std::vector<std::size_t> order(group.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng = Rng::stream(seed, 0x5f01d5ULL, g);
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.next_index(i)]);
        }
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            const auto fold = pos % static_cast<std::size_t>(folds);
            for (std::size_t f = 0; f < out.size(); ++f) {
                (f == fold ? out[f].validation : out[f].train).push_back(group[order[pos]]);
            }
        }
    }
    return out;
}

} // namespace

CvResult cv_select_lambda(const std::vector<EvalRecord>& records,
                          const AttributeSchema& schema, const MetricConfig& metric,
                          const FeatureSpec& features, std::uint64_t seed,
                          const CvOptions& options) {
    if (options.folds < 2) fail(ErrorKind::param, "cv_select_lambda: need at least 2 folds");

    const GroupedDataset full = stratify(records, schema);
    const EstimateSet z_full = standard_estimates(full, metric);
    const VarianceModel var_full = estimate_variances(full, metric, options.variance_replicates,
                                                      mix_seed(seed, 0xf0ebULL));
    const FeatureMatrix phi_full = build_features(full, features);
    const std::vector<double> w_full = lasso_weights(z_full, var_full);

    CvResult result;
    result.seed = seed;
    result.grid = lambda_grid(lasso_lambda_max(phi_full, z_full.values, w_full),
                              options.grid_size, options.grid_min_ratio);

    const auto folds = stratified_folds(full, options.folds, seed);
    std::vector<std::vector<double>> fold_losses(folds.size());

    parallel_for(folds.size(), [&](std::size_t f) {
        const FoldSplit& split = folds[f];
        const GroupedDataset train = stratify(split.train, schema);
        const GroupedDataset validation = stratify(split.validation, schema);

        const EstimateSet z_train = standard_estimates(train, metric);
        if (z_train.defined_count() < 2) {
            fail(ErrorKind::estimation,
                 "cv_select_lambda: fold " + std::to_string(f) +
                     " leaves fewer than 2 groups with defined training estimates");
        }
        const VarianceModel var_train =
            estimate_variances(train, metric, options.variance_replicates,
                               mix_seed(mix_seed(seed, 0x7a1dULL), f));
        const FeatureMatrix phi_train = build_features(train, features);
        const std::vector<double> w_train = lasso_weights(z_train, var_train);

        const EstimateSet z_val = standard_estimates(validation, metric);
        const auto val_sizes = validation.sizes();

        std::vector<double> losses(result.grid.size(), 0.0);
        Eigen::VectorXd warm;
        const Standardized s = standardize(phi_train, z_train.values, w_train);
        for (std::size_t i = 0; i < result.grid.size(); ++i) {
            const CdSolution cd =
                coordinate_descent(s, result.grid[i], options.lasso, i == 0 ? nullptr : &warm);
            warm = cd.theta;
            const LassoFit fit = assemble_fit(phi_train, s, w_train, result.grid[i], cd);

            double loss = 0.0;
            std::size_t contributing = 0;
            for (std::size_t g = 0; g < z_val.values.size(); ++g) {
                if (!z_val.values[g] || !z_train.values[g]) continue;
                const double w_val =
                    var_train.pooled_scale > 0.0
                        ? static_cast<double>(val_sizes[g]) / var_train.pooled_scale
                        : static_cast<double>(val_sizes[g]);
                const double r = fit.fitted[g] - *z_val.values[g];
                loss += w_val * r * r;
                ++contributing;
            }
            if (contributing == 0) {
                fail(ErrorKind::estimation, "cv_select_lambda: fold " + std::to_string(f) +
                                                " has no group defined on both sides");
            }
            losses[i] = loss / static_cast<double>(contributing);
        }
        fold_losses[f] = std::move(losses);
    });

    result.mean_loss.assign(result.grid.size(), 0.0);
    for (const auto& losses : fold_losses) {
        for (std::size_t i = 0; i < losses.size(); ++i) result.mean_loss[i] += losses[i];
    }
    for (double& loss : result.mean_loss) loss /= static_cast<double>(folds.size());

    // Grid is descending, so ties resolve toward the stronger penalty.
    std::size_t best = 0;
    for (std::size_t i = 1; i < result.mean_loss.size(); ++i) {
        if (result.mean_loss[i] < result.mean_loss[best]) best = i;
    }
    result.selected_lambda = result.grid[best];
    return result;
}

// ---------------------------------------------------------------------------
// Lasso + partial ridge and its residual bootstrap
// ---------------------------------------------------------------------------

namespace {

LprFit fit_lpr_standardized(const FeatureMatrix& phi, const Standardized& s,
                            double lambda_lasso, double lambda_ridge,
                            const LassoOptions& options) {
    const CdSolution stage1 = coordinate_descent(s, lambda_lasso, options, nullptr);

    std::vector<Eigen::Index> free_columns;  // non-pinned columns, model order
    for (Eigen::Index j = 0; j < s.x.cols(); ++j) {
        if (s.col_scale(j) != 0.0) free_columns.push_back(j);
    }

    LprFit fit;
    std::vector<bool> is_active(static_cast<std::size_t>(s.x.cols()), false);
    for (Eigen::Index j : free_columns) {
        if (stage1.theta(j) != 0.0) {
            is_active[static_cast<std::size_t>(j)] = true;
            fit.active.push_back(static_cast<std::size_t>(j));
        }
    }

    // Augmented system: weighted data rows over [1 | x~], then one
    // sqrt(lambda_ridge) row per inactive standardized column.
    const auto n = static_cast<Eigen::Index>(s.rows.size());
    const auto p = static_cast<Eigen::Index>(free_columns.size());
    Eigen::Index penalty_rows = 0;
    for (Eigen::Index idx = 0; idx < p; ++idx) {
        if (!is_active[static_cast<std::size_t>(free_columns[static_cast<std::size_t>(idx)])]) {
            ++penalty_rows;
        }
    }

    Eigen::MatrixXd design = Eigen::MatrixXd::Zero(n + penalty_rows, p + 1);
    Eigen::VectorXd response = Eigen::VectorXd::Zero(n + penalty_rows);
    Eigen::VectorXd row_weights = Eigen::VectorXd::Ones(n + penalty_rows);
    design.block(0, 0, n, 1).setOnes();
    for (Eigen::Index idx = 0; idx < p; ++idx) {
        design.block(0, idx + 1, n, 1) = s.x.col(free_columns[static_cast<std::size_t>(idx)]);
    }
    response.head(n) = s.z;
    row_weights.head(n) = s.w;
    const double ridge_root = std::sqrt(lambda_ridge);
    Eigen::Index row = n;
    for (Eigen::Index idx = 0; idx < p; ++idx) {
        if (is_active[static_cast<std::size_t>(free_columns[static_cast<std::size_t>(idx)])]) {
            continue;
        }
        design(row, idx + 1) = ridge_root;
        ++row;
    }

    const WlsResult solved = weighted_least_squares(design, response, row_weights);

    fit.coefficients.assign(static_cast<std::size_t>(s.x.cols()), 0.0);
    double intercept = solved.solution(0);
    for (Eigen::Index idx = 0; idx < p; ++idx) {
        const Eigen::Index j = free_columns[static_cast<std::size_t>(idx)];
        const double coef = solved.solution(idx + 1) / s.col_scale(j);
        fit.coefficients[static_cast<std::size_t>(j)] = coef;
        intercept -= coef * s.col_mean(j);
    }
    fit.intercept = intercept;

    const auto n_groups = static_cast<std::size_t>(phi.values.rows());
    fit.fitted.resize(n_groups);
    const Eigen::VectorXd coef =
        Eigen::Map<const Eigen::VectorXd>(fit.coefficients.data(), phi.values.cols());
    const Eigen::VectorXd predictions = (phi.values * coef).array() + fit.intercept;
    for (std::size_t g = 0; g < n_groups; ++g) {
        fit.fitted[g] = predictions(static_cast<Eigen::Index>(g));
    }
    return fit;
}

} // namespace

LprFit fit_lpr(const FeatureMatrix& phi, const std::vector<std::optional<double>>& z,
               const std::vector<double>& weights, double lambda_lasso, double lambda_ridge,
               const LassoOptions& options) {
    if (!(lambda_ridge >= 0.0)) fail(ErrorKind::param, "fit_lpr: lambda_ridge must be >= 0");
    const Standardized s = standardize(phi, z, weights);
    return fit_lpr_standardized(phi, s, lambda_lasso, lambda_ridge, options);
}

IntervalSet rblpr_ci(const FeatureMatrix& phi, const EstimateSet& z,
                     const VarianceModel& variances, double lambda_lasso,
                     double lambda_ridge, int replicates, double alpha, std::uint64_t seed,
                     const LassoOptions& options) {
    if (replicates < 100) fail(ErrorKind::param, "rblpr_ci: need at least 100 replicates");
    if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::param, "rblpr_ci: alpha in (0, 1)");

    const std::vector<double> weights = lasso_weights(z, variances);
    const Standardized s = standardize(phi, z.values, weights);
    if (s.rows.size() < 3) {
        fail(ErrorKind::inference, "rblpr_ci: need at least 3 groups with defined estimates");
    }
    const LprFit base = fit_lpr_standardized(phi, s, lambda_lasso, lambda_ridge, options);

    // Standardized residuals over the loss groups, recentered.
    std::vector<double> pool;
    pool.reserve(s.rows.size());
    for (const std::size_t g : s.rows) {
        pool.push_back((*z.values[g] - base.fitted[g]) * std::sqrt(weights[g]));
    }
    double mean = 0.0;
    for (const double e : pool) mean += e;
    mean /= static_cast<double>(pool.size());
    for (double& e : pool) e -= mean;

    const auto n_groups = static_cast<std::size_t>(phi.values.rows());
    std::vector<std::vector<double>> replicate_fits(static_cast<std::size_t>(replicates));

    parallel_for(static_cast<std::size_t>(replicates), [&](std::size_t b) {
        Rng rng = Rng::stream(seed, 0xb1b0ULL, b);
        std::vector<std::optional<double>> z_star(n_groups);
        for (const std::size_t g : s.rows) {
            const double e = pool[rng.next_index(pool.size())];
            z_star[g] = base.fitted[g] + e / std::sqrt(weights[g]);
        }
        const Standardized s_star = standardize(phi, z_star, weights);
        const LprFit refit =
            fit_lpr_standardized(phi, s_star, lambda_lasso, lambda_ridge, options);
        replicate_fits[b] = refit.fitted;
    });

    IntervalSet out;
    out.method = "rblpr";
    out.level = 1.0 - alpha;
    out.intervals.resize(n_groups);
    std::vector<double> column(static_cast<std::size_t>(replicates));
    for (std::size_t g = 0; g < n_groups; ++g) {
        for (std::size_t b = 0; b < replicate_fits.size(); ++b) column[b] = replicate_fits[b][g];
        out.intervals[g] = Interval{empirical_quantile(column, 0.5 * alpha),
                                    empirical_quantile(column, 1.0 - 0.5 * alpha)};
    }
    return out;
}

} // namespace disagg
