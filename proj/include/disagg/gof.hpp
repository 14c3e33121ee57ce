#pragma once

// Nested weighted unregularized linear models on group-level estimates,
// compared with F-tests. Group-identity indicators are excluded from GOF
// models (they interpolate the estimates and leave zero residual), and
// degrees of freedom use the numerical rank rather than column counts
// because feature columns may be linearly dependent.

#include "disagg/feature_builder.hpp"
#include "disagg/metrics.hpp"
#include "disagg/variance_ci.hpp"

#include <optional>
#include <string>
#include <vector>

namespace disagg {

struct GofModelSpec {
    std::string name;
    // Feature-column names; a trailing '*' expands by prefix. The empty
    // list is the intercept-only model.
    std::vector<std::string> columns;
};

struct WlsFit {
    std::vector<double> coefficients;  // intercept first, then selected columns
    double rss = 0.0;                  // weighted residual sum of squares
    int rank = 0;                      // numerical rank including the intercept
};

// Minimizes sum_a w_a (t0 + t . phi_a - Z_a)^2 over groups with defined
// Z; rank-deficient systems get the minimum-norm solution.
WlsFit fit_weighted_ols(const FeatureMatrix& phi, const std::vector<std::string>& columns,
                        const std::vector<std::optional<double>>& z,
                        const std::vector<double>& weights);

struct GofResult {
    std::string comparison;  // "M1 vs M0"
    double rss0 = 0.0;
    double rss1 = 0.0;
    int rank0 = 0;
    int rank1 = 0;
    std::size_t n_groups = 0;  // groups with defined Z
    double f_stat = 0.0;
    double p_value = 1.0;
    bool significant = false;  // p below 0.05
};

inline constexpr double kGofSignificance = 0.05;

// F = ((RSS0 - RSS1) / (rank1 - rank0)) / (RSS1 / (N - rank1)). M0 must be
// nested in M1 by column set; comparisons that add no rank are rejected.
GofResult f_test(const GofModelSpec& m0, const GofModelSpec& m1, const FeatureMatrix& phi,
                 const std::vector<std::optional<double>>& z,
                 const std::vector<double>& weights);

// Ordered comparisons sharing one set of weights.
std::vector<GofResult> gof_ladder(
    const std::vector<std::pair<GofModelSpec, GofModelSpec>>& comparisons,
    const FeatureMatrix& phi, const std::vector<std::optional<double>>& z,
    const std::vector<double>& weights);

// Weights for GOF fits: inverse pooled variances from the full dataset
// (degenerate variances floored exactly as in the lasso).
std::vector<double> gof_weights(const EstimateSet& z, const VarianceModel& variances);

} // namespace disagg
