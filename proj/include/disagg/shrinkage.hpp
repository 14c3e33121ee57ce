#pragma once

// James-Stein (Bock's unequal-variance variant) and empirical-Bayes
// shrinkage of the standard per-group estimates toward a weighted center.
// Both operate on groups with defined estimates; sums and group counts
// below run over those groups only.

#include "disagg/metrics.hpp"
#include "disagg/variance_ci.hpp"

#include <optional>
#include <vector>

namespace disagg {

struct JsOptions {
    // Multiplier on the pooled scale in the shrink factor: the number of
    // groups by default, with the groups-minus-3 variant available.
    bool numerator_minus_3 = false;
};

// mu_js_a = mu0 + (1 - c * scale / sum_a' n_a' (Z_a' - mu0)^2)_+ (Z_a - mu0)
// with mu0 the size-weighted mean of the estimates. A zero spread resolves
// to full shrinkage (every deviation is zero, so the output is mu0 either
// way); a zero pooled scale leaves the estimates untouched.
EstimateSet james_stein(const EstimateSet& z, const VarianceModel& variances,
                        const JsOptions& options = {});

struct EbFit {
    double tau2 = 0.0;      // between-group variance estimate, clipped at 0
    double mu = 0.0;        // precision-weighted center
    EstimateSet means;      // posterior means, method "eb"
    // Posterior variances tau2 * sigma_a^2 / (tau2 + sigma_a^2); the
    // matching credible intervals are not calibration-guaranteed.
    std::vector<std::optional<double>> posterior_var;
};

EbFit empirical_bayes(const EstimateSet& z, const VarianceModel& variances);

} // namespace disagg
