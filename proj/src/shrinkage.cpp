#include "disagg/shrinkage.hpp"

#include "disagg/error.hpp"

#include <algorithm>
#include <cmath>

namespace disagg {

namespace {

struct DefinedGroups {
    std::vector<std::size_t> indices;
    double n_total = 0.0;
    double size_weighted_mean = 0.0;  // mu0
    double size_weighted_spread = 0.0;  // sum n_a (Z_a - mu0)^2
};

DefinedGroups collect_defined(const EstimateSet& z, const VarianceModel& variances) {
    if (z.values.size() != variances.pooled_var.size() || z.values.size() != z.sizes.size()) {
        fail(ErrorKind::param, "shrinkage: estimate/variance size mismatch");
    }
    DefinedGroups out;
    double weighted_sum = 0.0;
    for (std::size_t g = 0; g < z.values.size(); ++g) {
        if (!z.values[g]) continue;
        if (!variances.pooled_var[g]) {
            fail(ErrorKind::param, "shrinkage: defined estimate without a pooled variance");
        }
        out.indices.push_back(g);
        out.n_total += static_cast<double>(z.sizes[g]);
        weighted_sum += static_cast<double>(z.sizes[g]) * *z.values[g];
    }
    if (out.indices.size() < 2) {
        fail(ErrorKind::estimation, "shrinkage: need at least 2 groups with defined estimates");
    }
    out.size_weighted_mean = weighted_sum / out.n_total;
    for (const std::size_t g : out.indices) {
        const double dev = *z.values[g] - out.size_weighted_mean;
        out.size_weighted_spread += static_cast<double>(z.sizes[g]) * dev * dev;
    }
    return out;
}

} // namespace

EstimateSet james_stein(const EstimateSet& z, const VarianceModel& variances,
                        const JsOptions& options) {
    const DefinedGroups defined = collect_defined(z, variances);
    const double group_count = static_cast<double>(defined.indices.size());
    const double c = options.numerator_minus_3 ? group_count - 3.0 : group_count;

    double factor;
    if (defined.size_weighted_spread <= 0.0) {
        factor = 0.0;  // zero spread: deviations are all zero, shrink fully
    } else {
        factor = 1.0 - c * variances.pooled_scale / defined.size_weighted_spread;
        if (factor < 0.0) factor = 0.0;
    }

    EstimateSet out;
    out.method = "js";
    out.sizes = z.sizes;
    out.values.resize(z.values.size());
    for (const std::size_t g : defined.indices) {
        out.values[g] =
            defined.size_weighted_mean + factor * (*z.values[g] - defined.size_weighted_mean);
    }
    return out;
}

EbFit empirical_bayes(const EstimateSet& z, const VarianceModel& variances) {
    const DefinedGroups defined = collect_defined(z, variances);

    // Weighted-moment estimate of the between-group variance:
    // tau2 = (sum w_a (Z_a - mu0)^2 - sum w_a (1 - w_a) sigma_a^2)
    //        / (1 - sum w_a^2),   w_a = n_a / n, clipped at zero.
    double moment = 0.0;
    double noise = 0.0;
    double w_squared = 0.0;
    for (const std::size_t g : defined.indices) {
        const double w = static_cast<double>(z.sizes[g]) / defined.n_total;
        const double dev = *z.values[g] - defined.size_weighted_mean;
        moment += w * dev * dev;
        noise += w * (1.0 - w) * *variances.pooled_var[g];
        w_squared += w * w;
    }
    const double denominator = 1.0 - w_squared;
    if (denominator <= 0.0) {
        fail(ErrorKind::estimation, "empirical_bayes: degenerate size distribution");
    }

    EbFit fit;
    fit.tau2 = std::max(0.0, (moment - noise) / denominator);

    // Floor keeps the precision weights finite when a variance is exactly
    // zero; such a group dominates mu and keeps its own estimate.
    constexpr double kVarianceFloor = 1e-300;

    double mu_numerator = 0.0;
    double mu_denominator = 0.0;
    for (const std::size_t g : defined.indices) {
        const double sigma2 = std::max(*variances.pooled_var[g], kVarianceFloor);
        const double precision = 1.0 / (fit.tau2 + sigma2);
        mu_numerator += *z.values[g] * precision;
        mu_denominator += precision;
    }
    fit.mu = mu_numerator / mu_denominator;

    fit.means.method = "eb";
    fit.means.sizes = z.sizes;
    fit.means.values.resize(z.values.size());
    fit.posterior_var.resize(z.values.size());
    for (const std::size_t g : defined.indices) {
        const double sigma2 = std::max(*variances.pooled_var[g], kVarianceFloor);
        const double shrink = fit.tau2 / (fit.tau2 + sigma2);
        fit.means.values[g] = fit.mu + shrink * (*z.values[g] - fit.mu);
        fit.posterior_var[g] = shrink * sigma2;
    }
    return fit;
}

} // namespace disagg
