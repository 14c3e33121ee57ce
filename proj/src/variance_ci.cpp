#include "disagg/variance_ci.hpp"

#include "disagg/error.hpp"
#include "disagg/numerics.hpp"
#include "disagg/parallel.hpp"
#include "disagg/rng.hpp"

#include <algorithm>
#include <cmath>

namespace disagg {

namespace {

// Metric values over B resamples of the group; undefined resamples dropped.
std::vector<double> resample_metric_values(std::span<const EvalRecord> group,
                                           const MetricConfig& metric, int replicates,
                                           std::uint64_t seed, std::uint64_t group_index) {
    const std::size_t n = group.size();
    std::vector<double> values;
    values.reserve(replicates);
    std::vector<EvalRecord> resample(n);
    for (int b = 0; b < replicates; ++b) {
        Rng rng = Rng::stream(seed, group_index, static_cast<std::uint64_t>(b));
        for (std::size_t i = 0; i < n; ++i) resample[i] = group[rng.next_index(n)];
        if (const auto v = standard_estimate(resample, metric)) values.push_back(*v);
    }
    return values;
}

double sample_variance(std::span<const double> values) {
    const auto n = static_cast<double>(values.size());
    double mean = 0.0;
    for (const double v : values) mean += v;
    mean /= n;
    double ss = 0.0;
    for (const double v : values) ss += (v - mean) * (v - mean);
    return ss / (n - 1.0);
}

} // namespace

std::optional<double> bootstrap_group_variance(std::span<const EvalRecord> group,
                                               const MetricConfig& metric, int replicates,
                                               std::uint64_t seed, std::uint64_t group_index) {
    if (replicates < 2) {
        fail(ErrorKind::param, "bootstrap_group_variance: need at least 2 replicates");
    }
    if (group.empty()) return std::nullopt;
    const auto values = resample_metric_values(group, metric, replicates, seed, group_index);
    if (values.size() < 2) return std::nullopt;
    return sample_variance(values);
}

std::vector<std::optional<double>> bootstrap_variances(const GroupedDataset& grouped,
                                                       const MetricConfig& metric,
                                                       int replicates, std::uint64_t seed) {
    std::vector<std::optional<double>> out(grouped.groups.size());
    parallel_for(grouped.groups.size(), [&](std::size_t g) {
        out[g] = bootstrap_group_variance(grouped.groups[g], metric, replicates, seed,
                                          static_cast<std::uint64_t>(g));
    });
    return out;
}

VarianceModel pooled_variance(const std::vector<std::optional<double>>& boot_variances,
                              const std::vector<std::size_t>& sizes) {
    if (boot_variances.size() != sizes.size()) {
        fail(ErrorKind::param, "pooled_variance: size mismatch");
    }
    double weighted_sum = 0.0;
    double weight_total = 0.0;
    for (std::size_t g = 0; g < sizes.size(); ++g) {
        if (!boot_variances[g]) continue;
        const auto n = static_cast<double>(sizes[g]);
        weighted_sum += n * (n * *boot_variances[g]);
        weight_total += n;
    }
    if (weight_total == 0.0) {
        fail(ErrorKind::estimation, "pooled_variance: no group has a defined bootstrap variance");
    }

    VarianceModel out;
    out.boot_var = boot_variances;
    out.sizes = sizes;
    out.pooled_scale = weighted_sum / weight_total;
    out.pooled_var.resize(sizes.size());
    for (std::size_t g = 0; g < sizes.size(); ++g) {
        if (sizes[g] >= 1) {
            out.pooled_var[g] = out.pooled_scale / static_cast<double>(sizes[g]);
        }
    }
    return out;
}

VarianceModel estimate_variances(const GroupedDataset& grouped, const MetricConfig& metric,
                                 int replicates, std::uint64_t seed) {
    auto model = pooled_variance(bootstrap_variances(grouped, metric, replicates, seed),
                                 grouped.sizes());
    model.replicates = replicates;
    model.seed = seed;
    return model;
}

Interval normal_interval(double center, double sd, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
        fail(ErrorKind::param, "normal_interval: alpha must lie in (0, 1]");
    }
    if (sd < 0.0) fail(ErrorKind::param, "normal_interval: negative sd");
    if (alpha >= 1.0) return {center, center};
    const double q = normal_quantile(1.0 - 0.5 * alpha);
    return {center - q * sd, center + q * sd};
}

namespace {

IntervalSet normal_cis(const EstimateSet& estimates,
                       const std::vector<std::optional<double>>& variance, double alpha,
                       const std::string& method) {
    IntervalSet out;
    out.method = method;
    out.level = 1.0 - alpha;
    out.intervals.resize(estimates.values.size());
    for (std::size_t g = 0; g < estimates.values.size(); ++g) {
        if (!estimates.values[g] || !variance[g]) continue;
        out.intervals[g] =
            normal_interval(*estimates.values[g], std::sqrt(*variance[g]), alpha);
    }
    return out;
}

} // namespace

IntervalSet pooled_normal_cis(const EstimateSet& estimates, const VarianceModel& variances,
                              double alpha) {
    return normal_cis(estimates, variances.pooled_var, alpha, "pooled_normal");
}

IntervalSet naive_normal_cis(const EstimateSet& estimates, const VarianceModel& variances,
                             double alpha) {
    return normal_cis(estimates, variances.boot_var, alpha, "naive_normal");
}

double empirical_quantile(std::vector<double> values, double p) {
    if (values.empty()) fail(ErrorKind::param, "empirical_quantile: empty sample");
    std::sort(values.begin(), values.end());
    if (p <= 0.0) return values.front();
    if (p >= 1.0) return values.back();
    const auto n = static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil(p * n));
    if (rank == 0) rank = 1;
    return values[rank - 1];
}

Interval bootstrap_percentile_ci(std::span<const EvalRecord> group, const MetricConfig& metric,
                                 int replicates, double alpha, std::uint64_t seed,
                                 std::uint64_t group_index) {
    if (group.empty()) {
        fail(ErrorKind::estimation, "bootstrap_percentile_ci: empty group");
    }
    auto values = resample_metric_values(group, metric, replicates, seed, group_index);
    if (values.size() < 2) {
        fail(ErrorKind::estimation,
             "bootstrap_percentile_ci: fewer than 2 defined resamples");
    }
    return {empirical_quantile(values, 0.5 * alpha),
            empirical_quantile(std::move(values), 1.0 - 0.5 * alpha)};
}

IntervalSet bootstrap_percentile_cis(const GroupedDataset& grouped, const MetricConfig& metric,
                                     int replicates, double alpha, std::uint64_t seed) {
    IntervalSet out;
    out.method = "percentile";
    out.level = 1.0 - alpha;
    out.intervals.resize(grouped.groups.size());
    parallel_for(grouped.groups.size(), [&](std::size_t g) {
        if (grouped.groups[g].empty()) return;
        auto values = resample_metric_values(grouped.groups[g], metric, replicates, seed,
                                             static_cast<std::uint64_t>(g));
        if (values.size() < 2) return;  // reported as insufficient data
        out.intervals[g] = Interval{empirical_quantile(values, 0.5 * alpha),
                                    empirical_quantile(std::move(values), 1.0 - 0.5 * alpha)};
    });
    return out;
}

} // namespace disagg
