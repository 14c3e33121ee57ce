#pragma once

// Variance estimation for the standard per-group estimates and the three
// confidence-interval constructions built on them: normal intervals with
// pooled variance, normal intervals with per-group bootstrap variance,
// and per-group bootstrap percentiles.

#include "disagg/core_data.hpp"
#include "disagg/metrics.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace disagg {

inline constexpr int kDefaultVarianceBootstrap = 1000;
inline constexpr int kDefaultPercentileBootstrap = 2000;

struct VarianceModel {
    // Per-group bootstrap variance of the metric; absent when fewer than
    // two resamples produced a defined value.
    std::vector<std::optional<double>> boot_var;
    std::vector<std::size_t> sizes;
    double pooled_scale = 0.0;  // shared per-record scale
    // pooled_scale / n_a for non-empty groups, absent for empty ones.
    std::vector<std::optional<double>> pooled_var;
    int replicates = 0;
    std::uint64_t seed = 0;

    std::optional<double> pooled_sd(std::size_t group) const {
        if (!pooled_var[group]) return std::nullopt;
        return std::sqrt(*pooled_var[group]);
    }
};

// Sample variance of the metric over B size-n_a resamples drawn with
// replacement; resamples where the metric is undefined are dropped.
std::optional<double> bootstrap_group_variance(std::span<const EvalRecord> group,
                                               const MetricConfig& metric, int replicates,
                                               std::uint64_t seed, std::uint64_t group_index);

// Bootstrap variances for every group (parallel over groups; replicate
// streams are keyed by (seed, group, replicate) so results do not depend
// on scheduling).
std::vector<std::optional<double>> bootstrap_variances(const GroupedDataset& grouped,
                                                       const MetricConfig& metric,
                                                       int replicates, std::uint64_t seed);

// Shared scale from the size-weighted average of per-record variances,
// then per-group variances scale / n_a.
VarianceModel pooled_variance(const std::vector<std::optional<double>>& boot_variances,
                              const std::vector<std::size_t>& sizes);

VarianceModel estimate_variances(const GroupedDataset& grouped, const MetricConfig& metric,
                                 int replicates, std::uint64_t seed);

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
    double width() const { return upper - lower; }
    bool contains(double x) const { return lower <= x && x <= upper; }
};

struct IntervalSet {
    std::vector<std::optional<Interval>> intervals;  // per group
    double level = 0.0;                              // confidence level, e.g. 0.95
    std::string method;  // pooled_normal | naive_normal | percentile | rblpr
};

// [z + q_{a/2} s, z + q_{1-a/2} s]; alpha = 1 - level.
Interval normal_interval(double center, double sd, double alpha);

IntervalSet pooled_normal_cis(const EstimateSet& estimates, const VarianceModel& variances,
                              double alpha);
IntervalSet naive_normal_cis(const EstimateSet& estimates, const VarianceModel& variances,
                             double alpha);

// Empirical alpha/2 and 1-alpha/2 quantiles of defined resample values.
// Fewer than two defined resamples raises an estimation error.
Interval bootstrap_percentile_ci(std::span<const EvalRecord> group, const MetricConfig& metric,
                                 int replicates, double alpha, std::uint64_t seed,
                                 std::uint64_t group_index);

IntervalSet bootstrap_percentile_cis(const GroupedDataset& grouped, const MetricConfig& metric,
                                     int replicates, double alpha, std::uint64_t seed);

// Lower empirical quantile (order statistic) of a sample; p in [0, 1].
double empirical_quantile(std::vector<double> values, double p);

} // namespace disagg
