#pragma once

// Performance metrics as functions from a record set to an optional real
// value. A metric is absent exactly when its conditioning event has no
// records (e.g. FNR on a group without positives) or the group is empty.

#include "disagg/core_data.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace disagg {

enum class MetricKind { sel, acc, fnr, fpr, ppv, auc, mean_value, wer };

MetricKind metric_kind_from_name(const std::string& name);
const char* metric_name(MetricKind kind);

struct MetricConfig {
    MetricKind kind = MetricKind::mean_value;
    // Decision threshold r: referral iff score >= r (closed at r).
    // Required for sel/acc/fnr/fpr/ppv, rejected otherwise.
    std::optional<double> threshold;
    double positive_label = 1.0;
    // Tie handling for AUC: strict inequality by default, half credit
    // for tied scores when enabled.
    bool auc_half_tie_credit = false;
    // mean_value reads record_value by default, prediction when false.
    bool mean_from_record_value = true;

    void validate() const;
};

// Empirical metric value on the group, absent when undefined.
std::optional<double> standard_estimate(std::span<const EvalRecord> group,
                                        const MetricConfig& metric);

// Fraction of (negative, positive) pairs with strictly smaller negative
// score; absent when either class is empty.
std::optional<double> auc(std::span<const EvalRecord> group, const MetricConfig& metric);

std::optional<double> mean_value(std::span<const EvalRecord> group,
                                 const MetricConfig& metric);

// Word error rate: minimal word-level edit distance (unit costs) divided
// by the reference length. Empty reference raises a data error.
double wer(std::span<const std::string> hypothesis, std::span<const std::string> reference);
double wer(const std::string& hypothesis, const std::string& reference);  // whitespace tokens

// Empirical (1-q)-quantile threshold so that the population selection
// fraction is ~q; ties break toward selecting fewer.
double calibrate_threshold(std::span<const EvalRecord> records, double selection_fraction);

// Per-group estimates for one metric, aligned with the schema group order.
struct EstimateSet {
    std::vector<std::optional<double>> values;
    std::vector<std::size_t> sizes;
    std::string method;  // standard | sr | js | eb | truth

    std::size_t defined_count() const {
        std::size_t n = 0;
        for (const auto& v : values) n += v.has_value();
        return n;
    }
};

EstimateSet standard_estimates(const GroupedDataset& grouped, const MetricConfig& metric);

} // namespace disagg
