#include "disagg/metrics.hpp"

#include "disagg/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace disagg {

MetricKind metric_kind_from_name(const std::string& name) {
    if (name == "sel") return MetricKind::sel;
    if (name == "acc") return MetricKind::acc;
    if (name == "fnr") return MetricKind::fnr;
    if (name == "fpr") return MetricKind::fpr;
    if (name == "ppv") return MetricKind::ppv;
    if (name == "auc") return MetricKind::auc;
    if (name == "mean") return MetricKind::mean_value;
    if (name == "wer") return MetricKind::wer;
    fail(ErrorKind::config, "unknown metric name: " + name);
}

const char* metric_name(MetricKind kind) {
    switch (kind) {
        case MetricKind::sel: return "sel";
        case MetricKind::acc: return "acc";
        case MetricKind::fnr: return "fnr";
        case MetricKind::fpr: return "fpr";
        case MetricKind::ppv: return "ppv";
        case MetricKind::auc: return "auc";
        case MetricKind::mean_value: return "mean";
        case MetricKind::wer: return "wer";
    }
    return "?";
}

namespace {

bool is_confusion_metric(MetricKind kind) {
    switch (kind) {
        case MetricKind::sel:
        case MetricKind::acc:
        case MetricKind::fnr:
        case MetricKind::fpr:
        case MetricKind::ppv:
            return true;
        default:
            return false;
    }
}

double require_prediction(const EvalRecord& rec, MetricKind kind) {
    if (!rec.prediction) {
        fail(ErrorKind::data, std::string("metric '") + metric_name(kind) +
                                  "' requires a prediction on every record");
    }
    return *rec.prediction;
}

double require_outcome(const EvalRecord& rec, MetricKind kind) {
    if (!rec.outcome) {
        fail(ErrorKind::data, std::string("metric '") + metric_name(kind) +
                                  "' requires an outcome on every record");
    }
    return *rec.outcome;
}

std::optional<double> ratio(std::size_t numerator, std::size_t denominator) {
    if (denominator == 0) return std::nullopt;
    return static_cast<double>(numerator) / static_cast<double>(denominator);
}

} // namespace

void MetricConfig::validate() const {
    if (is_confusion_metric(kind) != threshold.has_value()) {
        fail(ErrorKind::config,
             threshold ? std::string("metric '") + metric_name(kind) + "' takes no threshold"
                       : std::string("metric '") + metric_name(kind) + "' requires a threshold");
    }
}

std::optional<double> mean_value(std::span<const EvalRecord> group,
                                 const MetricConfig& metric) {
    if (group.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& rec : group) {
        const std::optional<double>& v =
            metric.mean_from_record_value ? rec.record_value : rec.prediction;
        if (!v) {
            fail(ErrorKind::data, metric.mean_from_record_value
                                      ? "mean metric requires record_value on every record"
                                      : "mean metric requires a prediction on every record");
        }
        sum += *v;
    }
    return sum / static_cast<double>(group.size());
}

std::optional<double> auc(std::span<const EvalRecord> group, const MetricConfig& metric) {
    std::vector<double> negatives;
    std::vector<double> positives;
    for (const auto& rec : group) {
        const double score = require_prediction(rec, MetricKind::auc);
        const double y = require_outcome(rec, MetricKind::auc);
        if (y == metric.positive_label) positives.push_back(score);
        else negatives.push_back(score);
    }
    if (negatives.empty() || positives.empty()) return std::nullopt;

    std::sort(negatives.begin(), negatives.end());
    double events = 0.0;
    for (const double pos : positives) {
        const auto strictly_below =
            std::lower_bound(negatives.begin(), negatives.end(), pos) - negatives.begin();
        events += static_cast<double>(strictly_below);
        if (metric.auc_half_tie_credit) {
            const auto up =
                std::upper_bound(negatives.begin(), negatives.end(), pos) - negatives.begin();
            events += 0.5 * static_cast<double>(up - strictly_below);
        }
    }
    return events / (static_cast<double>(negatives.size()) *
                     static_cast<double>(positives.size()));
}

std::optional<double> standard_estimate(std::span<const EvalRecord> group,
                                        const MetricConfig& metric) {
    metric.validate();
    if (group.empty()) return std::nullopt;

    switch (metric.kind) {
        case MetricKind::mean_value:
        case MetricKind::wer:
            // Group-level WER is the mean of per-record (snippet) values.
            return mean_value(group, metric);
        case MetricKind::auc:
            return auc(group, metric);
        default:
            break;
    }

    const double r = *metric.threshold;
    std::size_t selected = 0, correct = 0;
    std::size_t positives = 0, negatives = 0;
    std::size_t false_negatives = 0, false_positives = 0, true_positives = 0;
    for (const auto& rec : group) {
        const bool referred = require_prediction(rec, metric.kind) >= r;
        if (metric.kind == MetricKind::sel) {
            selected += referred;
            continue;
        }
        const bool positive = require_outcome(rec, metric.kind) == metric.positive_label;
        positives += positive;
        negatives += !positive;
        selected += referred;
        correct += (referred == positive);
        false_negatives += (positive && !referred);
        false_positives += (!positive && referred);
        true_positives += (positive && referred);
    }

    switch (metric.kind) {
        case MetricKind::sel: return ratio(selected, group.size());
        case MetricKind::acc: return ratio(correct, group.size());
        case MetricKind::fnr: return ratio(false_negatives, positives);
        case MetricKind::fpr: return ratio(false_positives, negatives);
        case MetricKind::ppv: return ratio(true_positives, selected);
        default: break;
    }
    fail(ErrorKind::param, "unhandled metric kind");
}

namespace {

std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    for (const char c : text) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            if (!current.empty()) { tokens.push_back(current); current.clear(); }
        } else {
            current += c;
        }
    }
    if (!current.empty()) tokens.push_back(current);
    return tokens;
}

} // namespace

double wer(std::span<const std::string> hypothesis, std::span<const std::string> reference) {
    if (reference.empty()) {
        fail(ErrorKind::data, "wer: reference transcript is empty");
    }
    const std::size_t h = hypothesis.size();
    const std::size_t n = reference.size();
    // Standard edit-distance recurrence, one rolling row.
    std::vector<std::size_t> prev(n + 1), curr(n + 1);
    for (std::size_t j = 0; j <= n; ++j) prev[j] = j;
    for (std::size_t i = 1; i <= h; ++i) {
        curr[0] = i;
        for (std::size_t j = 1; j <= n; ++j) {
            const std::size_t subst =
                prev[j - 1] + (hypothesis[i - 1] == reference[j - 1] ? 0 : 1);
            curr[j] = std::min({subst, prev[j] + 1, curr[j - 1] + 1});
        }
        std::swap(prev, curr);
    }
    return static_cast<double>(prev[n]) / static_cast<double>(n);
}

double wer(const std::string& hypothesis, const std::string& reference) {
    const auto hyp = whitespace_tokens(hypothesis);
    const auto ref = whitespace_tokens(reference);
    return wer(std::span<const std::string>(hyp), std::span<const std::string>(ref));
}

double calibrate_threshold(std::span<const EvalRecord> records, double selection_fraction) {
    if (!(selection_fraction > 0.0) || !(selection_fraction <= 1.0)) {
        fail(ErrorKind::param, "calibrate_threshold: selection fraction must be in (0, 1]");
    }
    std::vector<double> scores;
    scores.reserve(records.size());
    for (const auto& rec : records) {
        scores.push_back(require_prediction(rec, MetricKind::sel));
    }
    if (scores.empty()) fail(ErrorKind::data, "calibrate_threshold: no records");
    std::sort(scores.begin(), scores.end());

    const std::size_t n = scores.size();
    const auto target = static_cast<std::size_t>(
        std::floor(selection_fraction * static_cast<double>(n) + 1e-12));
    const double above_max =
        std::nextafter(scores.back(), std::numeric_limits<double>::infinity());
    if (target == 0) return above_max;
    if (target >= n) return scores.front();

    // r = scores[n - target] selects exactly `target` records unless a tie
    // block straddles the cut; ties break toward selecting fewer.
    const double candidate = scores[n - target];
    const auto first_at = static_cast<std::size_t>(
        std::lower_bound(scores.begin(), scores.end(), candidate) - scores.begin());
    if (n - first_at > target) {
        const auto above = static_cast<std::size_t>(
            std::upper_bound(scores.begin(), scores.end(), candidate) - scores.begin());
        return above >= n ? above_max : scores[above];
    }
    return candidate;
}

EstimateSet standard_estimates(const GroupedDataset& grouped, const MetricConfig& metric) {
    EstimateSet out;
    out.method = "standard";
    out.values.reserve(grouped.groups.size());
    out.sizes.reserve(grouped.groups.size());
    for (const auto& group : grouped.groups) {
        out.values.push_back(standard_estimate(group, metric));
        out.sizes.push_back(group.size());
    }
    return out;
}

} // namespace disagg
