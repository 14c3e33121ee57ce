#pragma once

// JSON run configuration shared by every CLI subcommand.

#include "disagg/core_data.hpp"
#include "disagg/feature_builder.hpp"
#include "disagg/gof.hpp"
#include "disagg/metrics.hpp"
#include "disagg/synthetic.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace disagg {

struct MetricSpec {
    std::string name;
    std::optional<double> threshold;
    // Alternative to a fixed threshold: the empirical (1-q) score quantile.
    std::optional<double> calibrate_fraction;
    double positive_label = 1.0;
    bool auc_half_tie_credit = false;
};

struct ColumnsConfig {
    std::optional<std::string> outcome;
    std::optional<std::string> prediction;
    std::optional<std::string> record_value;
    std::vector<std::string> covariates;
};

struct GofConfig {
    std::vector<GofModelSpec> models;
    std::vector<std::pair<std::string, std::string>> ladder;  // (m0, m1) by name
};

struct SynthConfig {
    std::string model = "model_age";
    std::size_t size = 1000000;
    std::vector<double> group_shares;
    std::vector<double> diagnoses_mean_by_age;
    std::optional<SynthModelSpec> custom;

    SynthModelSpec resolve() const {
        return custom ? *custom : builtin_synth_model(model);
    }
};

struct BenchmarkFileConfig {
    std::optional<std::string> input;  // population CSV; otherwise synthesized
    SynthConfig synth;
    int draws = 20;
    std::size_t sample_size = 5000;
    std::size_t small_group_max = 25;
};

struct Hyperparameters {
    int variance_bootstrap = kDefaultVarianceBootstrap;
    int percentile_bootstrap = kDefaultPercentileBootstrap;
    int rblpr_bootstrap = kDefaultRblprBootstrap;
    int cv_folds = 10;
    int lambda_grid_size = 50;
    double lambda_grid_min_ratio = 1e-4;
    double lambda_ridge = kDefaultLambdaRidge;
    double lasso_tolerance = 1e-7;
    int lasso_max_sweeps = 100000;
    std::optional<double> fixed_lambda;
};

struct RunConfig {
    std::string input;
    std::vector<Attribute> schema_attributes;
    ColumnsConfig columns;
    std::optional<std::string> aggregate_units;  // unit-id covariate
    std::vector<MetricSpec> metrics;
    std::vector<std::string> estimators = {"standard", "sr", "js", "eb"};
    std::vector<std::string> ci_methods = {"pooled_normal"};
    std::vector<double> ci_levels = {0.95};
    FeatureSpec features;
    GofConfig gof;
    BenchmarkFileConfig benchmark;
    SynthConfig synth;
    Hyperparameters hyper;
    std::uint64_t seed = 1;
    std::string output_dir = ".";
    std::string format = "both";  // csv | json | both

    // Fingerprint of the effective configuration (after CLI overrides);
    // stamped into every output file.
    std::string config_hash;

    AttributeSchema schema() const { return AttributeSchema(schema_attributes); }
    bool wants_csv() const { return format == "csv" || format == "both"; }
    bool wants_json() const { return format == "json" || format == "both"; }
};

RunConfig load_run_config(const std::string& path);

struct ConfigOverrides {
    std::optional<std::string> output_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> format;
};

void apply_overrides(RunConfig& config, const ConfigOverrides& overrides);

// Recomputes the fingerprint from the effective settings; called by
// load_run_config and after overrides.
void refresh_config_hash(RunConfig& config);

} // namespace disagg
