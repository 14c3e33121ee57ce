#pragma once

// Semi-synthetic populations with known per-group ground truth, stratified
// evaluation-dataset sampling, and the benchmark harness that scores every
// estimator and interval method against the truth.

#include "disagg/core_data.hpp"
#include "disagg/feature_builder.hpp"
#include "disagg/metrics.hpp"
#include "disagg/structured_regression.hpp"
#include "disagg/variance_ci.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace disagg {

// Group-level mean model: intercept plus coefficients on feature columns
// (feature-builder naming), with a Bernoulli or Gaussian emission.
struct SynthTerm {
    double coefficient = 0.0;
    std::string column;
};

struct SynthModelSpec {
    std::string name;
    double intercept = 0.0;
    std::vector<SynthTerm> terms;
    enum class Emission { bernoulli, normal } emission = Emission::bernoulli;
    double normal_sd = 0.1;
};

// The four built-in ground-truth structures (age shift, explanatory-driven,
// additive age+race, age-by-race interaction).
SynthModelSpec builtin_synth_model(const std::string& name);
std::vector<std::string> builtin_synth_model_names();

// Base population: which groups exist and how skewed their shares are,
// plus an integer diagnoses-count covariate whose mean varies by age band
// so explanatory features carry signal.
struct SynthPopulationConfig {
    std::size_t size = 1000000;
    std::uint64_t seed = 1;
    // Group shares in schema order; empty selects the default skewed
    // profile over the default 4x4x2 schema.
    std::vector<double> group_shares;
    // Per-age-band mean of the diagnoses covariate (Binomial(16, mean/16)).
    std::vector<double> diagnoses_mean_by_age;
};

AttributeSchema default_synth_schema();
std::vector<double> default_synth_shares();
inline constexpr const char* kDiagnosesCovariate = "number_diagnoses";

struct SynthPopulation {
    std::vector<EvalRecord> records;
    std::vector<double> model_mu;  // ground-truth group means under the spec
};

// Synthesizes base records, evaluates the model means on the population,
// and draws a fresh prediction per record. Bernoulli emissions require
// every group mean to lie in [0, 1].
SynthPopulation generate_population(const AttributeSchema& schema,
                                    const SynthPopulationConfig& config,
                                    const SynthModelSpec& spec);

// Standard estimate per group on the full population, method tag "truth".
EstimateSet compute_ground_truth(const GroupedDataset& population,
                                 const MetricConfig& metric);

// Per-group allocations proportional to population shares (largest
// remainder), sampled without replacement within groups.
std::vector<EvalRecord> sample_evaluation_dataset(const GroupedDataset& population,
                                                  std::size_t size, std::uint64_t seed);

struct BenchmarkConfig {
    MetricConfig metric;                   // defaults to the mean-value metric
    std::vector<std::string> estimators = {"standard", "sr", "js", "eb"};
    std::vector<std::string> ci_methods = {"pooled_normal", "naive_normal", "percentile",
                                           "rblpr"};
    std::vector<double> levels = {0.90, 0.95, 0.99};
    int draws = 20;
    std::size_t sample_size = 5000;
    std::uint64_t seed = 1;
    std::size_t small_group_max = 25;  // bucket boundary
    int variance_replicates = kDefaultVarianceBootstrap;
    int percentile_replicates = kDefaultPercentileBootstrap;
    int rblpr_replicates = kDefaultRblprBootstrap;
    double lambda_ridge = kDefaultLambdaRidge;
    std::optional<double> fixed_lambda;  // skip cross-validation when set
    FeatureSpec features;                // defaults chosen in run_benchmark if empty
    CvOptions cv;
};

struct PointRow {
    int draw = 0;
    std::string estimator;
    std::string bucket;  // all | small | large
    double mae = 0.0;
    double mse = 0.0;
    std::size_t groups = 0;
};

struct CoverageCell {
    std::size_t covered = 0;
    std::size_t total = 0;
    double rel_width_sum = 0.0;
    std::size_t rel_width_count = 0;

    double coverage() const {
        return total == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(total);
    }
    double mean_rel_width() const {
        return rel_width_count == 0 ? 0.0 : rel_width_sum / static_cast<double>(rel_width_count);
    }
};

struct BenchmarkReport {
    std::vector<PointRow> point_rows;  // one row per estimator x bucket x draw
    // Aggregates pooled over draws and groups.
    std::map<std::string, std::map<std::string, PointRow>> point_summary;  // estimator->bucket
    // (method, level, bucket) -> coverage and width vs the pooled-normal
    // standard interval.
    std::map<std::string, std::map<double, std::map<std::string, CoverageCell>>> coverage;
    std::vector<std::string> diagnostics;  // per-draw estimator failures
    int draws = 0;
    std::uint64_t seed = 0;
};

BenchmarkReport run_benchmark(const GroupedDataset& population, const BenchmarkConfig& config);

} // namespace disagg
