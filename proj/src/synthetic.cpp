#include "disagg/synthetic.hpp"

#include "disagg/error.hpp"
#include "disagg/parallel.hpp"
#include "disagg/rng.hpp"
#include "disagg/shrinkage.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace disagg {

AttributeSchema default_synth_schema() {
    return AttributeSchema({
        {"race", {"african_american", "hispanic", "white", "other"}},
        {"age", {"20-39", "40-60", "61-80", "81-99"}},
        {"gender", {"male", "female"}},
    });
}

namespace {

// Skewed marginals: a dominant race category and a thin young-age band,
// so that at evaluation size 5000 a tail of intersectional groups lands
// under 10 observations and roughly a third under 25.
constexpr double kRaceShare[4] = {0.18, 0.02, 0.76, 0.04};
constexpr double kAgeShare[4] = {0.10, 0.28, 0.44, 0.18};
constexpr double kGenderShare[2] = {0.46, 0.54};

// Mean diagnoses count per age band; drawn as Binomial(16, mean/16) so the
// group means carry an age gradient without clamping bias.
constexpr double kDiagnosesMeanByAge[4] = {2.6, 5.1, 8.6, 11.3};

} // namespace

std::vector<double> default_synth_shares() {
    std::vector<double> shares;
    shares.reserve(32);
    for (const double race : kRaceShare) {
        for (const double age : kAgeShare) {
            for (const double gender : kGenderShare) {
                shares.push_back(race * age * gender);
            }
        }
    }
    return shares;
}

SynthModelSpec builtin_synth_model(const std::string& name) {
    SynthModelSpec spec;
    spec.name = name;
    if (name == "model_age") {
        spec.intercept = 0.35;
        spec.terms = {{-0.3, "attr:age=40-60"}};
        spec.emission = SynthModelSpec::Emission::bernoulli;
    } else if (name == "model_expl") {
        spec.intercept = -0.93;
        spec.terms = {{0.16, std::string("expl:") + kDiagnosesCovariate}};
        spec.emission = SynthModelSpec::Emission::normal;
        spec.normal_sd = 0.1;
    } else if (name == "model_age_plus_rc") {
        spec.intercept = 0.65;
        spec.terms = {{-0.15, "attr:age=40-60"}, {-0.45, "attr:race=white"}};
        spec.emission = SynthModelSpec::Emission::bernoulli;
    } else if (name == "model_age_times_rc") {
        spec.intercept = 0.32;
        spec.terms = {{-0.27, "int:attr:age=40-60*attr:race=white"}};
        spec.emission = SynthModelSpec::Emission::bernoulli;
    } else {
        fail(ErrorKind::config, "unknown synthetic model: " + name);
    }
    return spec;
}

std::vector<std::string> builtin_synth_model_names() {
    return {"model_age", "model_expl", "model_age_plus_rc", "model_age_times_rc"};
}

namespace {

// Feature spec sufficient to evaluate the model terms.
FeatureSpec feature_spec_for_model(const SynthModelSpec& spec) {
    FeatureSpec features;
    features.group_identity = false;
    features.attribute_indicators = true;
    for (const auto& term : spec.terms) {
        if (term.column.rfind("expl:", 0) == 0) {
            features.explanatory.push_back(term.column.substr(5));
        } else if (term.column.rfind("int:", 0) == 0) {
            const std::string body = term.column.substr(4);
            const auto split = body.find('*');
            if (split == std::string::npos) {
                fail(ErrorKind::config, "synthetic model interaction lacks '*': " + term.column);
            }
            features.interactions.emplace_back(body.substr(0, split), body.substr(split + 1));
        } else if (term.column.rfind("rate:", 0) == 0) {
            features.outcome_rates = true;
        }
    }
    return features;
}

int draw_binomial16(Rng& rng, double p) {
    int successes = 0;
    for (int i = 0; i < 16; ++i) successes += rng.next_bernoulli(p);
    return successes;
}

} // namespace

SynthPopulation generate_population(const AttributeSchema& schema,
                                    const SynthPopulationConfig& config,
                                    const SynthModelSpec& spec) {
    if (config.size == 0) fail(ErrorKind::config, "generate_population: size must be positive");

    std::vector<double> shares =
        config.group_shares.empty() ? default_synth_shares() : config.group_shares;
    if (shares.size() != schema.group_count()) {
        fail(ErrorKind::config, "generate_population: need one share per group");
    }
    double total = 0.0;
    for (const double s : shares) {
        if (s < 0.0) fail(ErrorKind::config, "generate_population: negative group share");
        total += s;
    }
    if (total <= 0.0) fail(ErrorKind::config, "generate_population: all shares are zero");
    std::vector<double> cumulative(shares.size());
    double acc = 0.0;
    for (std::size_t g = 0; g < shares.size(); ++g) {
        acc += shares[g] / total;
        cumulative[g] = acc;
    }
    cumulative.back() = 1.0;

    std::vector<double> diagnoses_mean(config.diagnoses_mean_by_age.begin(),
                                       config.diagnoses_mean_by_age.end());
    const auto age_index = schema.attribute_index("age");
    if (diagnoses_mean.empty() && age_index) {
        diagnoses_mean.assign(std::begin(kDiagnosesMeanByAge), std::end(kDiagnosesMeanByAge));
    }
    if (age_index &&
        diagnoses_mean.size() != schema.attributes()[*age_index].domain.size()) {
        fail(ErrorKind::config, "generate_population: one diagnoses mean per age band");
    }

    // Base records: group membership and covariates.
    SynthPopulation out;
    out.records.resize(config.size);
    Rng rng = Rng::stream(config.seed, 0xba5eULL);
    std::vector<std::size_t> age_digit(schema.group_count(), 0);
    if (age_index) {
        for (std::size_t g = 0; g < schema.group_count(); ++g) {
            const auto& label = schema.group_key(g)[*age_index];
            const auto& domain = schema.attributes()[*age_index].domain;
            age_digit[g] = std::find(domain.begin(), domain.end(), label) - domain.begin();
        }
    }
    for (std::size_t i = 0; i < config.size; ++i) {
        const double u = rng.next_double();
        const std::size_t g =
            std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin();
        EvalRecord& rec = out.records[i];
        rec.attrs = schema.group_key(g);
        if (age_index) {
            const double mean = diagnoses_mean[age_digit[g]];
            rec.covariates[kDiagnosesCovariate] =
                static_cast<double>(draw_binomial16(rng, mean / 16.0));
        }
    }

    // Ground-truth group means from the population's own feature values.
    const GroupedDataset grouped = stratify(out.records, schema);
    const FeatureMatrix phi = build_features(grouped, feature_spec_for_model(spec));
    out.model_mu.resize(schema.group_count());
    for (std::size_t g = 0; g < schema.group_count(); ++g) {
        double mu = spec.intercept;
        for (const auto& term : spec.terms) {
            const auto j = phi.column_index(term.column);
            if (!j) fail(ErrorKind::config, "synthetic model references unknown column: " +
                                                term.column);
            mu += term.coefficient *
                  phi.values(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(*j));
        }
        if (spec.emission == SynthModelSpec::Emission::bernoulli &&
            !(mu >= 0.0 && mu <= 1.0)) {
            fail(ErrorKind::config, "synthetic model: Bernoulli mean outside [0, 1] for group " +
                                        schema.key_label(g));
        }
        out.model_mu[g] = mu;
    }

    // Emission: one fresh prediction per record.
    Rng emit = Rng::stream(config.seed, 0xe515ULL);
    for (auto& rec : out.records) {
        const std::size_t g = *schema.group_index(rec.attrs);
        double y_hat;
        if (spec.emission == SynthModelSpec::Emission::bernoulli) {
            y_hat = emit.next_bernoulli(out.model_mu[g]) ? 1.0 : 0.0;
        } else {
            y_hat = out.model_mu[g] + spec.normal_sd * emit.next_normal();
        }
        rec.prediction = y_hat;
        rec.record_value = y_hat;
    }
    return out;
}

EstimateSet compute_ground_truth(const GroupedDataset& population,
                                 const MetricConfig& metric) {
    EstimateSet truth = standard_estimates(population, metric);
    truth.method = "truth";
    return truth;
}

std::vector<EvalRecord> sample_evaluation_dataset(const GroupedDataset& population,
                                                  std::size_t size, std::uint64_t seed) {
    const std::size_t total = population.total();
    if (size > total) {
        fail(ErrorKind::sampling, "sample_evaluation_dataset: size exceeds the population");
    }

    // Largest-remainder allocation proportional to group shares.
    const std::size_t n_groups = population.groups.size();
    std::vector<std::size_t> allocation(n_groups, 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    remainders.reserve(n_groups);
    std::size_t allocated = 0;
    for (std::size_t g = 0; g < n_groups; ++g) {
        const double quota = static_cast<double>(size) *
                             static_cast<double>(population.groups[g].size()) /
                             static_cast<double>(total);
        allocation[g] = static_cast<std::size_t>(std::floor(quota));
        allocated += allocation[g];
        remainders.emplace_back(quota - std::floor(quota), g);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; allocated < size; ++i) {
        ++allocation[remainders[i % remainders.size()].second];
        ++allocated;
    }
    for (std::size_t g = 0; g < n_groups; ++g) {
        if (allocation[g] > population.groups[g].size()) {
            fail(ErrorKind::sampling, "sample_evaluation_dataset: allocation for group " +
                                          std::to_string(g) + " exceeds its population");
        }
    }

    // Partial Fisher-Yates per group, without replacement.
    std::vector<EvalRecord> sample;
    sample.reserve(size);
    for (std::size_t g = 0; g < n_groups; ++g) {
        const auto& group = population.groups[g];
        if (allocation[g] == 0) continue;
        std::vector<std::size_t> order(group.size());
        std::iota(order.begin(), order.end(), 0);
        Rng rng = Rng::stream(seed, 0x5a3eULL, g);
        for (std::size_t i = 0; i < allocation[g]; ++i) {
            const std::size_t j = i + rng.next_index(order.size() - i);
            std::swap(order[i], order[j]);
            sample.push_back(group[order[i]]);
        }
    }
    return sample;
}

// ---------------------------------------------------------------------------
// Benchmark harness
// ---------------------------------------------------------------------------

namespace {

struct DrawOutput {
    // estimator -> per-group estimates (empty optional = undefined)
    std::map<std::string, std::vector<std::optional<double>>> estimates;
    // method -> level -> per-group intervals
    std::map<std::string, std::map<double, std::vector<std::optional<Interval>>>> intervals;
    std::vector<std::size_t> group_sizes;
    std::vector<std::string> diagnostics;
};

FeatureSpec default_benchmark_features() {
    FeatureSpec features;
    features.group_identity = true;
    features.attribute_indicators = true;
    features.explanatory = {kDiagnosesCovariate};
    return features;
}

bool feature_spec_is_empty(const FeatureSpec& spec) {
    return !spec.group_identity && !spec.attribute_indicators &&
           spec.indicator_attributes.empty() && spec.explanatory.empty() &&
           !spec.outcome_rates && spec.interactions.empty();
}

DrawOutput run_single_draw(const GroupedDataset& population, const AttributeSchema& schema,
                           const BenchmarkConfig& config, const FeatureSpec& features,
                           int draw) {
    DrawOutput out;
    const std::uint64_t draw_seed = mix_seed(config.seed, static_cast<std::uint64_t>(draw));

    const std::vector<EvalRecord> records =
        sample_evaluation_dataset(population, config.sample_size, mix_seed(draw_seed, 1));
    const GroupedDataset grouped = stratify(records, schema);
    out.group_sizes = grouped.sizes();

    const EstimateSet z = standard_estimates(grouped, config.metric);
    const VarianceModel variances =
        estimate_variances(grouped, config.metric, config.variance_replicates,
                           mix_seed(draw_seed, 2));

    auto wants_estimator = [&](const std::string& name) {
        return std::find(config.estimators.begin(), config.estimators.end(), name) !=
               config.estimators.end();
    };
    auto wants_ci = [&](const std::string& name) {
        return std::find(config.ci_methods.begin(), config.ci_methods.end(), name) !=
               config.ci_methods.end();
    };
    auto note_failure = [&](const std::string& what, const std::exception& e) {
        out.diagnostics.push_back("draw " + std::to_string(draw) + ": " + what + ": " +
                                  e.what());
    };

    if (wants_estimator("standard")) out.estimates["standard"] = z.values;

    if (wants_estimator("js")) {
        try {
            out.estimates["js"] = james_stein(z, variances).values;
        } catch (const std::exception& e) {
            note_failure("js", e);
        }
    }
    if (wants_estimator("eb")) {
        try {
            out.estimates["eb"] = empirical_bayes(z, variances).means.values;
        } catch (const std::exception& e) {
            note_failure("eb", e);
        }
    }

    double sr_lambda = 0.0;
    bool have_sr_lambda = false;
    if (wants_estimator("sr") || wants_ci("rblpr")) {
        try {
            if (config.fixed_lambda) {
                sr_lambda = *config.fixed_lambda;
            } else {
                CvOptions cv = config.cv;
                cv.variance_replicates = config.variance_replicates;
                sr_lambda = cv_select_lambda(records, schema, config.metric, features,
                                             mix_seed(draw_seed, 3), cv)
                                .selected_lambda;
            }
            have_sr_lambda = true;
        } catch (const std::exception& e) {
            note_failure("sr-lambda", e);
        }
    }

    FeatureMatrix phi;
    bool have_phi = false;
    if (have_sr_lambda) {
        try {
            phi = build_features(grouped, features);
            have_phi = true;
        } catch (const std::exception& e) {
            note_failure("features", e);
        }
    }

    if (wants_estimator("sr") && have_phi) {
        try {
            const LassoFit fit = fit_weighted_lasso(phi, z, variances, sr_lambda);
            out.estimates["sr"] = sr_estimates(fit).values;
        } catch (const std::exception& e) {
            note_failure("sr", e);
        }
    }

    for (const double level : config.levels) {
        const double alpha = 1.0 - level;
        if (wants_ci("pooled_normal")) {
            out.intervals["pooled_normal"][level] = pooled_normal_cis(z, variances, alpha).intervals;
        }
        if (wants_ci("naive_normal")) {
            out.intervals["naive_normal"][level] = naive_normal_cis(z, variances, alpha).intervals;
        }
        if (wants_ci("percentile")) {
            try {
                out.intervals["percentile"][level] =
                    bootstrap_percentile_cis(grouped, config.metric,
                                             config.percentile_replicates, alpha,
                                             mix_seed(draw_seed, 4))
                        .intervals;
            } catch (const std::exception& e) {
                note_failure("percentile", e);
            }
        }
        if (wants_ci("rblpr") && have_phi) {
            try {
                out.intervals["rblpr"][level] =
                    rblpr_ci(phi, z, variances, sr_lambda, config.lambda_ridge,
                             config.rblpr_replicates, alpha, mix_seed(draw_seed, 5))
                        .intervals;
            } catch (const std::exception& e) {
                note_failure("rblpr", e);
            }
        }
    }
    return out;
}

} // namespace

BenchmarkReport run_benchmark(const GroupedDataset& population, const BenchmarkConfig& config) {
    if (config.draws < 1) fail(ErrorKind::param, "run_benchmark: draws must be >= 1");
    if (population.schema == nullptr) fail(ErrorKind::param, "run_benchmark: missing schema");
    const AttributeSchema& schema = *population.schema;

    const FeatureSpec features = feature_spec_is_empty(config.features)
                                     ? default_benchmark_features()
                                     : config.features;

    const EstimateSet truth = compute_ground_truth(population, config.metric);

    std::vector<DrawOutput> outputs(static_cast<std::size_t>(config.draws));
    parallel_for(outputs.size(), [&](std::size_t d) {
        outputs[d] =
            run_single_draw(population, schema, config, features, static_cast<int>(d));
    });

    BenchmarkReport report;
    report.draws = config.draws;
    report.seed = config.seed;

    const std::vector<std::string> buckets = {"all", "small", "large"};
    auto bucket_of = [&](std::size_t n) { return n <= config.small_group_max ? 1 : 2; };

    struct Accum {
        double abs_sum = 0.0;
        double sq_sum = 0.0;
        std::size_t count = 0;
    };

    std::map<std::string, std::map<std::string, Accum>> totals;
    for (std::size_t d = 0; d < outputs.size(); ++d) {
        const DrawOutput& draw = outputs[d];
        for (const auto& diag : draw.diagnostics) report.diagnostics.push_back(diag);

        for (const auto& [estimator, values] : draw.estimates) {
            Accum per_bucket[3];
            for (std::size_t g = 0; g < values.size(); ++g) {
                if (!values[g] || !truth.values[g]) continue;
                const double err = *values[g] - *truth.values[g];
                const int b = bucket_of(draw.group_sizes[g]);
                for (const int target : {0, b}) {
                    per_bucket[target].abs_sum += std::fabs(err);
                    per_bucket[target].sq_sum += err * err;
                    ++per_bucket[target].count;
                }
            }
            for (int b = 0; b < 3; ++b) {
                if (per_bucket[b].count == 0) continue;
                PointRow row;
                row.draw = static_cast<int>(d);
                row.estimator = estimator;
                row.bucket = buckets[static_cast<std::size_t>(b)];
                row.groups = per_bucket[b].count;
                row.mae = per_bucket[b].abs_sum / static_cast<double>(per_bucket[b].count);
                row.mse = per_bucket[b].sq_sum / static_cast<double>(per_bucket[b].count);
                report.point_rows.push_back(row);

                Accum& total = totals[estimator][row.bucket];
                total.abs_sum += per_bucket[b].abs_sum;
                total.sq_sum += per_bucket[b].sq_sum;
                total.count += per_bucket[b].count;
            }
        }

        for (const auto& [method, by_level] : draw.intervals) {
            for (const auto& [level, intervals] : by_level) {
                const auto std_it = draw.intervals.find("pooled_normal");
                const std::vector<std::optional<Interval>>* reference = nullptr;
                if (std_it != draw.intervals.end()) {
                    const auto ref_it = std_it->second.find(level);
                    if (ref_it != std_it->second.end()) reference = &ref_it->second;
                }
                for (std::size_t g = 0; g < intervals.size(); ++g) {
                    if (!intervals[g] || !truth.values[g]) continue;
                    const int b = bucket_of(draw.group_sizes[g]);
                    for (const int target : {0, b}) {
                        CoverageCell& cell =
                            report.coverage[method][level][buckets[static_cast<std::size_t>(target)]];
                        cell.covered += intervals[g]->contains(*truth.values[g]);
                        ++cell.total;
                        if (reference && (*reference)[g] && (*reference)[g]->width() > 0.0) {
                            cell.rel_width_sum +=
                                intervals[g]->width() / (*reference)[g]->width();
                            ++cell.rel_width_count;
                        }
                    }
                }
            }
        }
    }

    for (const auto& [estimator, by_bucket] : totals) {
        for (const auto& [bucket, accum] : by_bucket) {
            PointRow row;
            row.draw = -1;
            row.estimator = estimator;
            row.bucket = bucket;
            row.groups = accum.count;
            row.mae = accum.abs_sum / static_cast<double>(accum.count);
            row.mse = accum.sq_sum / static_cast<double>(accum.count);
            if (row.mae > std::sqrt(row.mse) + 1e-12) {
                fail(ErrorKind::numeric, "run_benchmark: MAE exceeded root-MSE");
            }
            report.point_summary[estimator][bucket] = row;
        }
    }
    return report;
}

} // namespace disagg
