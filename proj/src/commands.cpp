#include "disagg/commands.hpp"

#include "disagg/error.hpp"
#include "disagg/rng.hpp"
#include "disagg/gof.hpp"
#include "disagg/shrinkage.hpp"
#include "disagg/structured_regression.hpp"
#include "disagg/synthetic.hpp"
#include "disagg/variance_ci.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace disagg {

namespace {

using nlohmann::json;

constexpr const char* kInsufficientData = "insufficient_data";

double parse_number(const std::string& text, const std::string& column, std::size_t row) {
    try {
        std::size_t consumed = 0;
        const double v = std::stod(text, &consumed);
        if (consumed != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        fail(ErrorKind::data, "row " + std::to_string(row + 2) + ", column '" + column +
                                  "': cannot parse number from '" + text + "'");
    }
}

std::string level_tag(double level) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%g", level * 100.0);
    return buf;
}

void ensure_output_dir(const RunConfig& config) {
    std::error_code ec;
    std::filesystem::create_directories(config.output_dir, ec);
    if (ec) fail(ErrorKind::config, "cannot create output directory: " + config.output_dir);
}

std::string output_path(const RunConfig& config, const std::string& name) {
    return (std::filesystem::path(config.output_dir) / name).string();
}

void write_json_file(const RunConfig& config, const std::string& name, const json& payload) {
    std::ofstream out(output_path(config, name), std::ios::binary);
    if (!out) fail(ErrorKind::config, "cannot open output file: " + name);
    out << payload.dump(2) << '\n';
}

MetricConfig resolve_metric(const MetricSpec& spec, const std::vector<EvalRecord>& records) {
    MetricConfig metric;
    metric.kind = metric_kind_from_name(spec.name);
    metric.positive_label = spec.positive_label;
    metric.auc_half_tie_credit = spec.auc_half_tie_credit;
    if (spec.threshold) {
        metric.threshold = *spec.threshold;
    } else if (spec.calibrate_fraction) {
        metric.threshold = calibrate_threshold(records, *spec.calibrate_fraction);
    }
    metric.validate();
    return metric;
}

std::string value_or_marker(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string(kInsufficientData);
}

json value_or_null(const std::optional<double>& v) {
    return v ? json(*v) : json();
}

bool contains(const std::vector<std::string>& list, const std::string& name) {
    return std::find(list.begin(), list.end(), name) != list.end();
}

} // namespace

std::vector<EvalRecord> records_from_csv(const CsvTable& table, const RunConfig& config) {
    if (config.schema_attributes.empty()) {
        fail(ErrorKind::config, "config declares no schema attributes");
    }

    auto require_column = [&](const std::string& name) {
        const auto index = table.column(name);
        if (!index) fail(ErrorKind::config, "column not found: " + name);
        return *index;
    };

    std::vector<std::size_t> attribute_cols;
    for (const auto& attr : config.schema_attributes) {
        attribute_cols.push_back(require_column(attr.name));
    }
    std::optional<std::size_t> outcome_col, prediction_col, value_col;
    if (config.columns.outcome) outcome_col = require_column(*config.columns.outcome);
    if (config.columns.prediction) prediction_col = require_column(*config.columns.prediction);
    if (config.columns.record_value) value_col = require_column(*config.columns.record_value);
    std::vector<std::pair<std::string, std::size_t>> covariate_cols;
    for (const auto& name : config.columns.covariates) {
        covariate_cols.emplace_back(name, require_column(name));
    }

    std::vector<EvalRecord> records;
    records.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        EvalRecord rec;
        for (const auto col : attribute_cols) rec.attrs.push_back(row[col]);
        if (outcome_col && !row[*outcome_col].empty()) {
            rec.outcome = parse_number(row[*outcome_col], *config.columns.outcome, r);
        }
        if (prediction_col && !row[*prediction_col].empty()) {
            rec.prediction = parse_number(row[*prediction_col], *config.columns.prediction, r);
        }
        if (value_col && !row[*value_col].empty()) {
            rec.record_value = parse_number(row[*value_col], *config.columns.record_value, r);
        }
        for (const auto& [name, col] : covariate_cols) {
            rec.covariates[name] = parse_number(row[col], name, r);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

namespace {

std::vector<EvalRecord> load_input_records(const RunConfig& config) {
    if (config.input.empty()) fail(ErrorKind::config, "config lacks an input file");
    auto records = records_from_csv(read_csv(config.input), config);
    if (config.aggregate_units) {
        records = aggregate_to_units(records, *config.aggregate_units);
    }
    return records;
}

} // namespace

void cmd_evaluate(const RunConfig& config) {
    if (config.metrics.empty()) fail(ErrorKind::config, "evaluate: no metrics configured");
    ensure_output_dir(config);

    const AttributeSchema schema = config.schema();
    const std::vector<EvalRecord> records = load_input_records(config);
    const GroupedDataset grouped = stratify(records, schema);

    for (const auto& metric_spec : config.metrics) {
        const MetricConfig metric = resolve_metric(metric_spec, records);
        const EstimateSet z = standard_estimates(grouped, metric);
        const VarianceModel variances =
            estimate_variances(grouped, metric, config.hyper.variance_bootstrap,
                               mix_seed(config.seed, 0xe7a1ULL));

        std::map<std::string, EstimateSet> estimates;
        estimates["standard"] = z;

        json diagnostics;
        LassoOptions lasso_options;
        lasso_options.tolerance = config.hyper.lasso_tolerance;
        lasso_options.max_sweeps = config.hyper.lasso_max_sweeps;

        FeatureMatrix phi;
        double sr_lambda = 0.0;
        const bool wants_sr = contains(config.estimators, "sr");
        const bool wants_rblpr = contains(config.ci_methods, "rblpr");
        if (wants_sr || wants_rblpr) {
            phi = build_features(grouped, config.features);
            if (config.hyper.fixed_lambda) {
                sr_lambda = *config.hyper.fixed_lambda;
            } else {
                CvOptions cv;
                cv.folds = config.hyper.cv_folds;
                cv.grid_size = config.hyper.lambda_grid_size;
                cv.grid_min_ratio = config.hyper.lambda_grid_min_ratio;
                cv.variance_replicates = config.hyper.variance_bootstrap;
                cv.lasso = lasso_options;
                const CvResult cv_result =
                    cv_select_lambda(records, schema, metric, config.features,
                                     mix_seed(config.seed, 0xc0deULL), cv);
                sr_lambda = cv_result.selected_lambda;
                diagnostics["cv"] = {{"selected_lambda", cv_result.selected_lambda},
                                     {"grid", cv_result.grid},
                                     {"mean_loss", cv_result.mean_loss}};
            }
            if (wants_sr) {
                const LassoFit fit =
                    fit_weighted_lasso(phi, z, variances, sr_lambda, lasso_options);
                estimates["sr"] = sr_estimates(fit);
                diagnostics["lasso"] = {{"lambda", fit.lambda},
                                        {"sweeps", fit.sweeps},
                                        {"converged", fit.converged},
                                        {"objective", fit.objective},
                                        {"active_columns", fit.active.size()}};
            }
        }
        if (contains(config.estimators, "js")) {
            estimates["js"] = james_stein(z, variances);
        }
        if (contains(config.estimators, "eb")) {
            estimates["eb"] = empirical_bayes(z, variances).means;
        }

        std::vector<std::pair<std::string, IntervalSet>> interval_sets;
        for (const double level : config.ci_levels) {
            const double alpha = 1.0 - level;
            for (const auto& method : config.ci_methods) {
                if (method == "pooled_normal") {
                    interval_sets.emplace_back(method, pooled_normal_cis(z, variances, alpha));
                } else if (method == "naive_normal") {
                    interval_sets.emplace_back(method, naive_normal_cis(z, variances, alpha));
                } else if (method == "percentile") {
                    interval_sets.emplace_back(
                        method, bootstrap_percentile_cis(grouped, metric,
                                                         config.hyper.percentile_bootstrap,
                                                         alpha, mix_seed(config.seed, 0x9c7ULL)));
                } else if (method == "rblpr") {
                    interval_sets.emplace_back(
                        method, rblpr_ci(phi, z, variances, sr_lambda,
                                         config.hyper.lambda_ridge,
                                         config.hyper.rblpr_bootstrap, alpha,
                                         mix_seed(config.seed, 0xb00fULL), lasso_options));
                } else {
                    fail(ErrorKind::config, "unknown ci method: " + method);
                }
            }
        }

        const std::string metric_name_str = metric_name(metric.kind);
        const std::vector<std::string> estimator_order = {"standard", "sr", "js", "eb"};

        if (config.wants_csv()) {
            std::vector<std::string> header = {"group", "n"};
            for (const auto& name : estimator_order) {
                if (estimates.count(name)) header.push_back(name);
            }
            for (const auto& [method, set] : interval_sets) {
                header.push_back(method + "_" + level_tag(set.level) + "_lo");
                header.push_back(method + "_" + level_tag(set.level) + "_hi");
            }
            header.push_back("config_hash");
            header.push_back("seed");

            CsvWriter writer(header);
            for (std::size_t g = 0; g < schema.group_count(); ++g) {
                std::vector<std::string> row = {schema.key_label(g),
                                                std::to_string(grouped.groups[g].size())};
                for (const auto& name : estimator_order) {
                    const auto it = estimates.find(name);
                    if (it != estimates.end()) {
                        row.push_back(value_or_marker(it->second.values[g]));
                    }
                }
                for (const auto& [method, set] : interval_sets) {
                    if (set.intervals[g]) {
                        row.push_back(format_double(set.intervals[g]->lower));
                        row.push_back(format_double(set.intervals[g]->upper));
                    } else {
                        row.push_back(kInsufficientData);
                        row.push_back(kInsufficientData);
                    }
                }
                row.push_back(config.config_hash);
                row.push_back(std::to_string(config.seed));
                writer.add_row(std::move(row));
            }
            writer.write(output_path(config, "evaluate_" + metric_name_str + ".csv"));
        }

        if (config.wants_json()) {
            json payload;
            payload["metric"] = metric_name_str;
            if (metric.threshold) payload["threshold"] = *metric.threshold;
            payload["config_hash"] = config.config_hash;
            payload["seed"] = config.seed;
            payload["pooled_scale"] = variances.pooled_scale;
            payload["diagnostics"] = diagnostics;
            json groups = json::array();
            for (std::size_t g = 0; g < schema.group_count(); ++g) {
                json entry;
                entry["group"] = schema.key_label(g);
                entry["n"] = grouped.groups[g].size();
                for (const auto& [name, set] : estimates) {
                    entry[name] = value_or_null(set.values[g]);
                }
                json intervals = json::array();
                for (const auto& [method, set] : interval_sets) {
                    json item;
                    item["method"] = method;
                    item["level"] = set.level;
                    if (set.intervals[g]) {
                        item["lower"] = set.intervals[g]->lower;
                        item["upper"] = set.intervals[g]->upper;
                    } else {
                        item["status"] = kInsufficientData;
                    }
                    intervals.push_back(item);
                }
                entry["intervals"] = intervals;
                groups.push_back(entry);
            }
            payload["groups"] = groups;
            write_json_file(config, "evaluate_" + metric_name_str + ".json", payload);
        }
    }
}

void cmd_gof(const RunConfig& config) {
    if (config.metrics.empty()) fail(ErrorKind::config, "gof: no metrics configured");
    if (config.gof.ladder.empty()) fail(ErrorKind::config, "empty ladder");
    ensure_output_dir(config);

    const AttributeSchema schema = config.schema();
    const std::vector<EvalRecord> records = load_input_records(config);
    const GroupedDataset grouped = stratify(records, schema);
    const FeatureMatrix phi = build_features(grouped, config.features);

    auto find_model = [&](const std::string& name) -> const GofModelSpec& {
        for (const auto& model : config.gof.models) {
            if (model.name == name) return model;
        }
        fail(ErrorKind::config, "gof ladder references unknown model: " + name);
    };

    std::vector<std::pair<GofModelSpec, GofModelSpec>> comparisons;
    for (const auto& [m0, m1] : config.gof.ladder) {
        comparisons.emplace_back(find_model(m0), find_model(m1));
    }

    for (const auto& metric_spec : config.metrics) {
        const MetricConfig metric = resolve_metric(metric_spec, records);
        const EstimateSet z = standard_estimates(grouped, metric);
        const VarianceModel variances =
            estimate_variances(grouped, metric, config.hyper.variance_bootstrap,
                               mix_seed(config.seed, 0xe7a1ULL));
        const std::vector<double> weights = gof_weights(z, variances);
        const auto results = gof_ladder(comparisons, phi, z.values, weights);

        const std::string metric_name_str = metric_name(metric.kind);
        if (config.wants_csv()) {
            CsvWriter writer({"metric", "comparison", "f_stat", "df_num", "df_den", "n_groups",
                              "rss0", "rss1", "p_value", "significant", "config_hash", "seed"});
            for (const auto& r : results) {
                writer.add_row({metric_name_str, r.comparison, format_double(r.f_stat),
                                std::to_string(r.rank1 - r.rank0),
                                std::to_string(static_cast<long>(r.n_groups) - r.rank1),
                                std::to_string(r.n_groups), format_double(r.rss0),
                                format_double(r.rss1), format_double(r.p_value),
                                r.significant ? "true" : "false", config.config_hash,
                                std::to_string(config.seed)});
            }
            writer.write(output_path(config, "gof_" + metric_name_str + ".csv"));
        }
        if (config.wants_json()) {
            json payload;
            payload["metric"] = metric_name_str;
            payload["config_hash"] = config.config_hash;
            payload["seed"] = config.seed;
            json rows = json::array();
            for (const auto& r : results) {
                rows.push_back({{"comparison", r.comparison},
                                {"f_stat", r.f_stat},
                                {"df_num", r.rank1 - r.rank0},
                                {"df_den", static_cast<long>(r.n_groups) - r.rank1},
                                {"n_groups", r.n_groups},
                                {"rss0", r.rss0},
                                {"rss1", r.rss1},
                                {"p_value", r.p_value},
                                {"significant", r.significant}});
            }
            payload["comparisons"] = rows;
            write_json_file(config, "gof_" + metric_name_str + ".json", payload);
        }
    }
}

void cmd_benchmark(const RunConfig& config) {
    ensure_output_dir(config);

    const AttributeSchema schema = config.schema_attributes.empty()
                                       ? default_synth_schema()
                                       : config.schema();

    std::vector<EvalRecord> population_records;
    if (config.benchmark.input) {
        RunConfig ingest = config;
        ingest.input = *config.benchmark.input;
        population_records = records_from_csv(read_csv(*config.benchmark.input), ingest);
    } else {
        SynthPopulationConfig pop;
        pop.size = config.benchmark.synth.size;
        pop.seed = mix_seed(config.seed, 0x9090ULL);
        pop.group_shares = config.benchmark.synth.group_shares;
        pop.diagnoses_mean_by_age = config.benchmark.synth.diagnoses_mean_by_age;
        population_records =
            generate_population(schema, pop, config.benchmark.synth.resolve()).records;
    }
    const GroupedDataset population = stratify(population_records, schema);

    BenchmarkConfig bench;
    if (!config.metrics.empty()) {
        bench.metric = resolve_metric(config.metrics.front(), population_records);
    }
    bench.estimators = config.estimators;
    bench.ci_methods = config.ci_methods;
    bench.levels = config.ci_levels;
    bench.draws = config.benchmark.draws;
    bench.sample_size = config.benchmark.sample_size;
    bench.seed = config.seed;
    bench.small_group_max = config.benchmark.small_group_max;
    bench.variance_replicates = config.hyper.variance_bootstrap;
    bench.percentile_replicates = config.hyper.percentile_bootstrap;
    bench.rblpr_replicates = config.hyper.rblpr_bootstrap;
    bench.lambda_ridge = config.hyper.lambda_ridge;
    bench.fixed_lambda = config.hyper.fixed_lambda;
    bench.features = config.features;
    bench.cv.folds = config.hyper.cv_folds;
    bench.cv.grid_size = config.hyper.lambda_grid_size;
    bench.cv.grid_min_ratio = config.hyper.lambda_grid_min_ratio;
    bench.cv.lasso.tolerance = config.hyper.lasso_tolerance;
    bench.cv.lasso.max_sweeps = config.hyper.lasso_max_sweeps;

    const BenchmarkReport report = run_benchmark(population, bench);

    if (config.wants_csv()) {
        CsvWriter mae({"draw", "estimator", "bucket", "mae", "mse", "groups", "config_hash",
                       "seed"});
        for (const auto& row : report.point_rows) {
            mae.add_row({std::to_string(row.draw), row.estimator, row.bucket,
                         format_double(row.mae), format_double(row.mse),
                         std::to_string(row.groups), config.config_hash,
                         std::to_string(config.seed)});
        }
        mae.write(output_path(config, "benchmark_mae.csv"));

        CsvWriter coverage({"method", "level", "bucket", "covered", "total", "coverage",
                            "config_hash", "seed"});
        CsvWriter width({"method", "level", "bucket", "mean_rel_width", "pairs",
                         "config_hash", "seed"});
        for (const auto& [method, by_level] : report.coverage) {
            for (const auto& [level, by_bucket] : by_level) {
                for (const auto& [bucket, cell] : by_bucket) {
                    coverage.add_row({method, format_double(level), bucket,
                                      std::to_string(cell.covered), std::to_string(cell.total),
                                      format_double(cell.coverage()), config.config_hash,
                                      std::to_string(config.seed)});
                    width.add_row({method, format_double(level), bucket,
                                   format_double(cell.mean_rel_width()),
                                   std::to_string(cell.rel_width_count), config.config_hash,
                                   std::to_string(config.seed)});
                }
            }
        }
        coverage.write(output_path(config, "benchmark_coverage.csv"));
        width.write(output_path(config, "benchmark_width.csv"));
    }

    if (config.wants_json()) {
        json payload;
        payload["config_hash"] = config.config_hash;
        payload["seed"] = config.seed;
        payload["draws"] = report.draws;
        payload["diagnostics"] = report.diagnostics;
        json summary = json::array();
        for (const auto& [estimator, by_bucket] : report.point_summary) {
            for (const auto& [bucket, row] : by_bucket) {
                summary.push_back({{"estimator", estimator},
                                   {"bucket", bucket},
                                   {"mae", row.mae},
                                   {"mse", row.mse},
                                   {"groups", row.groups}});
            }
        }
        payload["point_summary"] = summary;
        json coverage = json::array();
        for (const auto& [method, by_level] : report.coverage) {
            for (const auto& [level, by_bucket] : by_level) {
                for (const auto& [bucket, cell] : by_bucket) {
                    coverage.push_back({{"method", method},
                                        {"level", level},
                                        {"bucket", bucket},
                                        {"covered", cell.covered},
                                        {"total", cell.total},
                                        {"coverage", cell.coverage()},
                                        {"mean_rel_width", cell.mean_rel_width()}});
                }
            }
        }
        payload["coverage"] = coverage;
        write_json_file(config, "benchmark_report.json", payload);
    }
}

void cmd_synth(const RunConfig& config) {
    if (config.synth.size == 0) fail(ErrorKind::config, "synth: size must be positive");
    ensure_output_dir(config);

    const AttributeSchema schema = config.schema_attributes.empty()
                                       ? default_synth_schema()
                                       : config.schema();

    SynthPopulationConfig pop;
    pop.size = config.synth.size;
    pop.seed = config.seed;
    pop.group_shares = config.synth.group_shares;
    pop.diagnoses_mean_by_age = config.synth.diagnoses_mean_by_age;
    const SynthModelSpec model = config.synth.resolve();
    const SynthPopulation population = generate_population(schema, pop, model);

    std::vector<std::string> header;
    for (const auto& attr : schema.attributes()) header.push_back(attr.name);
    const bool has_diagnoses = !population.records.empty() &&
                               population.records.front().covariates.count(kDiagnosesCovariate);
    if (has_diagnoses) header.push_back(kDiagnosesCovariate);
    header.push_back("y_hat");

    CsvWriter writer(header);
    for (const auto& rec : population.records) {
        std::vector<std::string> row(rec.attrs.begin(), rec.attrs.end());
        if (has_diagnoses) {
            row.push_back(format_double(rec.covariates.at(kDiagnosesCovariate)));
        }
        row.push_back(format_double(*rec.prediction));
        writer.add_row(std::move(row));
    }
    writer.write(output_path(config, "population.csv"));

    const GroupedDataset grouped = stratify(population.records, schema);
    MetricConfig mean_metric;
    mean_metric.kind = MetricKind::mean_value;
    const EstimateSet truth = compute_ground_truth(grouped, mean_metric);

    json sidecar;
    sidecar["model"] = model.name;
    sidecar["config_hash"] = config.config_hash;
    sidecar["seed"] = config.seed;
    sidecar["size"] = config.synth.size;
    json groups = json::array();
    for (std::size_t g = 0; g < schema.group_count(); ++g) {
        groups.push_back({{"group", schema.key_label(g)},
                          {"model_mu", population.model_mu[g]},
                          {"empirical_mean", value_or_null(truth.values[g])},
                          {"n", grouped.groups[g].size()}});
    }
    sidecar["groups"] = groups;
    write_json_file(config, "population_truth.json", sidecar);
}

} // namespace disagg
