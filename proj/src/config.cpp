#include "disagg/config.hpp"

#include "disagg/error.hpp"

#include <json.hpp>

#include <fstream>

namespace disagg {

namespace {

using nlohmann::json;

template <typename T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

template <typename T>
void read_optional(const json& j, const char* key, std::optional<T>& out) {
    if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

std::vector<Attribute> parse_schema(const json& j) {
    std::vector<Attribute> attributes;
    if (!j.contains("attributes") || !j.at("attributes").is_array()) {
        fail(ErrorKind::config, "schema.attributes must be an array");
    }
    for (const auto& a : j.at("attributes")) {
        Attribute attr;
        attr.name = a.at("name").get<std::string>();
        attr.domain = a.at("domain").get<std::vector<std::string>>();
        attributes.push_back(std::move(attr));
    }
    return attributes;
}

FeatureSpec parse_features(const json& j) {
    FeatureSpec spec;
    read_if(j, "group_identity", spec.group_identity);
    read_if(j, "attribute_indicators", spec.attribute_indicators);
    read_if(j, "indicator_attributes", spec.indicator_attributes);
    read_if(j, "explanatory", spec.explanatory);
    read_if(j, "outcome_rates", spec.outcome_rates);
    if (j.contains("interactions")) {
        for (const auto& pair : j.at("interactions")) {
            if (!pair.is_array() || pair.size() != 2) {
                fail(ErrorKind::config, "features.interactions entries must be [left, right]");
            }
            spec.interactions.emplace_back(pair.at(0).get<std::string>(),
                                           pair.at(1).get<std::string>());
        }
    }
    return spec;
}

SynthModelSpec parse_custom_model(const json& j) {
    SynthModelSpec spec;
    spec.name = j.value("name", std::string("custom"));
    spec.intercept = j.at("intercept").get<double>();
    if (j.contains("terms")) {
        for (const auto& t : j.at("terms")) {
            spec.terms.push_back({t.at("coefficient").get<double>(),
                                  t.at("column").get<std::string>()});
        }
    }
    const std::string emission = j.value("emission", std::string("bernoulli"));
    if (emission == "bernoulli") {
        spec.emission = SynthModelSpec::Emission::bernoulli;
    } else if (emission == "normal") {
        spec.emission = SynthModelSpec::Emission::normal;
        spec.normal_sd = j.value("normal_sd", 0.1);
    } else {
        fail(ErrorKind::config, "unknown emission: " + emission);
    }
    return spec;
}

SynthConfig parse_synth(const json& j) {
    SynthConfig synth;
    read_if(j, "model", synth.model);
    std::int64_t size = static_cast<std::int64_t>(synth.size);
    read_if(j, "size", size);
    if (size < 0) fail(ErrorKind::config, "synth.size must be non-negative");
    synth.size = static_cast<std::size_t>(size);
    read_if(j, "group_shares", synth.group_shares);
    read_if(j, "diagnoses_mean_by_age", synth.diagnoses_mean_by_age);
    if (j.contains("custom")) synth.custom = parse_custom_model(j.at("custom"));
    return synth;
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t hash = 1469598103934665603ULL;
    for (const unsigned char c : text) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return hash;
}

json effective_config_json(const RunConfig& c) {
    json j;
    j["input"] = c.input;
    json attrs = json::array();
    for (const auto& a : c.schema_attributes) {
        attrs.push_back({{"name", a.name}, {"domain", a.domain}});
    }
    j["schema"] = attrs;
    j["columns"] = {{"outcome", c.columns.outcome ? json(*c.columns.outcome) : json()},
                    {"prediction", c.columns.prediction ? json(*c.columns.prediction) : json()},
                    {"record_value",
                     c.columns.record_value ? json(*c.columns.record_value) : json()},
                    {"covariates", c.columns.covariates}};
    j["aggregate_units"] = c.aggregate_units ? json(*c.aggregate_units) : json();
    json metrics = json::array();
    for (const auto& m : c.metrics) {
        json entry = {{"name", m.name}, {"positive_label", m.positive_label},
                      {"auc_half_tie_credit", m.auc_half_tie_credit}};
        if (m.threshold) entry["threshold"] = *m.threshold;
        if (m.calibrate_fraction) entry["calibrate_fraction"] = *m.calibrate_fraction;
        metrics.push_back(entry);
    }
    j["metrics"] = metrics;
    j["estimators"] = c.estimators;
    j["ci_methods"] = c.ci_methods;
    j["ci_levels"] = c.ci_levels;
    j["features"] = {{"group_identity", c.features.group_identity},
                     {"attribute_indicators", c.features.attribute_indicators},
                     {"indicator_attributes", c.features.indicator_attributes},
                     {"explanatory", c.features.explanatory},
                     {"outcome_rates", c.features.outcome_rates},
                     {"interactions", c.features.interactions}};
    json models = json::array();
    for (const auto& m : c.gof.models) {
        models.push_back({{"name", m.name}, {"columns", m.columns}});
    }
    j["gof"] = {{"models", models}, {"ladder", c.gof.ladder}};
    j["benchmark"] = {{"input", c.benchmark.input ? json(*c.benchmark.input) : json()},
                      {"draws", c.benchmark.draws},
                      {"sample_size", c.benchmark.sample_size},
                      {"small_group_max", c.benchmark.small_group_max},
                      {"synth_model", c.benchmark.synth.model},
                      {"synth_size", c.benchmark.synth.size},
                      {"synth_shares", c.benchmark.synth.group_shares}};
    j["synth"] = {{"model", c.synth.model},
                  {"size", c.synth.size},
                  {"group_shares", c.synth.group_shares},
                  {"diagnoses_mean_by_age", c.synth.diagnoses_mean_by_age}};
    j["hyperparameters"] = {{"variance_bootstrap", c.hyper.variance_bootstrap},
                            {"percentile_bootstrap", c.hyper.percentile_bootstrap},
                            {"rblpr_bootstrap", c.hyper.rblpr_bootstrap},
                            {"cv_folds", c.hyper.cv_folds},
                            {"lambda_grid_size", c.hyper.lambda_grid_size},
                            {"lambda_grid_min_ratio", c.hyper.lambda_grid_min_ratio},
                            {"lambda_ridge", c.hyper.lambda_ridge},
                            {"lasso_tolerance", c.hyper.lasso_tolerance},
                            {"lasso_max_sweeps", c.hyper.lasso_max_sweeps},
                            {"fixed_lambda",
                             c.hyper.fixed_lambda ? json(*c.hyper.fixed_lambda) : json()}};
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    j["format"] = c.format;
    return j;
}

} // namespace

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::config, "cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        fail(ErrorKind::config, std::string("config parse error: ") + e.what());
    }

    RunConfig c;
    try {
        read_if(j, "input", c.input);
        if (j.contains("schema")) c.schema_attributes = parse_schema(j.at("schema"));
        if (j.contains("columns")) {
            const auto& cols = j.at("columns");
            read_optional(cols, "outcome", c.columns.outcome);
            read_optional(cols, "prediction", c.columns.prediction);
            read_optional(cols, "record_value", c.columns.record_value);
            read_if(cols, "covariates", c.columns.covariates);
        }
        read_optional(j, "aggregate_units", c.aggregate_units);
        if (j.contains("metrics")) {
            for (const auto& m : j.at("metrics")) {
                MetricSpec spec;
                spec.name = m.at("name").get<std::string>();
                read_optional(m, "threshold", spec.threshold);
                read_optional(m, "calibrate_fraction", spec.calibrate_fraction);
                read_if(m, "positive_label", spec.positive_label);
                read_if(m, "auc_half_tie_credit", spec.auc_half_tie_credit);
                c.metrics.push_back(std::move(spec));
            }
        }
        read_if(j, "estimators", c.estimators);
        if (c.estimators.empty()) c.estimators = {"standard", "sr", "js", "eb"};
        if (j.contains("ci")) {
            read_if(j.at("ci"), "methods", c.ci_methods);
            read_if(j.at("ci"), "levels", c.ci_levels);
        }
        if (j.contains("features")) c.features = parse_features(j.at("features"));
        if (j.contains("gof")) {
            const auto& g = j.at("gof");
            if (g.contains("models")) {
                for (const auto& m : g.at("models")) {
                    GofModelSpec spec;
                    spec.name = m.at("name").get<std::string>();
                    read_if(m, "columns", spec.columns);
                    c.gof.models.push_back(std::move(spec));
                }
            }
            if (g.contains("ladder")) {
                for (const auto& pair : g.at("ladder")) {
                    c.gof.ladder.emplace_back(pair.at(0).get<std::string>(),
                                              pair.at(1).get<std::string>());
                }
            }
        }
        if (j.contains("benchmark")) {
            const auto& b = j.at("benchmark");
            read_optional(b, "input", c.benchmark.input);
            read_if(b, "draws", c.benchmark.draws);
            std::int64_t sample_size = static_cast<std::int64_t>(c.benchmark.sample_size);
            read_if(b, "sample_size", sample_size);
            c.benchmark.sample_size = static_cast<std::size_t>(sample_size);
            std::int64_t small_max = static_cast<std::int64_t>(c.benchmark.small_group_max);
            read_if(b, "small_group_max", small_max);
            c.benchmark.small_group_max = static_cast<std::size_t>(small_max);
            if (b.contains("synth")) c.benchmark.synth = parse_synth(b.at("synth"));
        }
        if (j.contains("synth")) c.synth = parse_synth(j.at("synth"));
        if (j.contains("hyperparameters")) {
            const auto& h = j.at("hyperparameters");
            read_if(h, "variance_bootstrap", c.hyper.variance_bootstrap);
            read_if(h, "percentile_bootstrap", c.hyper.percentile_bootstrap);
            read_if(h, "rblpr_bootstrap", c.hyper.rblpr_bootstrap);
            read_if(h, "cv_folds", c.hyper.cv_folds);
            read_if(h, "lambda_grid_size", c.hyper.lambda_grid_size);
            read_if(h, "lambda_grid_min_ratio", c.hyper.lambda_grid_min_ratio);
            read_if(h, "lambda_ridge", c.hyper.lambda_ridge);
            read_if(h, "lasso_tolerance", c.hyper.lasso_tolerance);
            read_if(h, "lasso_max_sweeps", c.hyper.lasso_max_sweeps);
            read_optional(h, "fixed_lambda", c.hyper.fixed_lambda);
        }
        read_if(j, "seed", c.seed);
        read_if(j, "output_dir", c.output_dir);
        read_if(j, "format", c.format);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        fail(ErrorKind::config, std::string("config error: ") + e.what());
    }

    if (c.format != "csv" && c.format != "json" && c.format != "both") {
        fail(ErrorKind::config, "format must be csv, json, or both");
    }
    refresh_config_hash(c);
    return c;
}

void apply_overrides(RunConfig& config, const ConfigOverrides& overrides) {
    if (overrides.output_dir) config.output_dir = *overrides.output_dir;
    if (overrides.seed) config.seed = *overrides.seed;
    if (overrides.format) {
        if (*overrides.format != "csv" && *overrides.format != "json" &&
            *overrides.format != "both") {
            fail(ErrorKind::config, "format must be csv, json, or both");
        }
        config.format = *overrides.format;
    }
    refresh_config_hash(config);
}

void refresh_config_hash(RunConfig& config) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(effective_config_json(config).dump())));
    config.config_hash = buf;
}

} // namespace disagg
