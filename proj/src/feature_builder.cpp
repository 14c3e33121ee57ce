#include "disagg/feature_builder.hpp"

#include "disagg/error.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace disagg {

namespace {

std::string format_label(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

} // namespace

std::optional<std::size_t> FeatureMatrix::column_index(const std::string& name) const {
    for (std::size_t j = 0; j < columns.size(); ++j) {
        if (columns[j].name == name) return j;
    }
    return std::nullopt;
}

std::vector<std::size_t> FeatureMatrix::match_columns(const std::string& pattern) const {
    std::vector<std::size_t> out;
    if (!pattern.empty() && pattern.back() == '*') {
        const std::string prefix = pattern.substr(0, pattern.size() - 1);
        for (std::size_t j = 0; j < columns.size(); ++j) {
            if (columns[j].name.rfind(prefix, 0) == 0) out.push_back(j);
        }
    } else if (const auto j = column_index(pattern)) {
        out.push_back(*j);
    }
    return out;
}

FeatureMatrix build_features(const GroupedDataset& grouped, const FeatureSpec& spec) {
    if (grouped.schema == nullptr) fail(ErrorKind::param, "build_features: missing schema");
    const AttributeSchema& schema = *grouped.schema;
    const std::size_t n_groups = schema.group_count();
    if (grouped.total() == 0) fail(ErrorKind::data, "build_features: dataset is empty");

    FeatureMatrix out;
    std::vector<std::vector<double>> cols;

    auto add_column = [&](std::string name, FeatureType type, std::vector<double> values) {
        out.columns.push_back({std::move(name), type});
        cols.push_back(std::move(values));
    };

    // Group-identity indicators.
    if (spec.group_identity) {
        for (std::size_t g = 0; g < n_groups; ++g) {
            std::vector<double> col(n_groups, 0.0);
            col[g] = 1.0;
            add_column("grp:" + schema.key_label(g), FeatureType::sensitive, std::move(col));
        }
    }

    // Attribute-value indicators.
    if (spec.attribute_indicators || !spec.indicator_attributes.empty()) {
        std::vector<std::size_t> which;
        if (spec.indicator_attributes.empty()) {
            for (std::size_t i = 0; i < schema.attribute_count(); ++i) which.push_back(i);
        } else {
            for (const auto& name : spec.indicator_attributes) {
                const auto i = schema.attribute_index(name);
                if (!i) fail(ErrorKind::config, "unknown indicator attribute: " + name);
                which.push_back(*i);
            }
        }
        for (const std::size_t i : which) {
            const Attribute& attr = schema.attributes()[i];
            for (const auto& value : attr.domain) {
                std::vector<double> col(n_groups, 0.0);
                for (std::size_t g = 0; g < n_groups; ++g) {
                    col[g] = schema.group_key(g)[i] == value ? 1.0 : 0.0;
                }
                add_column("attr:" + attr.name + "=" + value, FeatureType::sensitive,
                           std::move(col));
            }
        }
    }

    // Explanatory aggregates: group means, empty groups get the population mean.
    for (const auto& covariate : spec.explanatory) {
        std::vector<double> col(n_groups, 0.0);
        double population_sum = 0.0;
        std::size_t population_count = 0;
        for (std::size_t g = 0; g < n_groups; ++g) {
            double sum = 0.0;
            for (const auto& rec : grouped.groups[g]) {
                const auto it = rec.covariates.find(covariate);
                if (it == rec.covariates.end()) {
                    fail(ErrorKind::data, "build_features: covariate '" + covariate +
                                              "' missing in group " + schema.key_label(g));
                }
                sum += it->second;
            }
            if (!grouped.groups[g].empty()) {
                col[g] = sum / static_cast<double>(grouped.groups[g].size());
                population_sum += sum;
                population_count += grouped.groups[g].size();
            }
        }
        const double population_mean = population_sum / static_cast<double>(population_count);
        for (std::size_t g = 0; g < n_groups; ++g) {
            if (grouped.groups[g].empty()) col[g] = population_mean;
        }
        add_column("expl:" + covariate, FeatureType::explanatory, std::move(col));
    }

    // Outcome-rate columns over the observed outcome domain.
    if (spec.outcome_rates) {
        std::set<double> domain;
        for (const auto& group : grouped.groups) {
            for (const auto& rec : group) {
                if (!rec.outcome) {
                    fail(ErrorKind::data, "build_features: outcome rates need an outcome "
                                          "on every record");
                }
                domain.insert(*rec.outcome);
            }
        }
        for (const double y : domain) {
            std::vector<double> col(n_groups, 0.0);
            std::size_t population_matches = 0;
            for (std::size_t g = 0; g < n_groups; ++g) {
                if (grouped.groups[g].empty()) continue;
                std::size_t matches = 0;
                for (const auto& rec : grouped.groups[g]) matches += (*rec.outcome == y);
                col[g] = static_cast<double>(matches) /
                         static_cast<double>(grouped.groups[g].size());
                population_matches += matches;
            }
            const double population_rate =
                static_cast<double>(population_matches) / static_cast<double>(grouped.total());
            for (std::size_t g = 0; g < n_groups; ++g) {
                if (grouped.groups[g].empty()) col[g] = population_rate;
            }
            add_column("rate:y=" + format_label(y), FeatureType::explanatory, std::move(col));
        }
    }

    // Interactions: products of already-built columns; '*' patterns expand
    // to all pairs.
    auto temp_matrix = [&]() {
        FeatureMatrix m;
        m.columns = out.columns;
        return m;
    };
    const FeatureMatrix built = temp_matrix();
    for (const auto& [left_pattern, right_pattern] : spec.interactions) {
        const auto lefts = built.match_columns(left_pattern);
        const auto rights = built.match_columns(right_pattern);
        if (lefts.empty() || rights.empty()) {
            fail(ErrorKind::config, "interaction operand matches no feature column: " +
                                        (lefts.empty() ? left_pattern : right_pattern));
        }
        for (const std::size_t a : lefts) {
            for (const std::size_t b : rights) {
                std::vector<double> col(n_groups);
                for (std::size_t g = 0; g < n_groups; ++g) col[g] = cols[a][g] * cols[b][g];
                add_column("int:" + out.columns[a].name + "*" + out.columns[b].name,
                           FeatureType::interaction, std::move(col));
            }
        }
    }

    out.values.resize(static_cast<Eigen::Index>(n_groups),
                      static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
        for (std::size_t g = 0; g < n_groups; ++g) {
            out.values(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(j)) = cols[j][g];
        }
    }
    return out;
}

} // namespace disagg
