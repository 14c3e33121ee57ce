#pragma once

// Group-level feature matrix for structured regression and GOF models:
// group-identity indicators, attribute-value indicators, explanatory
// aggregates, outcome rates, and pairwise interaction columns.
//
// Column naming convention (stable identifiers used in configs and
// reports):
//   grp:<v1|v2|...>      group-identity indicator
//   attr:<name>=<value>  attribute-value indicator
//   expl:<covariate>     group mean of a covariate
//   rate:y=<label>       fraction of the group with outcome == label
//   int:<colA>*<colB>    elementwise product of two built columns

#include "disagg/core_data.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace disagg {

enum class FeatureType { sensitive, explanatory, interaction };

struct FeatureColumn {
    std::string name;
    FeatureType type = FeatureType::sensitive;
};

struct FeatureSpec {
    bool group_identity = true;
    // Attributes to emit value indicators for; empty list with the flag
    // set means all attributes.
    bool attribute_indicators = true;
    std::vector<std::string> indicator_attributes;
    // Covariates aggregated to group means.
    std::vector<std::string> explanatory;
    // Outcome-rate columns over the outcome values observed in the data.
    bool outcome_rates = false;
    // Pairs of built-column names; a trailing '*' expands by prefix,
    // e.g. {"attr:age=*", "attr:race=*"} yields all age x race products.
    std::vector<std::pair<std::string, std::string>> interactions;
};

struct FeatureMatrix {
    std::vector<FeatureColumn> columns;
    Eigen::MatrixXd values;  // one row per group, schema order

    std::optional<std::size_t> column_index(const std::string& name) const;
    // Names matching an exact name or a trailing-'*' prefix pattern.
    std::vector<std::size_t> match_columns(const std::string& pattern) const;
};

// Builds the matrix over all groups of the schema. Data-derived columns
// (explanatory means, outcome rates) of empty groups are imputed with the
// population-wide value so that model predictions stay defined everywhere.
FeatureMatrix build_features(const GroupedDataset& grouped, const FeatureSpec& spec);

} // namespace disagg
