#pragma once

// Evaluation dataset model: sensitive-attribute schema, per-individual
// records, and stratification into intersectional groups.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace disagg {

// One label per schema attribute, in attribute order.
using GroupKey = std::vector<std::string>;

struct Attribute {
    std::string name;
    std::vector<std::string> domain;  // ordered category labels, unique
};

// Declared sensitive attributes. The group set enumerates the Cartesian
// product of the domains in lexicographic order of (attribute order,
// domain order); unobserved combinations still define groups.
class AttributeSchema {
public:
    explicit AttributeSchema(std::vector<Attribute> attributes);

    std::size_t attribute_count() const { return attributes_.size(); }
    std::size_t group_count() const { return group_count_; }
    const std::vector<Attribute>& attributes() const { return attributes_; }

    const std::vector<GroupKey>& group_keys() const { return keys_; }
    const GroupKey& group_key(std::size_t index) const { return keys_[index]; }

    // Mixed-radix index of a key; nullopt when any label is unknown.
    std::optional<std::size_t> group_index(const GroupKey& key) const;

    std::optional<std::size_t> attribute_index(const std::string& name) const;

    // Joined form used in reports and feature names, e.g. "white|40-60|male".
    std::string key_label(std::size_t index) const;

private:
    std::vector<Attribute> attributes_;
    std::size_t group_count_ = 0;
    std::vector<GroupKey> keys_;
    std::vector<std::map<std::string, std::size_t>> label_index_;
};

struct EvalRecord {
    GroupKey attrs;
    std::optional<double> outcome;       // Y
    std::optional<double> prediction;    // score produced by the system
    std::optional<double> record_value;  // precomputed per-record quantity
    std::map<std::string, double> covariates;
};

// Records partitioned by group. Empty groups are retained so downstream
// estimators can report them as undefined rather than silently drop them.
struct GroupedDataset {
    const AttributeSchema* schema = nullptr;
    std::vector<std::vector<EvalRecord>> groups;  // indexed by group index

    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& g : groups) n += g.size();
        return n;
    }

    std::vector<std::size_t> sizes() const {
        std::vector<std::size_t> out(groups.size());
        for (std::size_t i = 0; i < groups.size(); ++i) out[i] = groups[i].size();
        return out;
    }
};

// Splits records by exact attribute match; within-group order preserved.
// Unknown labels raise a schema error naming the record and attribute.
GroupedDataset stratify(const std::vector<EvalRecord>& records,
                        const AttributeSchema& schema);

// Collapses records sharing a unit-id covariate into one record per unit
// whose record_value is the unweighted mean of the unit's values.
// Units are emitted in order of first appearance; attrs must agree
// within a unit. Covariates (and outcome/prediction when present on all
// of the unit's records) are averaged.
std::vector<EvalRecord> aggregate_to_units(const std::vector<EvalRecord>& records,
                                           const std::string& unit_id_field);

} // namespace disagg
