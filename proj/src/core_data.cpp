#include "disagg/core_data.hpp"

#include "disagg/error.hpp"

#include <set>
#include <unordered_map>

namespace disagg {

AttributeSchema::AttributeSchema(std::vector<Attribute> attributes)
    : attributes_(std::move(attributes)) {
    if (attributes_.empty()) {
        fail(ErrorKind::schema, "schema must declare at least one attribute");
    }
    group_count_ = 1;
    label_index_.resize(attributes_.size());
    for (std::size_t i = 0; i < attributes_.size(); ++i) {
        const auto& attr = attributes_[i];
        if (attr.domain.empty()) {
            fail(ErrorKind::schema, "attribute '" + attr.name + "' has an empty domain");
        }
        for (std::size_t v = 0; v < attr.domain.size(); ++v) {
            if (!label_index_[i].emplace(attr.domain[v], v).second) {
                fail(ErrorKind::schema, "attribute '" + attr.name +
                                            "' repeats label '" + attr.domain[v] + "'");
            }
        }
        group_count_ *= attr.domain.size();
    }

    // Lexicographic enumeration: the last attribute varies fastest.
    keys_.reserve(group_count_);
    GroupKey key(attributes_.size());
    std::vector<std::size_t> digits(attributes_.size(), 0);
    for (std::size_t g = 0; g < group_count_; ++g) {
        for (std::size_t i = 0; i < attributes_.size(); ++i) {
            key[i] = attributes_[i].domain[digits[i]];
        }
        keys_.push_back(key);
        for (std::size_t i = attributes_.size(); i-- > 0;) {
            if (++digits[i] < attributes_[i].domain.size()) break;
            digits[i] = 0;
        }
    }
}

std::optional<std::size_t> AttributeSchema::group_index(const GroupKey& key) const {
    if (key.size() != attributes_.size()) return std::nullopt;
    std::size_t index = 0;
    for (std::size_t i = 0; i < attributes_.size(); ++i) {
        const auto it = label_index_[i].find(key[i]);
        if (it == label_index_[i].end()) return std::nullopt;
        index = index * attributes_[i].domain.size() + it->second;
    }
    return index;
}

std::optional<std::size_t> AttributeSchema::attribute_index(const std::string& name) const {
    for (std::size_t i = 0; i < attributes_.size(); ++i) {
        if (attributes_[i].name == name) return i;
    }
    return std::nullopt;
}

std::string AttributeSchema::key_label(std::size_t index) const {
    const GroupKey& key = keys_[index];
    std::string out;
    for (std::size_t i = 0; i < key.size(); ++i) {
        if (i > 0) out += '|';
        out += key[i];
    }
    return out;
}

GroupedDataset stratify(const std::vector<EvalRecord>& records,
                        const AttributeSchema& schema) {
    GroupedDataset out;
    out.schema = &schema;
    out.groups.resize(schema.group_count());
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto index = schema.group_index(records[r].attrs);
        if (!index) {
            std::string detail = "record " + std::to_string(r) + ": ";
            if (records[r].attrs.size() != schema.attribute_count()) {
                detail += "expected " + std::to_string(schema.attribute_count()) +
                          " attribute values, got " + std::to_string(records[r].attrs.size());
            } else {
                for (std::size_t i = 0; i < records[r].attrs.size(); ++i) {
                    const auto& attr = schema.attributes()[i];
                    bool known = false;
                    for (const auto& label : attr.domain) {
                        if (label == records[r].attrs[i]) { known = true; break; }
                    }
                    if (!known) {
                        detail += "unknown label '" + records[r].attrs[i] +
                                  "' for attribute '" + attr.name + "'";
                        break;
                    }
                }
            }
            fail(ErrorKind::schema, "stratify: " + detail);
        }
        out.groups[*index].push_back(records[r]);
    }
    return out;
}

std::vector<EvalRecord> aggregate_to_units(const std::vector<EvalRecord>& records,
                                           const std::string& unit_id_field) {
    struct UnitAccumulator {
        EvalRecord first;
        std::size_t count = 0;
        double value_sum = 0.0;
        double outcome_sum = 0.0;
        double prediction_sum = 0.0;
        bool all_outcome = true;
        bool all_prediction = true;
        std::map<std::string, double> covariate_sums;
    };

    std::vector<double> unit_order;
    std::unordered_map<double, UnitAccumulator> units;

    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        const auto id_it = rec.covariates.find(unit_id_field);
        if (id_it == rec.covariates.end()) {
            fail(ErrorKind::data, "aggregate_to_units: record " + std::to_string(r) +
                                      " lacks unit id covariate '" + unit_id_field + "'");
        }
        if (!rec.record_value) {
            fail(ErrorKind::data, "aggregate_to_units: record " + std::to_string(r) +
                                      " lacks record_value");
        }
        const double id = id_it->second;
        auto [it, inserted] = units.try_emplace(id);
        UnitAccumulator& acc = it->second;
        if (inserted) {
            unit_order.push_back(id);
            acc.first = rec;
        } else if (acc.first.attrs != rec.attrs) {
            fail(ErrorKind::data, "aggregate_to_units: conflicting attrs within unit id " +
                                      std::to_string(id));
        }
        ++acc.count;
        acc.value_sum += *rec.record_value;
        if (rec.outcome) acc.outcome_sum += *rec.outcome; else acc.all_outcome = false;
        if (rec.prediction) acc.prediction_sum += *rec.prediction; else acc.all_prediction = false;
        for (const auto& [name, value] : rec.covariates) acc.covariate_sums[name] += value;
    }

    std::vector<EvalRecord> out;
    out.reserve(unit_order.size());
    for (const double id : unit_order) {
        UnitAccumulator& acc = units.at(id);
        EvalRecord rec;
        rec.attrs = acc.first.attrs;
        rec.record_value = acc.value_sum / static_cast<double>(acc.count);
        if (acc.all_outcome) rec.outcome = acc.outcome_sum / static_cast<double>(acc.count);
        if (acc.all_prediction) rec.prediction = acc.prediction_sum / static_cast<double>(acc.count);
        for (const auto& [name, sum] : acc.covariate_sums) {
            rec.covariates[name] = sum / static_cast<double>(acc.count);
        }
        rec.covariates[unit_id_field] = id;  // keep the id exact, not averaged
        out.push_back(std::move(rec));
    }
    return out;
}

} // namespace disagg
