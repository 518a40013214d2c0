#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace panelkit {

/// Marker value treated as "no answer" in survey and conversation data.
inline constexpr std::string_view kPlaceholderText = "EMPTY STRING";

struct AttributeSchema {
    struct Attribute {
        std::string name;
        std::vector<std::string> categories;       // declared order
        std::set<std::string> slack_categories;    // exempt from quotas
    };
    std::vector<Attribute> attributes;

    void validate() const; // throws ConfigError on duplicate/invalid entries
    int attribute_index(std::string_view name) const;          // -1 if absent
    int category_index(int attr, std::string_view name) const; // -1 if absent
    bool is_slack(int attr, int cat) const;
    /// First declared slack category of an attribute, or -1.
    int slack_fallback(int attr) const;
};

/// Marginal target proportions, aligned with the schema: one proportion per
/// (attribute, category). Sums to 1 per attribute within 1e-6.
struct PopulationTargets {
    std::vector<std::vector<double>> proportions;

    void validate(const AttributeSchema& schema) const;
    double at(int attr, int cat) const { return proportions[attr][cat]; }
};

/// The single human-editable config: schema + targets + panel size + tolerance.
struct TargetsConfig {
    AttributeSchema schema;
    PopulationTargets targets;
    int k = 0;
    double tau = 0.0;

    static TargetsConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    static TargetsConfig load(const std::string& path);
    /// Canonical serialization: loading a canonical file and re-serializing
    /// reproduces it byte for byte.
    std::string canonical_text() const;
};

PopulationTargets load_population_targets(const std::string& path,
                                          const AttributeSchema& schema);

struct RaterRecord {
    std::string rater_id;
    std::vector<int> attribute_values; // category index per schema attribute
    std::optional<std::string> locale;
    std::optional<bool> us_rep;
    bool has_preference_data = false;
};

struct RaterPool {
    AttributeSchema schema;
    std::vector<RaterRecord> records;

    void rebuild_index();
    int index_of(std::string_view rater_id) const; // -1 if absent
    const RaterRecord& by_id(std::string_view rater_id) const;
    /// Key identifying the rater's demographic equivalence class.
    std::string attribute_key(int record_index) const;

  private:
    std::unordered_map<std::string, int> id_to_index_;
};

/// JSON-lines survey loader. Retains exactly the raters listed in
/// `raters_with_pairs`; placeholder attribute values map to the attribute's
/// first slack category when one exists and are rejected otherwise.
RaterPool load_rater_pool(const std::string& survey_path,
                          const std::set<std::string>& raters_with_pairs,
                          const AttributeSchema& schema);

struct QuotaBound {
    int attr = 0;
    int cat = 0;
    int lower = 0;
    int upper = 0;
};

struct QuotaSpec {
    int k = 0;
    std::vector<QuotaBound> bounds; // non-slack categories only

    const QuotaBound* find(int attr, int cat) const;
};

/// Integer quota interval per non-slack category:
///   lower = floor(k*p*(1-tau)), upper = ceil(k*p*(1+tau)), clamped to [0,k].
/// Near-integer products are snapped within 1e-9 before rounding so the
/// interval matches exact arithmetic.
QuotaSpec quota_bounds(const PopulationTargets& targets, const AttributeSchema& schema,
                       int k, double tau);

} // namespace panelkit
