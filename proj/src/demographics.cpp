#include "panelkit/demographics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "panelkit/errors.hpp"

namespace panelkit {

using nlohmann::json;

void AttributeSchema::validate() const {
    std::set<std::string> names;
    for (const auto& attr : attributes) {
        if (attr.name.empty()) throw ConfigError("attribute with empty name");
        if (!names.insert(attr.name).second) {
            throw ConfigError("duplicate attribute name: " + attr.name);
        }
        if (attr.categories.empty()) {
            throw ConfigError("attribute '" + attr.name + "' has no categories");
        }
        std::set<std::string> cats;
        for (const auto& c : attr.categories) {
            if (!cats.insert(c).second) {
                throw ConfigError("duplicate category '" + c + "' in attribute '" + attr.name + "'");
            }
        }
        for (const auto& s : attr.slack_categories) {
            if (!cats.count(s)) {
                throw ConfigError("slack category '" + s + "' not declared in attribute '" +
                                  attr.name + "'");
            }
        }
    }
}

int AttributeSchema::attribute_index(std::string_view name) const {
    for (std::size_t i = 0; i < attributes.size(); ++i) {
        if (attributes[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

int AttributeSchema::category_index(int attr, std::string_view name) const {
    const auto& cats = attributes[static_cast<std::size_t>(attr)].categories;
    for (std::size_t i = 0; i < cats.size(); ++i) {
        if (cats[i] == name) return static_cast<int>(i);
    }
    return -1;
}

bool AttributeSchema::is_slack(int attr, int cat) const {
    const auto& a = attributes[static_cast<std::size_t>(attr)];
    return a.slack_categories.count(a.categories[static_cast<std::size_t>(cat)]) > 0;
}

int AttributeSchema::slack_fallback(int attr) const {
    const auto& a = attributes[static_cast<std::size_t>(attr)];
    for (std::size_t i = 0; i < a.categories.size(); ++i) {
        if (a.slack_categories.count(a.categories[i])) return static_cast<int>(i);
    }
    return -1;
}

void PopulationTargets::validate(const AttributeSchema& schema) const {
    if (proportions.size() != schema.attributes.size()) {
        throw ConfigError("targets do not cover every schema attribute");
    }
    for (std::size_t t = 0; t < proportions.size(); ++t) {
        const auto& attr = schema.attributes[t];
        if (proportions[t].size() != attr.categories.size()) {
            throw ConfigError("targets for attribute '" + attr.name +
                              "' do not cover every category");
        }
        double sum = 0.0;
        for (double p : proportions[t]) {
            if (!(p >= 0.0 && p <= 1.0)) {
                throw ConfigError("proportion out of [0,1] in attribute '" + attr.name + "'");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-6) {
            std::ostringstream os;
            os << "proportions for attribute '" << attr.name << "' sum to " << sum
               << ", expected 1 within 1e-6";
            throw ConfigError(os.str());
        }
    }
}

TargetsConfig TargetsConfig::from_json(const json& j) {
    TargetsConfig cfg;
    try {
        cfg.k = j.at("k").get<int>();
        cfg.tau = j.at("tau").get<double>();
        for (const auto& ja : j.at("attributes")) {
            AttributeSchema::Attribute attr;
            attr.name = ja.at("name").get<std::string>();
            std::vector<double> props;
            for (const auto& jc : ja.at("categories")) {
                attr.categories.push_back(jc.at("name").get<std::string>());
                props.push_back(jc.at("proportion").get<double>());
                if (jc.value("slack", false)) {
                    attr.slack_categories.insert(attr.categories.back());
                }
            }
            cfg.schema.attributes.push_back(std::move(attr));
            cfg.targets.proportions.push_back(std::move(props));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("targets config: ") + e.what());
    }
    if (cfg.k < 1) throw ConfigError("targets config: k must be >= 1");
    if (!(cfg.tau >= 0.0 && cfg.tau < 1.0)) throw ConfigError("targets config: tau must be in [0,1)");
    cfg.schema.validate();
    cfg.targets.validate(cfg.schema);
    return cfg;
}

json TargetsConfig::to_json() const {
    json j;
    j["k"] = k;
    j["tau"] = tau;
    json attrs = json::array();
    for (std::size_t t = 0; t < schema.attributes.size(); ++t) {
        const auto& a = schema.attributes[t];
        json ja;
        ja["name"] = a.name;
        json cats = json::array();
        for (std::size_t c = 0; c < a.categories.size(); ++c) {
            json jc;
            jc["name"] = a.categories[c];
            jc["proportion"] = targets.proportions[t][c];
            if (a.slack_categories.count(a.categories[c])) jc["slack"] = true;
            cats.push_back(std::move(jc));
        }
        ja["categories"] = std::move(cats);
        attrs.push_back(std::move(ja));
    }
    j["attributes"] = std::move(attrs);
    return j;
}

TargetsConfig TargetsConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open targets config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("targets config parse failure in " + path + ": " + e.what());
    }
    return from_json(j);
}

std::string TargetsConfig::canonical_text() const { return to_json().dump(2) + "\n"; }

PopulationTargets load_population_targets(const std::string& path,
                                          const AttributeSchema& schema) {
    TargetsConfig cfg = TargetsConfig::load(path);
    // The config declares its own schema; require it to match the caller's.
    if (cfg.schema.attributes.size() != schema.attributes.size()) {
        throw ConfigError("targets config schema does not match expected schema");
    }
    for (std::size_t t = 0; t < schema.attributes.size(); ++t) {
        const auto& want = schema.attributes[t];
        const auto& got = cfg.schema.attributes[t];
        if (want.name != got.name || want.categories != got.categories ||
            want.slack_categories != got.slack_categories) {
            throw ConfigError("targets config attribute '" + got.name +
                              "' does not match expected schema");
        }
    }
    return cfg.targets;
}

void RaterPool::rebuild_index() {
    id_to_index_.clear();
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto [it, inserted] = id_to_index_.emplace(records[i].rater_id, static_cast<int>(i));
        if (!inserted) throw DataError("duplicate rater_id: " + records[i].rater_id);
    }
}

int RaterPool::index_of(std::string_view rater_id) const {
    auto it = id_to_index_.find(std::string(rater_id));
    return it == id_to_index_.end() ? -1 : it->second;
}

const RaterRecord& RaterPool::by_id(std::string_view rater_id) const {
    int i = index_of(rater_id);
    if (i < 0) throw DataError("unknown rater_id: " + std::string(rater_id));
    return records[static_cast<std::size_t>(i)];
}

std::string RaterPool::attribute_key(int record_index) const {
    const auto& rec = records[static_cast<std::size_t>(record_index)];
    std::string key;
    for (int v : rec.attribute_values) {
        key += std::to_string(v);
        key += '|';
    }
    return key;
}

RaterPool load_rater_pool(const std::string& survey_path,
                          const std::set<std::string>& raters_with_pairs,
                          const AttributeSchema& schema) {
    std::ifstream in(survey_path);
    if (!in) throw DataError("cannot open survey file: " + survey_path);

    RaterPool pool;
    pool.schema = schema;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("survey parse failure at line " + std::to_string(line_no) + ": " +
                            e.what());
        }
        RaterRecord rec;
        if (!j.contains("rater_id")) {
            throw DataError("survey line " + std::to_string(line_no) + " missing rater_id");
        }
        rec.rater_id = j.at("rater_id").get<std::string>();
        if (!raters_with_pairs.count(rec.rater_id)) continue;

        for (std::size_t t = 0; t < schema.attributes.size(); ++t) {
            const auto& attr = schema.attributes[t];
            if (!j.contains(attr.name)) {
                throw DataError("rater " + rec.rater_id + " missing attribute '" + attr.name + "'");
            }
            std::string value = j.at(attr.name).get<std::string>();
            if (value == kPlaceholderText) {
                int fallback = schema.slack_fallback(static_cast<int>(t));
                if (fallback < 0) {
                    throw DataError("rater " + rec.rater_id + " has placeholder value for '" +
                                    attr.name + "' and the attribute has no slack category");
                }
                rec.attribute_values.push_back(fallback);
                continue;
            }
            int cat = schema.category_index(static_cast<int>(t), value);
            if (cat < 0) {
                throw DataError("rater " + rec.rater_id + " has unknown category '" + value +
                                "' for attribute '" + attr.name + "'");
            }
            rec.attribute_values.push_back(cat);
        }
        if (j.contains("locale")) rec.locale = j.at("locale").get<std::string>();
        if (j.contains("us_rep")) rec.us_rep = j.at("us_rep").get<bool>();
        rec.has_preference_data = true;
        pool.records.push_back(std::move(rec));
    }
    if (pool.records.empty()) {
        throw DataError("rater pool is empty after filtering to raters with preference data");
    }
    pool.rebuild_index();
    return pool;
}

const QuotaBound* QuotaSpec::find(int attr, int cat) const {
    for (const auto& b : bounds) {
        if (b.attr == attr && b.cat == cat) return &b;
    }
    return nullptr;
}

namespace {
// floor/ceil with near-integer snapping: k*p*(1±tau) computed in floating
// point can land epsilon above/below the exact integer.
int floor_snapped(double x) { return static_cast<int>(std::floor(x + 1e-9)); }
int ceil_snapped(double x) { return static_cast<int>(std::ceil(x - 1e-9)); }
} // namespace

QuotaSpec quota_bounds(const PopulationTargets& targets, const AttributeSchema& schema,
                       int k, double tau) {
    if (k < 1) throw ConfigError("quota_bounds: k must be >= 1");
    if (!(tau >= 0.0 && tau < 1.0)) throw ConfigError("quota_bounds: tau must be in [0,1)");
    targets.validate(schema);

    QuotaSpec spec;
    spec.k = k;
    for (std::size_t t = 0; t < schema.attributes.size(); ++t) {
        for (std::size_t c = 0; c < schema.attributes[t].categories.size(); ++c) {
            if (schema.is_slack(static_cast<int>(t), static_cast<int>(c))) continue;
            const double p = targets.at(static_cast<int>(t), static_cast<int>(c));
            int lower = floor_snapped(k * p * (1.0 - tau));
            int upper = ceil_snapped(k * p * (1.0 + tau));
            lower = std::clamp(lower, 0, k);
            upper = std::clamp(upper, 0, k);
            spec.bounds.push_back({static_cast<int>(t), static_cast<int>(c), lower, upper});
        }
    }
    return spec;
}

} // namespace panelkit
