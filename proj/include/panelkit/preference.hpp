#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "panelkit/demographics.hpp"
#include "panelkit/sortition.hpp"

namespace panelkit {

struct Candidate {
    std::string text;
    double score = 0.0;
    std::optional<bool> chosen;
};

struct ConversationTurn {
    std::string user_message;
    std::vector<Candidate> candidates;
};

struct ConversationRecord {
    std::string thread_id;
    std::string rater_id;
    std::vector<ConversationTurn> turns;
};

struct Message {
    std::string role; // "user" or "assistant"
    std::string text;
};

struct Context {
    std::vector<Message> messages; // alternating, starts and ends with user
};

struct PreferencePair {
    Context context;
    std::string preferred;
    std::string rejected;
    std::string rater_id;
    std::string thread_id;
    int turn_index = 0;
    double score_gap = 0.0;
};

/// History up to turn t: per prior turn the user message plus the chosen
/// response (falling back to the highest-scoring one, ties broken by
/// candidate order), then the turn-t user message. Turns whose user message
/// or selected response is the placeholder are dropped whole.
Context reconstruct_context(const ConversationRecord& conv, int t);

/// All ordered candidate pairs per turn with score(preferred) -
/// score(rejected) strictly greater than delta.
std::vector<PreferencePair> extract_pairs(const ConversationRecord& conv, double delta);
std::vector<PreferencePair> extract_pairs(const std::vector<ConversationRecord>& convs,
                                          double delta);

std::map<std::string, int> rater_counts(const std::vector<PreferencePair>& pairs);

enum class WeightKind { identity, clipped, normalized };

WeightKind weight_kind_from_string(const std::string& s);
std::string to_string(WeightKind k);

struct WeightScheme {
    WeightKind f_kind = WeightKind::identity;
    double c_max = 1.0;                 // clipped only
    std::map<std::string, double> w;    // per-rater weight, f(pi_i)
    std::map<std::string, int> counts;  // per-rater pair count N_i
};

struct DatasetManifest {
    std::string condition;
    std::size_t pair_count = 0;
    std::size_t rater_count = 0;
    double weight_min = 0.0;
    double weight_max = 0.0;
    double weight_mean = 0.0;
    std::uint64_t seed = 0;
    std::string pairs_hash; // fnv1a64 over the serialized pair lines

    nlohmann::json to_json() const;
    static DatasetManifest from_json(const nlohmann::json& j);
};

struct ConditionSpec {
    enum class Kind { full, us_rep, hard, soft };
    Kind kind = Kind::full;
    Panel panel;        // hard
    InclusionProbs pi;  // soft
    WeightKind f_kind = WeightKind::identity;
    double c_max = 1.0;

    static Kind kind_from_string(const std::string& s);
    static std::string kind_to_string(Kind k);
};

struct ConditionDataset {
    std::vector<PreferencePair> pairs;
    WeightScheme scheme;
    DatasetManifest manifest;
};

/// Filters pairs per the training condition and computes per-rater weights
/// w_i and counts N_i on the retained pairs. `pool` supplies the us_rep
/// flags and is only required for that condition.
ConditionDataset build_condition_dataset(const std::vector<PreferencePair>& pairs,
                                         const ConditionSpec& spec,
                                         const RaterPool* pool = nullptr);

/// Per-pair weight w_{r_b} / N_{r_b}.
std::vector<double> per_example_weights(const std::vector<PreferencePair>& pairs,
                                        const WeightScheme& scheme);

/// Exactly steps*batch_size indices drawn i.i.d. uniformly with replacement.
std::vector<std::size_t> resample_to_budget(std::size_t pair_count, int steps, int batch_size,
                                            std::uint64_t seed);

/// Alternative sampler: rater proportional to w_i, then one of the rater's
/// pairs uniformly.
std::vector<std::size_t> resample_by_rater(const std::vector<PreferencePair>& pairs,
                                           const WeightScheme& scheme, int steps, int batch_size,
                                           std::uint64_t seed);

nlohmann::json pair_to_json(const PreferencePair& pair);
PreferencePair pair_from_json(const nlohmann::json& j);

/// JSON-lines export with per-pair weights plus a manifest written to
/// path + ".manifest.json"; re-import reproduces the dataset exactly.
DatasetManifest export_dataset(const ConditionDataset& dataset, const std::string& path);
ConditionDataset import_dataset(const std::string& path);

std::vector<ConversationRecord> load_conversations(const std::string& path);
void save_conversations(const std::vector<ConversationRecord>& convs, const std::string& path);
std::vector<PreferencePair> load_pairs(const std::string& path);
void save_pairs(const std::vector<PreferencePair>& pairs, const std::string& path);

/// Hash of the canonical pair serialization (manifest integrity field).
std::string pairs_hash(const std::vector<PreferencePair>& pairs);

} // namespace panelkit
