#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "panelkit/rank_aggregation.hpp"

namespace panelkit {

struct JudgeConfig {
    std::string endpoint;        // OpenAI-compatible chat-completions base URL
    std::string model;
    double temperature = 0.0;
    int trials = 5;              // independent rankings per question
    int max_concurrent = 4;
    int retries = 3;             // attempts per trial
    int backoff_ms = 100;
    std::string prompt_template; // must contain {question} and {candidates}
    std::string api_key_env = "JUDGE_API_KEY";
    double max_failure_rate = 0.5;

    enum class Mode { live, record, replay };
    Mode mode = Mode::live;
    std::string transcript_path; // record/replay cache

    void validate() const;
    nlohmann::json to_json() const;
    static JudgeConfig from_json(const nlohmann::json& j);
    static JudgeConfig load(const std::string& path);
};

/// Default listwise ranking prompt; candidates are labeled with neutral
/// letters and the judge answers with 1-based position numbers.
std::string default_prompt_template();

struct QuestionCandidates {
    std::string question_id;
    std::string question;
    std::vector<std::pair<std::string, std::string>> candidates; // (item_id, text)
};

std::vector<QuestionCandidates> load_questions(const std::string& path);

/// Uniform presentation permutation: result[p] = canonical candidate index
/// shown at display position p. Deterministic per seed.
std::vector<int> randomize_order(int m, std::uint64_t seed);

/// Strict parser: a JSON array of m distinct 1-based indices (best first),
/// optionally wrapped as {"ranking": [...]}. Anything else is rejected.
std::vector<int> parse_judgment(const std::string& raw, int m);

struct JudgeTrial {
    std::string question_id;
    int trial = 0;
    std::vector<int> presentation; // canonical index shown at each position
    std::string raw;               // last response body
    std::optional<Ranking> ranking;
    std::string status; // "ok", "parse_error", "transport_error"
    int attempts = 0;
};

struct CollectionManifest {
    std::size_t questions = 0;
    int trials_per_question = 0;
    std::size_t successes = 0;
    std::size_t parse_failures = 0;
    std::size_t transport_failures = 0;
    std::uint64_t master_seed = 0;
    nlohmann::json to_json() const;
};

struct CollectResult {
    std::vector<Ranking> rankings;
    std::vector<JudgeTrial> trials;
    CollectionManifest manifest;
};

/// Runs trials*questions judge calls (bounded concurrency), randomizing the
/// presentation order per (master_seed, question, trial). In record mode the
/// raw responses are written to the transcript; replay reads them back and
/// produces byte-identical rankings without touching the network.
CollectResult collect(const JudgeConfig& config,
                      const std::vector<QuestionCandidates>& questions,
                      std::uint64_t master_seed);

} // namespace panelkit
