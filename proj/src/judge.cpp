#include "panelkit/judge.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <httplib.h>

#include "panelkit/errors.hpp"
#include "panelkit/rng.hpp"

namespace panelkit {

using nlohmann::json;

void JudgeConfig::validate() const {
    if (trials < 1) throw ConfigError("judge trials must be >= 1");
    if (temperature < 0.0) throw ConfigError("judge temperature must be >= 0");
    if (max_concurrent < 1) throw ConfigError("max_concurrent must be >= 1");
    if (retries < 1) throw ConfigError("retries must be >= 1");
    if (mode != Mode::replay && endpoint.empty()) throw ConfigError("judge endpoint is empty");
    if (prompt_template.find("{question}") == std::string::npos ||
        prompt_template.find("{candidates}") == std::string::npos) {
        throw ConfigError("prompt template must contain {question} and {candidates}");
    }
    if (mode != Mode::live && transcript_path.empty()) {
        throw ConfigError("record/replay mode requires a transcript path");
    }
}

std::string default_prompt_template() {
    return "You are ranking candidate answers to a question.\n"
           "Question: {question}\n\n"
           "Candidate responses:\n{candidates}\n"
           "Rank all responses from best to worst. Answer with only a JSON array of the\n"
           "response numbers in ranked order, best first, where 1 refers to response A,\n"
           "2 to response B, and so on. Example: [2,1,3]";
}

json JudgeConfig::to_json() const {
    json j;
    j["endpoint"] = endpoint;
    j["model"] = model;
    j["temperature"] = temperature;
    j["trials"] = trials;
    j["max_concurrent"] = max_concurrent;
    j["retries"] = retries;
    j["backoff_ms"] = backoff_ms;
    j["prompt_template"] = prompt_template;
    j["api_key_env"] = api_key_env;
    j["max_failure_rate"] = max_failure_rate;
    j["mode"] = mode == Mode::live ? "live" : mode == Mode::record ? "record" : "replay";
    j["transcript_path"] = transcript_path;
    return j;
}

JudgeConfig JudgeConfig::from_json(const json& j) {
    JudgeConfig c;
    try {
        c.endpoint = j.value("endpoint", "");
        c.model = j.value("model", "judge");
        c.temperature = j.value("temperature", 0.0);
        c.trials = j.value("trials", 5);
        c.max_concurrent = j.value("max_concurrent", 4);
        c.retries = j.value("retries", 3);
        c.backoff_ms = j.value("backoff_ms", 100);
        c.prompt_template = j.value("prompt_template", default_prompt_template());
        c.api_key_env = j.value("api_key_env", "JUDGE_API_KEY");
        c.max_failure_rate = j.value("max_failure_rate", 0.5);
        const std::string mode = j.value("mode", "live");
        if (mode == "live") {
            c.mode = Mode::live;
        } else if (mode == "record") {
            c.mode = Mode::record;
        } else if (mode == "replay") {
            c.mode = Mode::replay;
        } else {
            throw ConfigError("unknown judge mode: " + mode);
        }
        c.transcript_path = j.value("transcript_path", "");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("judge config: ") + e.what());
    }
    c.validate();
    return c;
}

JudgeConfig JudgeConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open judge config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("judge config parse failure: " + std::string(e.what()));
    }
    return from_json(j);
}

std::vector<QuestionCandidates> load_questions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open questions: " + path);
    std::vector<QuestionCandidates> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            QuestionCandidates q;
            q.question_id = j.at("question_id").get<std::string>();
            q.question = j.at("question").get<std::string>();
            for (const auto& jc : j.at("candidates")) {
                q.candidates.emplace_back(jc.at("item_id").get<std::string>(),
                                          jc.at("text").get<std::string>());
            }
            out.push_back(std::move(q));
        } catch (const json::exception& e) {
            throw DataError("questions parse failure at line " + std::to_string(line_no) + ": " +
                            e.what());
        }
    }
    return out;
}

std::vector<int> randomize_order(int m, std::uint64_t seed) {
    if (m < 2) throw ConfigError("randomize_order needs at least two items");
    std::vector<int> perm(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) perm[static_cast<std::size_t>(i)] = i;
    Rng rng(seed);
    rng.shuffle(perm);
    return perm;
}

std::vector<int> parse_judgment(const std::string& raw, int m) {
    json j;
    try {
        j = json::parse(raw);
    } catch (const json::exception&) {
        throw DataError("judgment is not valid JSON");
    }
    if (j.is_object()) {
        if (!j.contains("ranking")) throw DataError("judgment object lacks 'ranking'");
        j = j.at("ranking");
    }
    if (!j.is_array()) throw DataError("judgment is not a JSON array");
    if (static_cast<int>(j.size()) != m) {
        throw DataError("judgment has length " + std::to_string(j.size()) + ", expected " +
                        std::to_string(m));
    }
    std::vector<int> order;
    std::set<int> seen;
    for (const auto& v : j) {
        if (!v.is_number_integer()) throw DataError("judgment entry is not an integer");
        const int idx = v.get<int>();
        if (idx < 1 || idx > m) throw DataError("judgment index out of range: " + std::to_string(idx));
        if (!seen.insert(idx).second) throw DataError("judgment repeats index " + std::to_string(idx));
        order.push_back(idx);
    }
    return order;
}

namespace {

std::string candidate_block(const QuestionCandidates& q, const std::vector<int>& presentation) {
    std::string block;
    for (std::size_t p = 0; p < presentation.size(); ++p) {
        const char label = static_cast<char>('A' + p);
        block += label;
        block += ". ";
        block += q.candidates[static_cast<std::size_t>(presentation[p])].second;
        block += "\n";
    }
    return block;
}

std::string substitute(std::string tmpl, const std::string& slot, const std::string& value) {
    const auto at = tmpl.find(slot);
    if (at != std::string::npos) tmpl.replace(at, slot.size(), value);
    return tmpl;
}

std::string build_prompt(const JudgeConfig& config, const QuestionCandidates& q,
                         const std::vector<int>& presentation) {
    std::string prompt = substitute(config.prompt_template, "{question}", q.question);
    return substitute(std::move(prompt), "{candidates}", candidate_block(q, presentation));
}

// Canonical ranking from a parsed judgment: parsed entries are 1-based
// display positions, presentation maps positions to canonical indices.
Ranking to_ranking(const QuestionCandidates& q, int trial, const std::vector<int>& presentation,
                   const std::vector<int>& parsed) {
    Ranking r;
    r.question_id = q.question_id;
    r.trial_id = trial;
    for (int pos : parsed) {
        r.order.push_back(q.candidates[static_cast<std::size_t>(presentation[static_cast<std::size_t>(pos - 1)])].first);
    }
    for (int idx : presentation) {
        r.presented.push_back(q.candidates[static_cast<std::size_t>(idx)].first);
    }
    return r;
}

struct Transcript {
    // (question_id, trial) -> raw body of the last attempt
    std::map<std::pair<std::string, int>, std::string> entries;

    static Transcript load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open transcript: " + path);
        Transcript t;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j = json::parse(line);
            t.entries[{j.at("question_id").get<std::string>(), j.at("trial").get<int>()}] =
                j.at("raw").get<std::string>();
        }
        return t;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw DataError("cannot open transcript for writing: " + path);
        for (const auto& [key, raw] : entries) {
            json j;
            j["question_id"] = key.first;
            j["trial"] = key.second;
            j["raw"] = raw;
            out << j.dump() << "\n";
        }
    }
};

struct HttpJudge {
    const JudgeConfig& config;
    httplib::Client client;

    explicit HttpJudge(const JudgeConfig& cfg) : config(cfg), client(cfg.endpoint) {
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(60, 0);
        const char* key = std::getenv(config.api_key_env.c_str());
        if (key != nullptr && key[0] != '\0') {
            client.set_default_headers({{"Authorization", std::string("Bearer ") + key}});
        }
    }

    // One POST; returns the assistant message content. Throws NetworkError
    // on transport/HTTP failure, DataError on a malformed envelope.
    std::string ask(const std::string& prompt) {
        json body;
        body["model"] = config.model;
        body["temperature"] = config.temperature;
        body["messages"] = json::array({json{{"role", "user"}, {"content", prompt}}});
        auto res = client.Post("/v1/chat/completions", body.dump(), "application/json");
        if (!res) throw NetworkError("judge endpoint unreachable");
        if (res->status >= 500) {
            throw NetworkError("judge endpoint returned " + std::to_string(res->status));
        }
        if (res->status != 200) {
            throw DataError("judge endpoint returned " + std::to_string(res->status) + ": " +
                            res->body);
        }
        try {
            json j = json::parse(res->body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            throw DataError("malformed chat-completion envelope: " + std::string(e.what()));
        }
    }
};

JudgeTrial run_trial(const JudgeConfig& config, const QuestionCandidates& q, int trial,
                     std::uint64_t master_seed, HttpJudge* http, const Transcript* replay) {
    JudgeTrial out;
    out.question_id = q.question_id;
    out.trial = trial;
    const std::uint64_t seed =
        derive_seed(master_seed, {fnv1a64(q.question_id), static_cast<std::uint64_t>(trial)});
    out.presentation = randomize_order(static_cast<int>(q.candidates.size()), seed);

    const int m = static_cast<int>(q.candidates.size());
    if (replay != nullptr) {
        auto it = replay->entries.find({q.question_id, trial});
        if (it == replay->entries.end()) {
            out.status = "transport_error";
            out.attempts = 0;
            return out;
        }
        out.raw = it->second;
        out.attempts = 1;
        try {
            out.ranking = to_ranking(q, trial, out.presentation, parse_judgment(out.raw, m));
            out.status = "ok";
        } catch (const DataError&) {
            out.status = "parse_error";
        }
        return out;
    }

    const std::string prompt = build_prompt(config, q, out.presentation);
    for (int attempt = 1; attempt <= config.retries; ++attempt) {
        out.attempts = attempt;
        try {
            out.raw = http->ask(prompt);
            out.ranking = to_ranking(q, trial, out.presentation, parse_judgment(out.raw, m));
            out.status = "ok";
            return out;
        } catch (const NetworkError&) {
            out.status = "transport_error";
        } catch (const DataError&) {
            out.status = "parse_error";
        }
        if (attempt < config.retries && config.backoff_ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(
                static_cast<long>(config.backoff_ms) * (1L << (attempt - 1))));
        }
    }
    return out;
}

} // namespace

nlohmann::json CollectionManifest::to_json() const {
    json j;
    j["questions"] = questions;
    j["trials_per_question"] = trials_per_question;
    j["successes"] = successes;
    j["parse_failures"] = parse_failures;
    j["transport_failures"] = transport_failures;
    j["master_seed"] = master_seed;
    return j;
}

CollectResult collect(const JudgeConfig& config,
                      const std::vector<QuestionCandidates>& questions,
                      std::uint64_t master_seed) {
    config.validate();
    for (const auto& q : questions) {
        if (q.candidates.size() < 2) {
            throw DataError("question " + q.question_id + " has fewer than two candidates");
        }
    }

    std::optional<Transcript> replay;
    if (config.mode == JudgeConfig::Mode::replay) replay = Transcript::load(config.transcript_path);

    std::optional<HttpJudge> http;
    if (config.mode != JudgeConfig::Mode::replay) http.emplace(config);

    struct Task {
        std::size_t question;
        int trial;
    };
    std::vector<Task> tasks;
    for (std::size_t qi = 0; qi < questions.size(); ++qi) {
        for (int t = 0; t < config.trials; ++t) tasks.push_back({qi, t});
    }

    std::vector<JudgeTrial> trials(tasks.size());
    std::atomic<std::size_t> next_task{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next_task.fetch_add(1);
            if (i >= tasks.size()) return;
            const Task& task = tasks[i];
            trials[i] = run_trial(config, questions[task.question], task.trial, master_seed,
                                  http.has_value() ? &*http : nullptr,
                                  replay.has_value() ? &*replay : nullptr);
        }
    };
    const int n_workers = std::min<int>(config.max_concurrent, static_cast<int>(tasks.size()));
    std::vector<std::thread> workers;
    workers.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) workers.emplace_back(worker);
    for (auto& w : workers) w.join();

    CollectResult result;
    result.trials = std::move(trials);
    result.manifest.questions = questions.size();
    result.manifest.trials_per_question = config.trials;
    result.manifest.master_seed = master_seed;
    for (const auto& t : result.trials) {
        if (t.status == "ok") {
            result.rankings.push_back(*t.ranking);
            ++result.manifest.successes;
        } else if (t.status == "parse_error") {
            ++result.manifest.parse_failures;
        } else {
            ++result.manifest.transport_failures;
        }
    }

    if (config.mode == JudgeConfig::Mode::record) {
        Transcript transcript;
        for (const auto& t : result.trials) {
            if (!t.raw.empty()) transcript.entries[{t.question_id, t.trial}] = t.raw;
        }
        transcript.save(config.transcript_path);
    }

    const double failure_rate =
        1.0 - static_cast<double>(result.manifest.successes) / static_cast<double>(tasks.size());
    if (failure_rate > config.max_failure_rate) {
        throw NetworkError("judge collection failure rate " + std::to_string(failure_rate) +
                           " exceeds the configured threshold");
    }
    return result;
}

} // namespace panelkit
