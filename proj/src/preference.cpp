#include "panelkit/preference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "panelkit/errors.hpp"
#include "panelkit/rng.hpp"

namespace panelkit {

using nlohmann::json;

namespace {

bool is_placeholder(const std::string& text) { return text == kPlaceholderText; }

// Chosen candidate of a turn: explicit chosen marker wins, otherwise the
// highest score with ties broken by candidate order. Placeholder candidates
// are not eligible.
int selected_candidate(const ConversationTurn& turn) {
    int chosen = -1;
    for (std::size_t c = 0; c < turn.candidates.size(); ++c) {
        if (is_placeholder(turn.candidates[c].text)) continue;
        if (turn.candidates[c].chosen.value_or(false)) {
            chosen = static_cast<int>(c);
            break;
        }
    }
    if (chosen >= 0) return chosen;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < turn.candidates.size(); ++c) {
        if (is_placeholder(turn.candidates[c].text)) continue;
        if (turn.candidates[c].score > best) {
            best = turn.candidates[c].score;
            chosen = static_cast<int>(c);
        }
    }
    return chosen;
}

} // namespace

Context reconstruct_context(const ConversationRecord& conv, int t) {
    if (t < 0 || t >= static_cast<int>(conv.turns.size())) {
        throw DataError("turn index " + std::to_string(t) + " out of range in thread " +
                        conv.thread_id);
    }
    Context ctx;
    for (int prior = 0; prior < t; ++prior) {
        const ConversationTurn& turn = conv.turns[static_cast<std::size_t>(prior)];
        if (turn.candidates.empty()) {
            throw DataError("turn " + std::to_string(prior) + " of thread " + conv.thread_id +
                            " has no candidates");
        }
        if (is_placeholder(turn.user_message)) continue;
        const int sel = selected_candidate(turn);
        if (sel < 0) continue; // every candidate was a placeholder
        ctx.messages.push_back({"user", turn.user_message});
        ctx.messages.push_back({"assistant", turn.candidates[static_cast<std::size_t>(sel)].text});
    }
    const ConversationTurn& current = conv.turns[static_cast<std::size_t>(t)];
    if (!is_placeholder(current.user_message)) {
        ctx.messages.push_back({"user", current.user_message});
    }
    if (ctx.messages.empty() || ctx.messages.back().role != "user") {
        throw DataError("context empty after placeholder filtering (thread " + conv.thread_id +
                        ", turn " + std::to_string(t) + ")");
    }
    return ctx;
}

std::vector<PreferencePair> extract_pairs(const ConversationRecord& conv, double delta) {
    if (delta < 0.0) throw ConfigError("delta must be >= 0");
    std::vector<PreferencePair> out;
    for (int t = 0; t < static_cast<int>(conv.turns.size()); ++t) {
        const ConversationTurn& turn = conv.turns[static_cast<std::size_t>(t)];
        std::vector<int> usable;
        for (std::size_t c = 0; c < turn.candidates.size(); ++c) {
            if (!is_placeholder(turn.candidates[c].text)) usable.push_back(static_cast<int>(c));
        }
        if (usable.size() < 2) continue;

        Context ctx; // reconstructed once per turn that produces pairs
        bool have_ctx = false;
        for (int a : usable) {
            for (int b : usable) {
                if (a == b) continue;
                const double gap = turn.candidates[static_cast<std::size_t>(a)].score -
                                   turn.candidates[static_cast<std::size_t>(b)].score;
                if (!(gap > delta)) continue;
                if (!have_ctx) {
                    ctx = reconstruct_context(conv, t);
                    have_ctx = true;
                }
                PreferencePair pair;
                pair.context = ctx;
                pair.preferred = turn.candidates[static_cast<std::size_t>(a)].text;
                pair.rejected = turn.candidates[static_cast<std::size_t>(b)].text;
                pair.rater_id = conv.rater_id;
                pair.thread_id = conv.thread_id;
                pair.turn_index = t;
                pair.score_gap = gap;
                out.push_back(std::move(pair));
            }
        }
    }
    return out;
}

std::vector<PreferencePair> extract_pairs(const std::vector<ConversationRecord>& convs,
                                          double delta) {
    std::vector<PreferencePair> out;
    for (const auto& conv : convs) {
        auto pairs = extract_pairs(conv, delta);
        out.insert(out.end(), std::make_move_iterator(pairs.begin()),
                   std::make_move_iterator(pairs.end()));
    }
    return out;
}

std::map<std::string, int> rater_counts(const std::vector<PreferencePair>& pairs) {
    std::map<std::string, int> counts;
    for (const auto& p : pairs) counts[p.rater_id]++;
    return counts;
}

WeightKind weight_kind_from_string(const std::string& s) {
    if (s == "identity") return WeightKind::identity;
    if (s == "clipped") return WeightKind::clipped;
    if (s == "normalized") return WeightKind::normalized;
    throw ConfigError("unknown weight kind: " + s);
}

std::string to_string(WeightKind k) {
    switch (k) {
    case WeightKind::identity: return "identity";
    case WeightKind::clipped: return "clipped";
    case WeightKind::normalized: return "normalized";
    }
    return "identity";
}

ConditionSpec::Kind ConditionSpec::kind_from_string(const std::string& s) {
    if (s == "full") return Kind::full;
    if (s == "us_rep") return Kind::us_rep;
    if (s == "hard") return Kind::hard;
    if (s == "soft") return Kind::soft;
    throw ConfigError("unknown condition: " + s);
}

std::string ConditionSpec::kind_to_string(Kind k) {
    switch (k) {
    case Kind::full: return "full";
    case Kind::us_rep: return "us_rep";
    case Kind::hard: return "hard";
    case Kind::soft: return "soft";
    }
    return "full";
}

namespace {

double apply_weight_fn(WeightKind kind, double c_max, double pi, double pi_total) {
    switch (kind) {
    case WeightKind::identity: return pi;
    case WeightKind::clipped: return std::min(pi, c_max);
    case WeightKind::normalized: return pi_total > 0 ? pi / pi_total : 0.0;
    }
    return pi;
}

} // namespace

ConditionDataset build_condition_dataset(const std::vector<PreferencePair>& pairs,
                                         const ConditionSpec& spec, const RaterPool* pool) {
    ConditionDataset ds;
    ds.scheme.f_kind = spec.f_kind;
    ds.scheme.c_max = spec.c_max;

    switch (spec.kind) {
    case ConditionSpec::Kind::full:
        ds.pairs = pairs;
        break;
    case ConditionSpec::Kind::us_rep: {
        if (pool == nullptr) throw ConfigError("us_rep condition requires the rater pool");
        for (const auto& p : pairs) {
            const int idx = pool->index_of(p.rater_id);
            if (idx < 0) continue;
            if (pool->records[static_cast<std::size_t>(idx)].us_rep.value_or(false)) {
                ds.pairs.push_back(p);
            }
        }
        break;
    }
    case ConditionSpec::Kind::hard: {
        std::set<std::string> members(spec.panel.member_ids.begin(), spec.panel.member_ids.end());
        for (const auto& p : pairs) {
            if (members.count(p.rater_id)) ds.pairs.push_back(p);
        }
        break;
    }
    case ConditionSpec::Kind::soft: {
        for (const auto& p : pairs) {
            auto it = spec.pi.pi.find(p.rater_id);
            if (it == spec.pi.pi.end()) {
                throw DataError("soft condition: rater " + p.rater_id +
                                " has no inclusion probability");
            }
            if (it->second > 0.0) ds.pairs.push_back(p);
        }
        break;
    }
    }
    if (ds.pairs.empty()) {
        throw DataError("condition '" + ConditionSpec::kind_to_string(spec.kind) +
                        "' produced an empty dataset");
    }

    ds.scheme.counts = rater_counts(ds.pairs);
    double pi_total = 0.0;
    if (spec.kind == ConditionSpec::Kind::soft) {
        for (const auto& [id, p] : spec.pi.pi) pi_total += p;
    }
    for (const auto& [id, n] : ds.scheme.counts) {
        (void)n;
        if (spec.kind == ConditionSpec::Kind::soft) {
            ds.scheme.w[id] = apply_weight_fn(spec.f_kind, spec.c_max, spec.pi.at(id), pi_total);
        } else {
            ds.scheme.w[id] = 1.0;
        }
    }

    ds.manifest.condition = ConditionSpec::kind_to_string(spec.kind);
    ds.manifest.pair_count = ds.pairs.size();
    ds.manifest.rater_count = ds.scheme.counts.size();
    double wmin = std::numeric_limits<double>::infinity(), wmax = 0.0, wsum = 0.0;
    for (const auto& [id, w] : ds.scheme.w) {
        wmin = std::min(wmin, w);
        wmax = std::max(wmax, w);
        wsum += w;
    }
    ds.manifest.weight_min = wmin;
    ds.manifest.weight_max = wmax;
    ds.manifest.weight_mean = wsum / static_cast<double>(ds.scheme.w.size());
    ds.manifest.pairs_hash = pairs_hash(ds.pairs);
    return ds;
}

std::vector<double> per_example_weights(const std::vector<PreferencePair>& pairs,
                                        const WeightScheme& scheme) {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        auto wit = scheme.w.find(p.rater_id);
        auto nit = scheme.counts.find(p.rater_id);
        if (wit == scheme.w.end() || nit == scheme.counts.end()) {
            throw DataError("rater " + p.rater_id + " missing from weight scheme");
        }
        out.push_back(wit->second / static_cast<double>(nit->second));
    }
    return out;
}

std::vector<std::size_t> resample_to_budget(std::size_t pair_count, int steps, int batch_size,
                                            std::uint64_t seed) {
    if (pair_count == 0) throw DataError("cannot resample an empty dataset");
    if (steps < 1 || batch_size < 1) throw ConfigError("steps and batch_size must be >= 1");
    Rng rng(derive_seed(seed, {0x627564676574ull}));
    std::vector<std::size_t> stream(static_cast<std::size_t>(steps) *
                                    static_cast<std::size_t>(batch_size));
    for (auto& s : stream) s = rng.index(pair_count);
    return stream;
}

std::vector<std::size_t> resample_by_rater(const std::vector<PreferencePair>& pairs,
                                           const WeightScheme& scheme, int steps, int batch_size,
                                           std::uint64_t seed) {
    if (pairs.empty()) throw DataError("cannot resample an empty dataset");
    if (steps < 1 || batch_size < 1) throw ConfigError("steps and batch_size must be >= 1");

    std::vector<std::string> raters;
    std::vector<double> cumulative;
    double total = 0.0;
    std::map<std::string, std::vector<std::size_t>> by_rater;
    for (std::size_t i = 0; i < pairs.size(); ++i) by_rater[pairs[i].rater_id].push_back(i);
    for (const auto& [id, idxs] : by_rater) {
        (void)idxs;
        auto wit = scheme.w.find(id);
        if (wit == scheme.w.end()) throw DataError("rater " + id + " missing from weight scheme");
        total += wit->second;
        raters.push_back(id);
        cumulative.push_back(total);
    }
    if (total <= 0.0) throw DataError("all rater weights are zero");

    Rng rng(derive_seed(seed, {0x726174657273ull}));
    std::vector<std::size_t> stream(static_cast<std::size_t>(steps) *
                                    static_cast<std::size_t>(batch_size));
    for (auto& s : stream) {
        const double u = rng.unit() * total;
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        const std::size_t r = std::min(static_cast<std::size_t>(it - cumulative.begin()),
                                       raters.size() - 1);
        const auto& idxs = by_rater[raters[r]];
        s = idxs[rng.index(idxs.size())];
    }
    return stream;
}

json pair_to_json(const PreferencePair& pair) {
    json j;
    json ctx = json::array();
    for (const auto& m : pair.context.messages) {
        ctx.push_back(json{{"role", m.role}, {"text", m.text}});
    }
    j["context"] = std::move(ctx);
    j["preferred"] = pair.preferred;
    j["rejected"] = pair.rejected;
    j["rater_id"] = pair.rater_id;
    j["thread_id"] = pair.thread_id;
    j["turn_index"] = pair.turn_index;
    j["score_gap"] = pair.score_gap;
    return j;
}

PreferencePair pair_from_json(const json& j) {
    PreferencePair pair;
    try {
        for (const auto& m : j.at("context")) {
            pair.context.messages.push_back(
                {m.at("role").get<std::string>(), m.at("text").get<std::string>()});
        }
        pair.preferred = j.at("preferred").get<std::string>();
        pair.rejected = j.at("rejected").get<std::string>();
        pair.rater_id = j.at("rater_id").get<std::string>();
        pair.thread_id = j.at("thread_id").get<std::string>();
        pair.turn_index = j.at("turn_index").get<int>();
        pair.score_gap = j.at("score_gap").get<double>();
    } catch (const json::exception& e) {
        throw DataError(std::string("pair parse failure: ") + e.what());
    }
    return pair;
}

std::string pairs_hash(const std::vector<PreferencePair>& pairs) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& p : pairs) {
        const std::string line = pair_to_json(p).dump();
        h = splitmix64(h ^ fnv1a64(line));
    }
    std::ostringstream os;
    os << "fnv1a:" << std::hex << h;
    return os.str();
}

json DatasetManifest::to_json() const {
    json j;
    j["condition"] = condition;
    j["pair_count"] = pair_count;
    j["rater_count"] = rater_count;
    j["weight_min"] = weight_min;
    j["weight_max"] = weight_max;
    j["weight_mean"] = weight_mean;
    j["seed"] = seed;
    j["pairs_hash"] = pairs_hash;
    return j;
}

DatasetManifest DatasetManifest::from_json(const json& j) {
    DatasetManifest m;
    try {
        m.condition = j.at("condition").get<std::string>();
        m.pair_count = j.at("pair_count").get<std::size_t>();
        m.rater_count = j.at("rater_count").get<std::size_t>();
        m.weight_min = j.at("weight_min").get<double>();
        m.weight_max = j.at("weight_max").get<double>();
        m.weight_mean = j.at("weight_mean").get<double>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.pairs_hash = j.at("pairs_hash").get<std::string>();
    } catch (const json::exception& e) {
        throw DataError(std::string("manifest parse failure: ") + e.what());
    }
    return m;
}

DatasetManifest export_dataset(const ConditionDataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    const std::vector<double> omegas = per_example_weights(dataset.pairs, dataset.scheme);
    for (std::size_t i = 0; i < dataset.pairs.size(); ++i) {
        json j = pair_to_json(dataset.pairs[i]);
        j["weight"] = omegas[i];
        out << j.dump() << "\n";
    }
    out.flush();
    if (!out) throw DataError("write failure: " + path);

    DatasetManifest manifest = dataset.manifest;
    manifest.pair_count = dataset.pairs.size();
    std::ofstream mout(path + ".manifest.json");
    if (!mout) throw DataError("cannot open for writing: " + path + ".manifest.json");
    mout << manifest.to_json().dump(2) << "\n";
    if (!mout) throw DataError("write failure: " + path + ".manifest.json");
    return manifest;
}

ConditionDataset import_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset: " + path);
    ConditionDataset ds;
    std::map<std::string, double> rater_weight_sum;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("dataset parse failure at line " + std::to_string(line_no) + ": " +
                            e.what());
        }
        ds.pairs.push_back(pair_from_json(j));
        rater_weight_sum[ds.pairs.back().rater_id] += j.at("weight").get<double>();
    }
    if (ds.pairs.empty()) throw DataError("dataset is empty: " + path);

    ds.scheme.counts = rater_counts(ds.pairs);
    // Reconstruct w_i from the conservation identity sum_b omega_b = w_i.
    for (const auto& [id, sum] : rater_weight_sum) ds.scheme.w[id] = sum;

    std::ifstream min(path + ".manifest.json");
    if (min) {
        json j;
        min >> j;
        ds.manifest = DatasetManifest::from_json(j);
        if (ds.manifest.pair_count != ds.pairs.size()) {
            throw DataError("manifest pair count does not match dataset " + path);
        }
    } else {
        ds.manifest.pair_count = ds.pairs.size();
        ds.manifest.rater_count = ds.scheme.counts.size();
        ds.manifest.pairs_hash = pairs_hash(ds.pairs);
    }
    return ds;
}

namespace {

ConversationRecord conversation_from_json(const json& j) {
    ConversationRecord conv;
    conv.thread_id = j.at("thread_id").get<std::string>();
    conv.rater_id = j.at("rater_id").get<std::string>();
    for (const auto& jt : j.at("turns")) {
        ConversationTurn turn;
        turn.user_message = jt.at("user_message").get<std::string>();
        for (const auto& jc : jt.at("candidates")) {
            Candidate cand;
            cand.text = jc.at("text").get<std::string>();
            cand.score = jc.at("score").get<double>();
            if (jc.contains("chosen")) cand.chosen = jc.at("chosen").get<bool>();
            turn.candidates.push_back(std::move(cand));
        }
        conv.turns.push_back(std::move(turn));
    }
    return conv;
}

json conversation_to_json(const ConversationRecord& conv) {
    json j;
    j["thread_id"] = conv.thread_id;
    j["rater_id"] = conv.rater_id;
    json turns = json::array();
    for (const auto& t : conv.turns) {
        json jt;
        jt["user_message"] = t.user_message;
        json cands = json::array();
        for (const auto& c : t.candidates) {
            json jc;
            jc["text"] = c.text;
            jc["score"] = c.score;
            if (c.chosen.has_value()) jc["chosen"] = *c.chosen;
            cands.push_back(std::move(jc));
        }
        jt["candidates"] = std::move(cands);
        turns.push_back(std::move(jt));
    }
    j["turns"] = std::move(turns);
    return j;
}

} // namespace

std::vector<ConversationRecord> load_conversations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open conversations: " + path);
    std::vector<ConversationRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(conversation_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw DataError("conversation parse failure at line " + std::to_string(line_no) +
                            ": " + e.what());
        }
    }
    return out;
}

void save_conversations(const std::vector<ConversationRecord>& convs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    for (const auto& c : convs) out << conversation_to_json(c).dump() << "\n";
    if (!out) throw DataError("write failure: " + path);
}

std::vector<PreferencePair> load_pairs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open pairs: " + path);
    std::vector<PreferencePair> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(pair_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw DataError("pairs parse failure at line " + std::to_string(line_no) + ": " +
                            e.what());
        }
    }
    return out;
}

void save_pairs(const std::vector<PreferencePair>& pairs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    for (const auto& p : pairs) out << pair_to_json(p).dump() << "\n";
    if (!out) throw DataError("write failure: " + path);
}

} // namespace panelkit
