#include "panelkit/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "panelkit/errors.hpp"
#include "panelkit/rng.hpp"
#include "panelkit/stats.hpp"

namespace panelkit {

using nlohmann::json;

void SyntheticSpec::validate() const {
    schema.validate();
    targets.validate(schema);
    if (pool_size < 2) throw ConfigError("pool_size must be >= 2");
    if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (pairs_per_rater < 1) throw ConfigError("pairs_per_rater must be >= 1");
    if (k < 1 || k > pool_size) throw ConfigError("k must be in [1, pool_size]");
    if (!(tau >= 0.0 && tau < 1.0)) throw ConfigError("tau must be in [0,1)");
    if (us_rep_size < 1 || us_rep_size > pool_size) {
        throw ConfigError("us_rep_size must be in [1, pool_size]");
    }
    if (bias_multipliers.size() != schema.attributes.size() ||
        directions.size() != schema.attributes.size()) {
        throw ConfigError("bias multipliers and directions must cover every attribute");
    }
    for (std::size_t t = 0; t < schema.attributes.size(); ++t) {
        const std::size_t nc = schema.attributes[t].categories.size();
        if (bias_multipliers[t].size() != nc || directions[t].size() != nc) {
            throw ConfigError("bias multipliers and directions must cover every category");
        }
        for (double m : bias_multipliers[t]) {
            if (!(m > 0.0)) throw ConfigError("bias multipliers must be > 0");
        }
        for (const auto& d : directions[t]) {
            if (static_cast<int>(d.size()) != feature_dim) {
                throw ConfigError("direction dimension does not match feature_dim");
            }
        }
    }
}

json SyntheticSpec::to_json() const {
    json j;
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
            jc["bias_multiplier"] = bias_multipliers[t][c];
            jc["direction"] = directions[t][c];
            cats.push_back(std::move(jc));
        }
        ja["categories"] = std::move(cats);
        attrs.push_back(std::move(ja));
    }
    j["attributes"] = std::move(attrs);
    j["pool_size"] = pool_size;
    j["feature_dim"] = feature_dim;
    j["direction_noise"] = direction_noise;
    j["temperature"] = temperature;
    j["pairs_per_rater"] = pairs_per_rater;
    j["k"] = k;
    j["tau"] = tau;
    j["us_rep_size"] = us_rep_size;
    return j;
}

SyntheticSpec SyntheticSpec::from_json(const json& j) {
    SyntheticSpec s;
    try {
        for (const auto& ja : j.at("attributes")) {
            AttributeSchema::Attribute attr;
            attr.name = ja.at("name").get<std::string>();
            std::vector<double> props, mults;
            std::vector<std::vector<double>> dirs;
            for (const auto& jc : ja.at("categories")) {
                attr.categories.push_back(jc.at("name").get<std::string>());
                props.push_back(jc.at("proportion").get<double>());
                mults.push_back(jc.value("bias_multiplier", 1.0));
                dirs.push_back(jc.at("direction").get<std::vector<double>>());
                if (jc.value("slack", false)) attr.slack_categories.insert(attr.categories.back());
            }
            s.schema.attributes.push_back(std::move(attr));
            s.targets.proportions.push_back(std::move(props));
            s.bias_multipliers.push_back(std::move(mults));
            s.directions.push_back(std::move(dirs));
        }
        s.pool_size = j.at("pool_size").get<int>();
        s.feature_dim = j.at("feature_dim").get<int>();
        s.direction_noise = j.at("direction_noise").get<double>();
        s.temperature = j.at("temperature").get<double>();
        s.pairs_per_rater = j.at("pairs_per_rater").get<int>();
        s.k = j.at("k").get<int>();
        s.tau = j.at("tau").get<double>();
        s.us_rep_size = j.at("us_rep_size").get<int>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("synthetic spec: ") + e.what());
    }
    s.validate();
    return s;
}

json TrainSettings::to_json() const {
    json j;
    j["steps"] = steps;
    j["batch_size"] = batch_size;
    j["learning_rate"] = learning_rate;
    j["beta"] = beta;
    j["f_kind"] = to_string(f_kind);
    j["c_max"] = c_max;
    j["rater_sampler"] = rater_sampler;
    return j;
}

TrainSettings TrainSettings::from_json(const json& j) {
    TrainSettings t;
    t.steps = j.value("steps", 400);
    t.batch_size = j.value("batch_size", 16);
    t.learning_rate = j.value("learning_rate", 0.3);
    t.beta = j.value("beta", 1.0);
    t.f_kind = weight_kind_from_string(j.value("f_kind", "identity"));
    t.c_max = j.value("c_max", 1.0);
    t.rater_sampler = j.value("rater_sampler", false);
    if (t.steps < 1 || t.batch_size < 1) throw ConfigError("steps and batch_size must be >= 1");
    if (!(t.beta > 0.0)) throw ConfigError("beta must be > 0");
    return t;
}

namespace {

void normalize(std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (double& x : v) x /= norm;
    }
}

std::vector<double> rater_direction(const SyntheticSpec& spec, const RaterRecord& rec, Rng& rng) {
    std::vector<double> dir(static_cast<std::size_t>(spec.feature_dim), 0.0);
    for (std::size_t t = 0; t < spec.directions.size(); ++t) {
        const auto& g = spec.directions[t][static_cast<std::size_t>(rec.attribute_values[t])];
        for (std::size_t i = 0; i < dir.size(); ++i) dir[i] += g[i];
    }
    normalize(dir);
    for (double& x : dir) x += spec.direction_noise * rng.normal();
    normalize(dir);
    return dir;
}

std::string feature_text(const std::vector<double>& phi) {
    json j = phi;
    return j.dump();
}

// Greedy stratified subsample of the given size: repeatedly add the rater
// that most reduces the L1 gap between subset marginals and the targets.
std::vector<int> stratified_subsample(const RaterPool& pool, const PopulationTargets& targets,
                                      int size, Rng& rng) {
    const auto& schema = pool.schema;
    std::vector<int> order(pool.records.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    std::vector<std::vector<int>> counts(schema.attributes.size());
    for (std::size_t t = 0; t < schema.attributes.size(); ++t) {
        counts[t].assign(schema.attributes[t].categories.size(), 0);
    }
    std::vector<bool> taken(pool.records.size(), false);
    std::vector<int> subset;

    auto gap_after = [&](const RaterRecord& rec, int subset_size) {
        double gap = 0.0;
        for (std::size_t t = 0; t < counts.size(); ++t) {
            for (std::size_t c = 0; c < counts[t].size(); ++c) {
                int n = counts[t][c];
                if (static_cast<std::size_t>(rec.attribute_values[t]) == c) ++n;
                gap += std::abs(static_cast<double>(n) / (subset_size + 1) -
                                targets.at(static_cast<int>(t), static_cast<int>(c)));
            }
        }
        return gap;
    };

    for (int s = 0; s < size; ++s) {
        int best = -1;
        double best_gap = std::numeric_limits<double>::infinity();
        for (int i : order) {
            if (taken[static_cast<std::size_t>(i)]) continue;
            const double g = gap_after(pool.records[static_cast<std::size_t>(i)], s);
            if (g < best_gap - 1e-12) {
                best_gap = g;
                best = i;
            }
        }
        if (best < 0) break;
        taken[static_cast<std::size_t>(best)] = true;
        subset.push_back(best);
        const auto& rec = pool.records[static_cast<std::size_t>(best)];
        for (std::size_t t = 0; t < counts.size(); ++t) {
            counts[t][static_cast<std::size_t>(rec.attribute_values[t])]++;
        }
    }
    return subset;
}

} // namespace

SyntheticPool generate_synthetic_pool(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(derive_seed(seed, {0x706f6f6cull}));

    SyntheticPool out;
    out.pool.schema = spec.schema;

    // Per-attribute biased sampling distribution.
    std::vector<std::vector<double>> cdf(spec.schema.attributes.size());
    for (std::size_t t = 0; t < cdf.size(); ++t) {
        double total = 0.0;
        for (std::size_t c = 0; c < spec.targets.proportions[t].size(); ++c) {
            total += spec.targets.proportions[t][c] * spec.bias_multipliers[t][c];
            cdf[t].push_back(total);
        }
        if (!(total > 0.0)) throw ConfigError("biased category distribution is empty");
        for (double& v : cdf[t]) v /= total;
    }

    for (int i = 0; i < spec.pool_size; ++i) {
        RaterRecord rec;
        std::ostringstream id;
        id << "r" << std::setw(4) << std::setfill('0') << i;
        rec.rater_id = id.str();
        for (std::size_t t = 0; t < cdf.size(); ++t) {
            const double u = rng.unit();
            int cat = 0;
            while (cat + 1 < static_cast<int>(cdf[t].size()) &&
                   u >= cdf[t][static_cast<std::size_t>(cat)]) {
                ++cat;
            }
            rec.attribute_values.push_back(cat);
        }
        rec.has_preference_data = true;
        out.pool.records.push_back(std::move(rec));
    }
    out.pool.rebuild_index();

    for (auto& rec : out.pool.records) {
        Rng dir_rng(derive_seed(seed, {0x646972ull, fnv1a64(rec.rater_id)}));
        out.rater_directions[rec.rater_id] = rater_direction(spec, rec, dir_rng);
    }

    // Mark the stratified representative subsample.
    Rng strat_rng(derive_seed(seed, {0x7573726570ull}));
    for (int i : stratified_subsample(out.pool, spec.targets, spec.us_rep_size, strat_rng)) {
        out.pool.records[static_cast<std::size_t>(i)].us_rep = true;
    }
    return out;
}

std::vector<ConversationRecord> generate_synthetic_conversations(const SyntheticPool& pool,
                                                                 const SyntheticSpec& spec,
                                                                 std::uint64_t seed) {
    std::vector<ConversationRecord> out;
    for (const auto& rec : pool.pool.records) {
        const auto& dir = pool.rater_directions.at(rec.rater_id);
        Rng rng(derive_seed(seed, {0x70616972ull, fnv1a64(rec.rater_id)}));
        for (int p = 0; p < spec.pairs_per_rater; ++p) {
            std::vector<double> x1(static_cast<std::size_t>(spec.feature_dim));
            std::vector<double> x2(static_cast<std::size_t>(spec.feature_dim));
            for (auto& v : x1) v = rng.normal();
            for (auto& v : x2) v = rng.normal();
            double margin = 0.0;
            for (std::size_t i = 0; i < x1.size(); ++i) margin += dir[i] * (x1[i] - x2[i]);
            const double p_first = 1.0 / (1.0 + std::exp(-margin / spec.temperature));
            const bool first_preferred = rng.unit() < p_first;

            ConversationRecord conv;
            conv.rater_id = rec.rater_id;
            conv.thread_id = rec.rater_id + "-t" + std::to_string(p);
            ConversationTurn turn;
            turn.user_message = "synthetic comparison " + std::to_string(p);
            turn.candidates.push_back({feature_text(x1), first_preferred ? 1.0 : 0.0, std::nullopt});
            turn.candidates.push_back({feature_text(x2), first_preferred ? 0.0 : 1.0, std::nullopt});
            conv.turns.push_back(std::move(turn));
            out.push_back(std::move(conv));
        }
    }
    return out;
}

std::vector<double> population_direction(const SyntheticSpec& spec) {
    std::vector<double> dir(static_cast<std::size_t>(spec.feature_dim), 0.0);
    for (std::size_t t = 0; t < spec.directions.size(); ++t) {
        for (std::size_t c = 0; c < spec.directions[t].size(); ++c) {
            const double p = spec.targets.proportions[t][c];
            for (std::size_t i = 0; i < dir.size(); ++i) {
                dir[i] += p * spec.directions[t][c][i];
            }
        }
    }
    normalize(dir);
    return dir;
}

Condition condition_from_string(const std::string& s) {
    if (s == "base") return Condition::base;
    if (s == "full") return Condition::full;
    if (s == "us_rep") return Condition::us_rep;
    if (s == "hard") return Condition::hard;
    if (s == "soft") return Condition::soft;
    throw ConfigError("unknown condition: " + s);
}

std::string to_string(Condition c) {
    switch (c) {
    case Condition::base: return "base";
    case Condition::full: return "full";
    case Condition::us_rep: return "us_rep";
    case Condition::hard: return "hard";
    case Condition::soft: return "soft";
    }
    return "base";
}

ToyPreferenceModel run_condition(Condition condition, const std::vector<PreferencePair>& pairs,
                                 const RaterPool& pool, const ConditionInputs& inputs,
                                 const TrainSettings& train, int feature_dim, std::uint64_t seed) {
    ToyPreferenceModel model;
    model.extractor.kind = FeatureExtractor::Kind::json_vector;
    model.extractor.dim = feature_dim;
    model.beta = train.beta;
    model.theta.assign(static_cast<std::size_t>(feature_dim), 0.0);
    if (condition == Condition::base) return model;

    ConditionSpec spec;
    switch (condition) {
    case Condition::full: spec.kind = ConditionSpec::Kind::full; break;
    case Condition::us_rep: spec.kind = ConditionSpec::Kind::us_rep; break;
    case Condition::hard:
        spec.kind = ConditionSpec::Kind::hard;
        spec.panel = inputs.panel;
        break;
    case Condition::soft:
        spec.kind = ConditionSpec::Kind::soft;
        spec.pi = inputs.pi;
        break;
    case Condition::base: break;
    }
    spec.f_kind = train.f_kind;
    spec.c_max = train.c_max;

    ConditionDataset ds = build_condition_dataset(pairs, spec, &pool);
    const std::vector<double> omegas = per_example_weights(ds.pairs, ds.scheme);

    // Precompute feature differences once.
    std::vector<std::vector<double>> diffs;
    diffs.reserve(ds.pairs.size());
    for (const auto& p : ds.pairs) {
        const auto phi_p = model.extractor.extract(p.preferred);
        const auto phi_r = model.extractor.extract(p.rejected);
        std::vector<double> d(phi_p.size());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = phi_p[i] - phi_r[i];
        diffs.push_back(std::move(d));
    }

    const std::vector<std::size_t> stream =
        train.rater_sampler
            ? resample_by_rater(ds.pairs, ds.scheme, train.steps, train.batch_size, seed)
            : resample_to_budget(ds.pairs.size(), train.steps, train.batch_size, seed);

    std::vector<double> grad(static_cast<std::size_t>(feature_dim));
    std::size_t cursor = 0;
    for (int step = 0; step < train.steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double weight_sum = 0.0;
        for (int b = 0; b < train.batch_size; ++b) {
            const std::size_t idx = stream[cursor++];
            const auto& d = diffs[idx];
            const double omega = omegas[idx];
            double margin = 0.0;
            for (std::size_t i = 0; i < d.size(); ++i) margin += model.theta[i] * d[i];
            const double z = train.beta * margin;
            const double sig_neg = 1.0 / (1.0 + std::exp(z));
            const double scale = -sig_neg * train.beta * omega;
            for (std::size_t i = 0; i < d.size(); ++i) grad[i] += scale * d[i];
            weight_sum += omega;
        }
        if (weight_sum <= 0.0) throw SolverError("zero total weight in training batch");
        for (std::size_t i = 0; i < grad.size(); ++i) {
            model.theta[i] -= train.learning_rate * grad[i] / weight_sum;
        }
    }
    return model;
}

AlignmentScore evaluate_alignment(const ToyPreferenceModel& model,
                                  const std::vector<PreferencePair>& heldout,
                                  const std::vector<double>& direction) {
    if (heldout.empty()) throw DataError("empty held-out set");
    AlignmentScore score;
    score.n_pairs = heldout.size();
    double correct = 0.0;
    for (const auto& p : heldout) {
        const double margin = model.score(p.preferred) - model.score(p.rejected);
        if (margin > 0.0) {
            correct += 1.0;
        } else if (margin == 0.0) {
            correct += 0.5;
        }
    }
    score.accuracy = correct / static_cast<double>(heldout.size());

    double dot = 0.0, n1 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < model.theta.size() && i < direction.size(); ++i) {
        dot += model.theta[i] * direction[i];
        n1 += model.theta[i] * model.theta[i];
        n2 += direction[i] * direction[i];
    }
    score.cosine = (n1 > 0 && n2 > 0) ? dot / std::sqrt(n1 * n2) : 0.0;
    return score;
}

namespace {

// Held-out pairs drawn from the unbiased target population.
std::vector<PreferencePair> heldout_population_pairs(const SyntheticSpec& spec, int n,
                                                     std::uint64_t seed) {
    std::vector<PreferencePair> out;
    Rng rng(derive_seed(seed, {0x68656c646f7574ull}));
    std::vector<std::vector<double>> cdf(spec.schema.attributes.size());
    for (std::size_t t = 0; t < cdf.size(); ++t) {
        double total = 0.0;
        for (double p : spec.targets.proportions[t]) {
            total += p;
            cdf[t].push_back(total);
        }
    }
    for (int j = 0; j < n; ++j) {
        RaterRecord rec;
        rec.rater_id = "heldout";
        for (std::size_t t = 0; t < cdf.size(); ++t) {
            const double u = rng.unit();
            int cat = 0;
            while (cat + 1 < static_cast<int>(cdf[t].size()) &&
                   u >= cdf[t][static_cast<std::size_t>(cat)]) {
                ++cat;
            }
            rec.attribute_values.push_back(cat);
        }
        const std::vector<double> dir = rater_direction(spec, rec, rng);
        std::vector<double> x1(static_cast<std::size_t>(spec.feature_dim));
        std::vector<double> x2(static_cast<std::size_t>(spec.feature_dim));
        for (auto& v : x1) v = rng.normal();
        for (auto& v : x2) v = rng.normal();
        double margin = 0.0;
        for (std::size_t i = 0; i < x1.size(); ++i) margin += dir[i] * (x1[i] - x2[i]);
        const double p_first = 1.0 / (1.0 + std::exp(-margin / spec.temperature));
        const bool first_preferred = rng.unit() < p_first;

        PreferencePair pair;
        pair.context.messages.push_back({"user", "heldout comparison"});
        pair.preferred = feature_text(first_preferred ? x1 : x2);
        pair.rejected = feature_text(first_preferred ? x2 : x1);
        pair.rater_id = "heldout";
        pair.thread_id = "heldout-" + std::to_string(j);
        pair.score_gap = 1.0;
        out.push_back(std::move(pair));
    }
    return out;
}

} // namespace

json ExperimentConfig::to_json() const {
    json j;
    j["spec"] = spec.to_json();
    j["train"] = train.to_json();
    j["n_seeds"] = n_seeds;
    j["master_seed"] = master_seed;
    j["heldout_pairs"] = heldout_pairs;
    j["bootstrap_resamples"] = bootstrap_resamples;
    j["enumeration_cap"] = enumeration_cap;
    j["approximate_lottery"] = approximate_lottery;
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    try {
        c.spec = SyntheticSpec::from_json(j.at("spec"));
        c.train = TrainSettings::from_json(j.value("train", json::object()));
        c.n_seeds = j.value("n_seeds", 20);
        c.master_seed = j.value("master_seed", 1);
        c.heldout_pairs = j.value("heldout_pairs", 2000);
        c.bootstrap_resamples = j.value("bootstrap_resamples", 1000);
        c.enumeration_cap = j.value("enumeration_cap", static_cast<std::size_t>(100000));
        c.approximate_lottery = j.value("approximate_lottery", false);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    if (c.n_seeds < 1) throw ConfigError("n_seeds must be >= 1");
    if (c.heldout_pairs < 1) throw ConfigError("heldout_pairs must be >= 1");
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open experiment config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("experiment config parse failure: " + std::string(e.what()));
    }
    return from_json(j);
}

json ExperimentReport::to_json() const {
    json j;
    j["n_seeds"] = n_seeds;
    j["master_seed"] = master_seed;
    json conds = json::object();
    for (const auto& [name, s] : conditions) {
        json jc;
        jc["mean_accuracy"] = s.mean_accuracy;
        jc["ci_lower"] = s.ci_lower;
        jc["ci_upper"] = s.ci_upper;
        jc["mean_cosine"] = s.mean_cosine;
        jc["per_seed_accuracy"] = s.per_seed_accuracy;
        jc["per_seed_cosine"] = s.per_seed_cosine;
        conds[name] = std::move(jc);
    }
    j["conditions"] = std::move(conds);
    j["wins"] = wins;
    // The alignment score is held-out preference accuracy on synthetic
    // population pairs, a desk-scale stand-in for judged evaluation.
    j["score_definition"] = "held-out representative preference accuracy (toy model)";
    return j;
}

std::string ExperimentReport::to_csv() const {
    std::ostringstream os;
    os << "condition,mean_accuracy,ci_lower,ci_upper,mean_cosine\n";
    for (const auto& [name, s] : conditions) {
        char line[256];
        std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,%.6f,%.6f\n", name.c_str(),
                      s.mean_accuracy, s.ci_lower, s.ci_upper, s.mean_cosine);
        os << line;
    }
    return os.str();
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
    config.spec.validate();
    const std::vector<double> pop_dir = population_direction(config.spec);
    const std::vector<Condition> order = {Condition::base, Condition::full, Condition::us_rep,
                                          Condition::hard, Condition::soft};

    ExperimentReport report;
    report.n_seeds = config.n_seeds;
    report.master_seed = config.master_seed;
    for (Condition c : order) report.conditions[to_string(c)] = {};

    const QuotaSpec quota =
        quota_bounds(config.spec.targets, config.spec.schema, config.spec.k, config.spec.tau);

    for (int s = 0; s < config.n_seeds; ++s) {
        const std::uint64_t seed = derive_seed(config.master_seed, {static_cast<std::uint64_t>(s)});

        // A biased draw can miss a scarce category entirely; redraw with
        // derived seeds until the quota admits a panel (a pool that cannot
        // seat a panel would be rejected at recruitment, not analyzed).
        SyntheticPool pool;
        bool found = false;
        for (std::uint64_t attempt = 0; attempt < 50 && !found; ++attempt) {
            pool = generate_synthetic_pool(config.spec, derive_seed(seed, {attempt}));
            found = feasible_panel_exists(pool.pool, quota);
        }
        if (!found) {
            throw DataError("no feasible pool draw in 50 attempts; weaken the quota or bias");
        }
        const auto convs = generate_synthetic_conversations(pool, config.spec, seed);
        const auto pairs = extract_pairs(convs, 0.0);
        const auto heldout =
            heldout_population_pairs(config.spec, config.heldout_pairs, seed);
        LeximinOptions opts;
        opts.enumeration_cap = config.enumeration_cap;
        opts.allow_approximation = config.approximate_lottery;
        opts.seed = seed;
        const LeximinResult lottery = leximin_lottery(pool.pool, quota, opts);

        ConditionInputs inputs;
        inputs.pi = lottery.probs;
        inputs.panel = sample_panel(lottery.lottery, derive_seed(seed, {0x70616e656cull}));

        for (Condition c : order) {
            const ToyPreferenceModel model =
                run_condition(c, pairs, pool.pool, inputs, config.train, config.spec.feature_dim,
                              derive_seed(seed, {fnv1a64(to_string(c))}));
            const AlignmentScore score = evaluate_alignment(model, heldout, pop_dir);
            auto& summary = report.conditions[to_string(c)];
            summary.per_seed_accuracy.push_back(score.accuracy);
            summary.per_seed_cosine.push_back(score.cosine);
        }
    }

    for (auto& [name, s] : report.conditions) {
        const auto& acc = s.per_seed_accuracy;
        BootstrapResult ci = bootstrap_scalar(
            acc.size(),
            [&](const std::vector<std::size_t>& idx) {
                double m = 0.0;
                for (std::size_t i : idx) m += acc[i];
                return m / static_cast<double>(idx.size());
            },
            {config.bootstrap_resamples, derive_seed(config.master_seed, {fnv1a64(name)})});
        s.mean_accuracy = ci.point;
        s.ci_lower = ci.lower;
        s.ci_upper = ci.upper;
        s.mean_cosine = std::accumulate(s.per_seed_cosine.begin(), s.per_seed_cosine.end(), 0.0) /
                        static_cast<double>(s.per_seed_cosine.size());
    }

    auto count_wins = [&](const std::string& a, const std::string& b) {
        const auto& xa = report.conditions.at(a).per_seed_accuracy;
        const auto& xb = report.conditions.at(b).per_seed_accuracy;
        int w = 0;
        for (std::size_t i = 0; i < xa.size(); ++i) {
            if (xa[i] > xb[i]) ++w;
        }
        return w;
    };
    for (const std::string a : {"hard", "soft", "us_rep"}) {
        report.wins[a + ">full"] = count_wins(a, "full");
    }
    report.wins["hard>us_rep"] = count_wins("hard", "us_rep");
    report.wins["full>base"] = count_wins("full", "base");
    return report;
}

ExperimentConfig default_experiment_config() {
    ExperimentConfig config;
    SyntheticSpec& spec = config.spec;

    AttributeSchema::Attribute attr;
    attr.name = "group";
    attr.categories = {"alpha", "beta"};
    spec.schema.attributes.push_back(attr);
    spec.targets.proportions = {{0.5, 0.5}};
    spec.bias_multipliers = {{5.0, 1.0}};

    // Two anchor directions at cos = -0.5: the over-represented group pulls
    // training away from the population mean.
    std::vector<double> g_alpha = {1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    std::vector<double> g_beta = {-0.5, 0.8660254037844386, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    spec.directions = {{g_alpha, g_beta}};

    spec.pool_size = 24;
    spec.feature_dim = 8;
    spec.direction_noise = 0.25;
    spec.temperature = 1.0;
    spec.pairs_per_rater = 30;
    spec.k = 6;
    spec.tau = 0.1;
    spec.us_rep_size = 12;

    config.train = TrainSettings{};
    config.n_seeds = 20;
    config.master_seed = 1;
    config.heldout_pairs = 2000;
    return config;
}

} // namespace panelkit
