#include "panelkit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "panelkit/errors.hpp"
#include "panelkit/rng.hpp"

namespace panelkit {

using nlohmann::json;

double dpo_loss_from_margin(double z) {
    if (!std::isfinite(z)) throw DataError("non-finite margin in preference loss");
    // -log sigma(z) = log(1 + exp(-z)), branch for stability.
    if (z >= 0.0) return std::log1p(std::exp(-z));
    return -z + std::log1p(std::exp(z));
}

double dpo_loss(const ComparisonInputs& inputs) {
    if (!(inputs.beta > 0.0)) throw ConfigError("beta must be > 0");
    if (!std::isfinite(inputs.logp_preferred) || !std::isfinite(inputs.logp_rejected) ||
        !std::isfinite(inputs.reference_adjustment)) {
        throw DataError("non-finite comparison inputs");
    }
    const double delta = inputs.logp_preferred - inputs.logp_rejected;
    return dpo_loss_from_margin(inputs.beta * (delta - inputs.reference_adjustment));
}

std::vector<double> FeatureExtractor::extract(std::string_view text) const {
    if (dim < 1) throw ConfigError("feature extractor dimension must be >= 1");
    std::vector<double> phi(static_cast<std::size_t>(dim), 0.0);
    if (kind == Kind::json_vector) {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::exception&) {
            throw DataError("response is not a JSON feature vector: " +
                            std::string(text.substr(0, 40)));
        }
        if (!j.is_array() || static_cast<int>(j.size()) != dim) {
            throw DataError("feature vector has wrong dimension");
        }
        for (int i = 0; i < dim; ++i) phi[static_cast<std::size_t>(i)] = j[static_cast<std::size_t>(i)].get<double>();
        return phi;
    }
    // hashed_ngram: character trigrams into signed buckets.
    if (text.size() < 3) {
        if (!text.empty()) {
            const std::uint64_t h = fnv1a64(text);
            phi[h % static_cast<std::uint64_t>(dim)] += (h >> 32) % 2 == 0 ? 1.0 : -1.0;
        }
        return phi;
    }
    for (std::size_t i = 0; i + 3 <= text.size(); ++i) {
        const std::uint64_t h = fnv1a64(text.substr(i, 3));
        phi[h % static_cast<std::uint64_t>(dim)] += (h >> 32) % 2 == 0 ? 1.0 : -1.0;
    }
    const double norm = std::sqrt(static_cast<double>(text.size()));
    for (auto& v : phi) v /= norm;
    return phi;
}

json FeatureExtractor::to_json() const {
    json j;
    j["kind"] = kind == Kind::json_vector ? "json_vector" : "hashed_ngram";
    j["dim"] = dim;
    return j;
}

FeatureExtractor FeatureExtractor::from_json(const json& j) {
    FeatureExtractor fe;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "json_vector") {
        fe.kind = Kind::json_vector;
    } else if (kind == "hashed_ngram") {
        fe.kind = Kind::hashed_ngram;
    } else {
        throw ConfigError("unknown feature extractor kind: " + kind);
    }
    fe.dim = j.at("dim").get<int>();
    return fe;
}

double ToyPreferenceModel::score(std::string_view response) const {
    const std::vector<double> phi = extractor.extract(response);
    if (phi.size() != theta.size()) throw DataError("feature/parameter dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) s += theta[i] * phi[i];
    return s;
}

json ToyPreferenceModel::to_json() const {
    json j;
    j["theta"] = theta;
    j["extractor"] = extractor.to_json();
    j["beta"] = beta;
    j["reference_adjustment"] = reference_adjustment;
    return j;
}

ToyPreferenceModel ToyPreferenceModel::from_json(const json& j) {
    ToyPreferenceModel m;
    m.theta = j.at("theta").get<std::vector<double>>();
    m.extractor = FeatureExtractor::from_json(j.at("extractor"));
    m.beta = j.at("beta").get<double>();
    m.reference_adjustment = j.value("reference_adjustment", 0.0);
    return m;
}

void ToyPreferenceModel::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << to_json().dump(2) << "\n";
}

ToyPreferenceModel ToyPreferenceModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model: " + path);
    json j;
    in >> j;
    return from_json(j);
}

double pair_loss(const ToyPreferenceModel& model, const PreferencePair& pair) {
    ComparisonInputs inputs;
    inputs.logp_preferred = model.score(pair.preferred);
    inputs.logp_rejected = model.score(pair.rejected);
    inputs.reference_adjustment = model.reference_adjustment;
    inputs.beta = model.beta;
    return dpo_loss(inputs);
}

std::vector<double> dpo_grad(const ToyPreferenceModel& model, const PreferencePair& pair) {
    const std::vector<double> phi_p = model.extractor.extract(pair.preferred);
    const std::vector<double> phi_r = model.extractor.extract(pair.rejected);
    if (phi_p.size() != model.theta.size() || phi_r.size() != model.theta.size()) {
        throw DataError("feature/parameter dimension mismatch");
    }
    double delta = 0.0;
    for (std::size_t i = 0; i < model.theta.size(); ++i) {
        delta += model.theta[i] * (phi_p[i] - phi_r[i]);
    }
    const double z = model.beta * (delta - model.reference_adjustment);
    // d/dz[-log sigma(z)] = -sigma(-z)
    const double sig_neg = 1.0 / (1.0 + std::exp(z));
    std::vector<double> grad(model.theta.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
        grad[i] = -sig_neg * model.beta * (phi_p[i] - phi_r[i]);
    }
    return grad;
}

double per_rater_mean_loss(const ToyPreferenceModel& model,
                           std::span<const PreferencePair> rater_pairs) {
    if (rater_pairs.empty()) throw DataError("per-rater mean loss of an empty pair set");
    double sum = 0.0;
    for (const auto& p : rater_pairs) sum += pair_loss(model, p);
    return sum / static_cast<double>(rater_pairs.size());
}

namespace {

std::map<std::string, double> per_rater_means(const ToyPreferenceModel& model,
                                              const std::vector<PreferencePair>& pairs) {
    std::map<std::string, double> sums;
    std::map<std::string, int> counts;
    for (const auto& p : pairs) {
        sums[p.rater_id] += pair_loss(model, p);
        counts[p.rater_id]++;
    }
    for (auto& [id, s] : sums) s /= static_cast<double>(counts[id]);
    return sums;
}

} // namespace

HardObjectiveValue hard_objective(const ToyPreferenceModel& model, const Panel& panel,
                                  const std::vector<PreferencePair>& pairs) {
    std::map<std::string, double> means = per_rater_means(model, pairs);
    HardObjectiveValue out;
    double sum = 0.0;
    for (const auto& id : panel.member_ids) {
        auto it = means.find(id);
        if (it == means.end()) {
            ++out.members_skipped;
            continue;
        }
        sum += it->second;
        ++out.members_used;
    }
    if (out.members_used == 0) throw DataError("no panel member contributed preference pairs");
    out.value = sum / static_cast<double>(out.members_used);
    return out;
}

double soft_objective(const ToyPreferenceModel& model, const std::vector<PreferencePair>& pairs,
                      const std::map<std::string, double>& weights) {
    std::map<std::string, double> means = per_rater_means(model, pairs);
    double num = 0.0, den = 0.0;
    for (const auto& [id, mean] : means) {
        auto it = weights.find(id);
        if (it == weights.end()) throw DataError("rater " + id + " missing from weights");
        num += it->second * mean;
        den += it->second;
    }
    if (!(den > 0.0)) throw DataError("soft objective: total weight is zero");
    return num / den;
}

double batch_estimator(std::span<const double> losses, std::span<const double> weights) {
    if (losses.size() != weights.size()) throw DataError("batch size mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        num += weights[i] * losses[i];
        den += weights[i];
    }
    if (!(den > 0.0)) throw DataError("batch estimator: total weight is zero");
    return num / den;
}

McEstimate expected_hard_mc(const PanelLottery& lottery, const ToyPreferenceModel& model,
                            const std::vector<PreferencePair>& pairs, int n_samples,
                            std::uint64_t seed) {
    if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
    // Per-rater mean losses do not depend on the sampled panel.
    std::map<std::string, double> means = per_rater_means(model, pairs);

    double sum = 0.0, sum_sq = 0.0;
    for (int s = 0; s < n_samples; ++s) {
        const Panel panel = sample_panel(lottery, derive_seed(seed, {static_cast<std::uint64_t>(s)}));
        double total = 0.0;
        int used = 0;
        for (const auto& id : panel.member_ids) {
            auto it = means.find(id);
            if (it == means.end()) continue;
            total += it->second;
            ++used;
        }
        if (used == 0) throw DataError("sampled panel has no members with pairs");
        const double value = total / static_cast<double>(used);
        sum += value;
        sum_sq += value * value;
    }
    McEstimate est;
    est.n_samples = n_samples;
    est.estimate = sum / n_samples;
    if (n_samples > 1) {
        const double var =
            std::max(0.0, (sum_sq - sum * sum / n_samples) / (n_samples - 1));
        est.std_error = std::sqrt(var / n_samples);
    }
    return est;
}

} // namespace panelkit
