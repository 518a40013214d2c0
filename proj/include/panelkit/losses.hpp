#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "panelkit/preference.hpp"
#include "panelkit/sortition.hpp"

namespace panelkit {

struct ComparisonInputs {
    double logp_preferred = 0.0;
    double logp_rejected = 0.0;
    double reference_adjustment = 0.0; // baseline term, default 0
    double beta = 0.1;
};

/// -log sigma(beta * (delta - c)) with delta = logp_preferred - logp_rejected,
/// computed through the stable log1p branch form.
double dpo_loss(const ComparisonInputs& inputs);

/// -log sigma(z) for a precomputed margin z.
double dpo_loss_from_margin(double z);

/// Maps a response text to a fixed-length feature vector. json_vector parses
/// the text as a JSON array of numbers (the synthetic pipeline writes
/// responses in that form); hashed_ngram buckets character trigrams for
/// free-text responses.
struct FeatureExtractor {
    enum class Kind { json_vector, hashed_ngram };
    Kind kind = Kind::json_vector;
    int dim = 0;

    std::vector<double> extract(std::string_view text) const;

    nlohmann::json to_json() const;
    static FeatureExtractor from_json(const nlohmann::json& j);
};

/// Linear scorer theta . phi(y) standing in for a policy log-probability;
/// the pairwise margin becomes theta . (phi(preferred) - phi(rejected)).
struct ToyPreferenceModel {
    std::vector<double> theta;
    FeatureExtractor extractor;
    double beta = 0.1;
    double reference_adjustment = 0.0;

    double score(std::string_view response) const;

    nlohmann::json to_json() const;
    static ToyPreferenceModel from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static ToyPreferenceModel load(const std::string& path);
};

double pair_loss(const ToyPreferenceModel& model, const PreferencePair& pair);

/// Analytic gradient of pair_loss with respect to theta.
std::vector<double> dpo_grad(const ToyPreferenceModel& model, const PreferencePair& pair);

double per_rater_mean_loss(const ToyPreferenceModel& model,
                           std::span<const PreferencePair> rater_pairs);

struct HardObjectiveValue {
    double value = 0.0;
    int members_used = 0;
    int members_skipped = 0; // panel members with no pairs
};

/// Mean of per-rater mean losses over panel members that contributed pairs.
HardObjectiveValue hard_objective(const ToyPreferenceModel& model, const Panel& panel,
                                  const std::vector<PreferencePair>& pairs);

/// Rater-weighted mean of per-rater mean losses: sum_i w_i L_i / sum_i w_i.
double soft_objective(const ToyPreferenceModel& model, const std::vector<PreferencePair>& pairs,
                      const std::map<std::string, double>& weights);

/// Self-normalized weighted mean sum(w l)/sum(w); invariant to rescaling.
double batch_estimator(std::span<const double> losses, std::span<const double> weights);

struct McEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    int n_samples = 0;
};

/// Monte Carlo mean of hard_objective over panels drawn from the lottery.
McEstimate expected_hard_mc(const PanelLottery& lottery, const ToyPreferenceModel& model,
                            const std::vector<PreferencePair>& pairs, int n_samples,
                            std::uint64_t seed);

} // namespace panelkit
