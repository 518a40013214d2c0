#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "panelkit/demographics.hpp"
#include "panelkit/losses.hpp"
#include "panelkit/preference.hpp"
#include "panelkit/sortition.hpp"

namespace panelkit {

/// Generative recipe for the synthetic pool and its preference behavior.
/// Each category of each attribute carries a latent direction; a rater's
/// direction is the normalized sum of their categories' directions plus
/// individual noise, and preferences follow a logistic choice model on
/// feature differences.
struct SyntheticSpec {
    AttributeSchema schema;
    PopulationTargets targets;
    std::vector<std::vector<double>> bias_multipliers;          // [attr][cat]
    std::vector<std::vector<std::vector<double>>> directions;   // [attr][cat][dim]
    int pool_size = 24;
    int feature_dim = 8;
    double direction_noise = 0.25;
    double temperature = 1.0;
    int pairs_per_rater = 30;
    int k = 6;
    double tau = 0.1;
    int us_rep_size = 12;

    void validate() const;
    nlohmann::json to_json() const;
    static SyntheticSpec from_json(const nlohmann::json& j);
};

struct TrainSettings {
    int steps = 400;
    int batch_size = 16;
    double learning_rate = 0.3;
    double beta = 1.0;
    WeightKind f_kind = WeightKind::identity;
    double c_max = 1.0;
    bool rater_sampler = false; // sample rater ~ w then pair uniform

    nlohmann::json to_json() const;
    static TrainSettings from_json(const nlohmann::json& j);
};

struct SyntheticPool {
    RaterPool pool;
    std::map<std::string, std::vector<double>> rater_directions;
};

SyntheticPool generate_synthetic_pool(const SyntheticSpec& spec, std::uint64_t seed);

/// One single-turn conversation per (rater, comparison); response texts are
/// JSON feature vectors so the standard extraction pipeline applies.
std::vector<ConversationRecord> generate_synthetic_conversations(const SyntheticPool& pool,
                                                                 const SyntheticSpec& spec,
                                                                 std::uint64_t seed);

/// Normalized population-mean direction implied by the targets.
std::vector<double> population_direction(const SyntheticSpec& spec);

enum class Condition { base, full, us_rep, hard, soft };

Condition condition_from_string(const std::string& s);
std::string to_string(Condition c);

struct ConditionInputs {
    Panel panel;       // hard
    InclusionProbs pi; // soft
};

/// Gradient descent on the condition's dataset for exactly steps*batch_size
/// resampled examples with self-normalized batch weighting; base returns the
/// untouched initial model.
ToyPreferenceModel run_condition(Condition condition, const std::vector<PreferencePair>& pairs,
                                 const RaterPool& pool, const ConditionInputs& inputs,
                                 const TrainSettings& train, int feature_dim, std::uint64_t seed);

struct AlignmentScore {
    double accuracy = 0.0; // held-out preference accuracy, ties count 1/2
    double cosine = 0.0;   // cos(theta, population direction)
    std::size_t n_pairs = 0;
};

AlignmentScore evaluate_alignment(const ToyPreferenceModel& model,
                                  const std::vector<PreferencePair>& heldout,
                                  const std::vector<double>& direction);

struct ExperimentConfig {
    SyntheticSpec spec;
    TrainSettings train;
    int n_seeds = 20;
    std::uint64_t master_seed = 1;
    int heldout_pairs = 2000;
    int bootstrap_resamples = 1000;
    std::size_t enumeration_cap = 100000;
    bool approximate_lottery = false;

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::string& path);
};

struct ConditionSummary {
    std::vector<double> per_seed_accuracy;
    std::vector<double> per_seed_cosine;
    double mean_accuracy = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    double mean_cosine = 0.0;
};

struct ExperimentReport {
    std::map<std::string, ConditionSummary> conditions;
    std::map<std::string, int> wins; // "hard>full" -> seeds where strictly higher
    int n_seeds = 0;
    std::uint64_t master_seed = 0;

    nlohmann::json to_json() const;
    std::string to_csv() const;
};

ExperimentReport run_experiment(const ExperimentConfig& config);

/// The planted-bias default configuration (also shipped as a data file).
ExperimentConfig default_experiment_config();

} // namespace panelkit
