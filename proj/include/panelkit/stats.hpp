#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "panelkit/rank_aggregation.hpp"

namespace panelkit {

struct BootstrapConfig {
    int n_resamples = 1000;
    std::uint64_t seed = 0;
};

struct BootstrapResult {
    double point = 0.0;
    double lower = 0.0; // percentile 2.5
    double upper = 0.0; // percentile 97.5
    int n_resamples = 0;
    std::uint64_t seed = 0;
};

/// Percentile bootstrap of a scalar statistic over n_units exchangeable
/// units. The statistic receives the unit indices of a resample; the point
/// estimate uses the identity resample. Deterministic under the seed: each
/// resample draws from a sub-seed derived from (seed, resample index).
BootstrapResult bootstrap_scalar(std::size_t n_units,
                                 const std::function<double(const std::vector<std::size_t>&)>& stat,
                                 const BootstrapConfig& config);

/// Vector-valued variant: one percentile interval per component.
std::vector<BootstrapResult>
bootstrap_vector(std::size_t n_units,
                 const std::function<std::vector<double>(const std::vector<std::size_t>&)>& stat,
                 const BootstrapConfig& config);

/// Kendall rank correlation between two total orders, 1 - 2d / C(m,2).
double kendall_tau(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Mean over questions of the mean pairwise tau between that question's
/// trials; questions with fewer than two trials are skipped (error if all).
double kendall_tau_agreement(const std::vector<Ranking>& rankings);

/// Fleiss' kappa treating each question as a subject and the top-ranked item
/// as the category; requires an equal trial count per question.
double fleiss_kappa_top1(const std::vector<Ranking>& rankings);

struct WinRateResult {
    double vote_rate = 0.0;      // fraction of rankings placing a above b
    BootstrapResult vote_ci;     // question-level bootstrap
    std::size_t votes = 0;
    double majority_rate = 0.0;  // fraction of decided questions won by a
    std::size_t majority_ties = 0;
    std::size_t questions = 0;
};

WinRateResult pairwise_win_rate(const std::vector<Ranking>& rankings, const std::string& a,
                                const std::string& b, const BootstrapConfig& config);

struct PositionBiasResult {
    double pearson_rho = 0.0;             // presented position vs final rank
    std::vector<double> top1_by_position; // Pr(item shown at p is ranked #1)
    std::size_t n_rankings = 0;
};

PositionBiasResult position_bias(const std::vector<Ranking>& rankings);

struct LengthBiasResult {
    double corr_chars = 0.0; // corr(length, 1-based rank); negative = longer ranks better
    double corr_words = 0.0;
    double longer_wins_rate = 0.0;
    std::size_t pairs_counted = 0;
    std::size_t pairs_tied_length = 0;
};

/// texts: question_id -> item_id -> response text.
LengthBiasResult length_bias(
    const std::map<std::string, std::map<std::string, std::string>>& texts,
    const std::vector<Ranking>& rankings);

enum class ConsensusMethod { kemeny, mallows };

struct RankPositionMatrix {
    std::vector<std::string> items;
    std::vector<std::vector<double>> prob; // prob[item][position]
    double exact_match_rate = 0.0;         // resamples matching the point consensus
};

/// Entry (i, p): fraction of bootstrap consensus permutations placing item i
/// at position p. Rows and columns each sum to 1.
RankPositionMatrix rank_position_probabilities(const std::vector<Ranking>& rankings,
                                               ConsensusMethod method,
                                               const BootstrapConfig& config, int kemeny_cap = 8);

nlohmann::json bootstrap_result_to_json(const BootstrapResult& r);

} // namespace panelkit
