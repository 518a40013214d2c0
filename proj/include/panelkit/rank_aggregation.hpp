#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace panelkit {

struct Ranking {
    std::string question_id;
    int trial_id = 0;
    std::vector<std::string> order;     // item ids, best first
    std::vector<std::string> presented; // item ids in display order (optional)
};

/// Sorted canonical item set shared by a collection of rankings; throws when
/// rankings disagree on the set or contain repeats.
std::vector<std::string> canonical_items(const std::vector<Ranking>& rankings);

struct PairwiseCounts {
    std::vector<std::string> items; // sorted
    std::vector<std::vector<long long>> wins; // wins[i][j] = times i ranked above j

    long long total_decided() const;
};

PairwiseCounts rankings_to_pairwise(const std::vector<Ranking>& rankings);

/// Average per-ranking Borda score: position r (best = 0) of m earns m-1-r.
std::map<std::string, double> borda(const std::vector<Ranking>& rankings);

struct CopelandScores {
    std::map<std::string, long long> raw;    // wins - losses
    std::map<std::string, double> win_rate;  // wins / decided
};

CopelandScores copeland(const std::vector<Ranking>& rankings);

/// Discordant pair count between two total orders over the same items.
int kendall_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);

struct KemenyResult {
    std::vector<std::string> consensus;
    long long total_distance = 0;
};

/// Exact Kemeny-Young consensus by brute force over permutations; ties break
/// to the lexicographically smallest permutation. m must be <= cap.
KemenyResult kemeny(const std::vector<Ranking>& rankings, int cap = 8);

struct FitOptions {
    double tol = 1e-10;     // max abs log-ability change at convergence
    long max_iters = 100000;
    bool smoothing = false; // add 0.5 to every ordered pair count (BT only)
};

struct AbilityFit {
    std::map<std::string, double> log_abilities; // mean-centered
    std::vector<double> ll_trace;                // per-iteration log-likelihood
    long iterations = 0;
    /// Set when the MLE lies on the boundary (perfect separation); the
    /// returned abilities are clamped but ordering-consistent.
    bool degenerate = false;
};

/// Bradley-Terry maximum likelihood via the minorization fixed point.
AbilityFit fit_bt(const PairwiseCounts& counts, const FitOptions& options = {});

/// Plackett-Luce maximum likelihood via minorization-maximization.
AbilityFit fit_pl(const std::vector<Ranking>& rankings, const FitOptions& options = {});

/// Kendall-Mallows normalizer Z(phi) = prod_{j=1}^{m-1} sum_{r=0}^{j} phi^r.
double mallows_normalizer(double phi, int m);

struct MallowsModel {
    std::vector<std::string> consensus; // pi_0, from the training split
    double phi = 1.0;                   // dispersion in (0, 1]
    double train_log_likelihood = 0.0;
    double test_log_likelihood = 0.0;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
};

/// pi_0 = Kemeny consensus of the training split; phi by golden-section
/// likelihood maximization on (1e-6, 1] to 1e-8.
MallowsModel fit_mallows(const std::vector<Ranking>& rankings, double holdout_fraction,
                         std::uint64_t seed, int kemeny_cap = 8);

std::vector<Ranking> load_rankings(const std::string& path);
void save_rankings(const std::vector<Ranking>& rankings, const std::string& path);
nlohmann::json ranking_to_json(const Ranking& r);
Ranking ranking_from_json(const nlohmann::json& j);

} // namespace panelkit
