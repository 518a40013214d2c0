#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "panelkit/demographics.hpp"

namespace panelkit {

struct Panel {
    std::vector<std::string> member_ids; // kept sorted
};

struct PanelLottery {
    int k = 0;
    std::vector<std::pair<Panel, double>> entries; // probabilities sum to 1
};

struct InclusionProbs {
    std::map<std::string, double> pi;

    double sum() const;
    double at(const std::string& rater_id) const; // 0 for unknown raters
};

struct QuotaViolation {
    std::string attribute; // empty for the panel-size check
    std::string category;
    int observed = 0;
    int lower = 0;
    int upper = 0;
    std::string describe() const;
};

std::vector<QuotaViolation> check_feasibility(const Panel& panel, const QuotaSpec& quota,
                                              const RaterPool& pool);

/// All quota-feasible k-subsets of the pool, deduplicated, ordered
/// lexicographically by sorted member ids. Throws SolverError when the count
/// would exceed `cap` and DataError when no feasible panel exists.
std::vector<Panel> enumerate_feasible_panels(const RaterPool& pool, const QuotaSpec& quota,
                                             std::size_t cap);

struct LeximinOptions {
    std::size_t enumeration_cap = 100000;
    bool allow_approximation = false; // column-generation fallback past the cap
    bool symmetrize = true;
    double tolerance = 1e-9;
    std::uint64_t seed = 0;        // approximate path only
    int greedy_restarts = 400;     // approximate path panel oracle
    int stall_limit = 5;           // approximate path stop rule
};

struct LeximinResult {
    PanelLottery lottery;
    InclusionProbs probs;
    bool exact = true;
    int rounds = 0;
    int lp_solves = 0;
    std::size_t panels_considered = 0;
    std::string method; // "enumerated" or "column_generation"
};

/// Lottery over feasible panels whose ascending-sorted inclusion-probability
/// vector is lexicographically maximal. Exact on the enumerated path;
/// approximate (documented stop rule) on the column-generation path.
LeximinResult leximin_lottery(const RaterPool& pool, const QuotaSpec& quota,
                              const LeximinOptions& options = {});

InclusionProbs inclusion_probabilities(const PanelLottery& lottery, const RaterPool& pool);

/// Equalizes inclusion probabilities within demographic equivalence classes
/// by cyclic orbit-averaging; feasibility of every support panel is preserved.
PanelLottery symmetrize(const PanelLottery& lottery, const RaterPool& pool);

Panel sample_panel(const PanelLottery& lottery, std::uint64_t seed);

struct LotteryDiagnostics {
    double pi_sum = 0.0;
    int k = 0;
    double min_pi = 0.0;
    double max_pi = 0.0;
    std::size_t support_size = 0;
    std::size_t zero_pi_raters = 0;
    /// Worst |panel share - target| over supported panels and bounded
    /// categories, in percentage points. Requires targets.
    std::optional<double> max_abs_deviation_pp;
    /// Share of total inclusion-probability mass on raters with preference data.
    double preference_mass_share = 0.0;
    std::size_t quota_violations = 0;

    nlohmann::json to_json() const;
};

LotteryDiagnostics lottery_diagnostics(const PanelLottery& lottery, const QuotaSpec& quota,
                                       const RaterPool& pool,
                                       const PopulationTargets* targets = nullptr);

/// Largest panel size in [1, k_max] whose quota bounds admit a feasible
/// panel; returns 0 if none does.
int max_feasible_k(const RaterPool& pool, const PopulationTargets& targets,
                   const AttributeSchema& schema, double tau, int k_max);

bool feasible_panel_exists(const RaterPool& pool, const QuotaSpec& quota);

nlohmann::json lottery_to_json(const PanelLottery& lottery);
PanelLottery lottery_from_json(const nlohmann::json& j);
nlohmann::json inclusion_to_json(const InclusionProbs& probs, int k);
InclusionProbs inclusion_from_json(const nlohmann::json& j);

} // namespace panelkit
