#include "panelkit/sortition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "panelkit/errors.hpp"
#include "panelkit/rng.hpp"
#include "panelkit/simplex.hpp"

namespace panelkit {

using nlohmann::json;

double InclusionProbs::sum() const {
    double s = 0.0;
    for (const auto& [id, p] : pi) s += p;
    return s;
}

double InclusionProbs::at(const std::string& rater_id) const {
    auto it = pi.find(rater_id);
    return it == pi.end() ? 0.0 : it->second;
}

std::string QuotaViolation::describe() const {
    std::ostringstream os;
    if (attribute.empty()) {
        os << "panel size " << observed << " outside [" << lower << "," << upper << "]";
    } else {
        os << attribute << "=" << category << " count " << observed << " outside [" << lower
           << "," << upper << "]";
    }
    return os.str();
}

std::vector<QuotaViolation> check_feasibility(const Panel& panel, const QuotaSpec& quota,
                                              const RaterPool& pool) {
    std::vector<QuotaViolation> out;
    const auto& schema = pool.schema;
    std::vector<std::vector<int>> counts(schema.attributes.size());
    for (std::size_t t = 0; t < schema.attributes.size(); ++t) {
        counts[t].assign(schema.attributes[t].categories.size(), 0);
    }
    for (const auto& id : panel.member_ids) {
        const RaterRecord& rec = pool.by_id(id); // throws on unknown member
        for (std::size_t t = 0; t < schema.attributes.size(); ++t) {
            counts[t][static_cast<std::size_t>(rec.attribute_values[t])]++;
        }
    }
    if (static_cast<int>(panel.member_ids.size()) != quota.k) {
        out.push_back({"", "", static_cast<int>(panel.member_ids.size()), quota.k, quota.k});
    }
    for (const auto& b : quota.bounds) {
        const int observed = counts[static_cast<std::size_t>(b.attr)][static_cast<std::size_t>(b.cat)];
        if (observed < b.lower || observed > b.upper) {
            out.push_back({schema.attributes[static_cast<std::size_t>(b.attr)].name,
                           schema.attributes[static_cast<std::size_t>(b.attr)]
                               .categories[static_cast<std::size_t>(b.cat)],
                           observed, b.lower, b.upper});
        }
    }
    return out;
}

namespace {

// Enumeration workspace over raters sorted by id. Bounds are indexed per
// (attribute, category); pruning is sound (never skips a completable
// branch), acceptance re-checks lower bounds.
struct Enumerator {
    const RaterPool& pool;
    const QuotaSpec& quota;
    std::size_t cap;
    bool first_only;

    int n = 0;
    int k = 0;
    std::vector<int> order;                        // record indices sorted by id
    std::vector<std::vector<int>> bound_lo, bound_hi; // -1 when unbounded
    std::vector<std::vector<std::vector<int>>> suffix; // [t][c][pos]
    std::vector<std::vector<int>> counts;
    std::vector<int> chosen;
    std::vector<std::vector<int>> result;

    Enumerator(const RaterPool& p, const QuotaSpec& q, std::size_t c, bool fo)
        : pool(p), quota(q), cap(c), first_only(fo) {
        n = static_cast<int>(pool.records.size());
        k = quota.k;
        order.resize(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return pool.records[static_cast<std::size_t>(a)].rater_id <
                   pool.records[static_cast<std::size_t>(b)].rater_id;
        });
        const auto& schema = pool.schema;
        const std::size_t d = schema.attributes.size();
        bound_lo.resize(d);
        bound_hi.resize(d);
        counts.resize(d);
        suffix.resize(d);
        for (std::size_t t = 0; t < d; ++t) {
            const std::size_t nc = schema.attributes[t].categories.size();
            bound_lo[t].assign(nc, -1);
            bound_hi[t].assign(nc, -1);
            counts[t].assign(nc, 0);
            suffix[t].assign(nc, std::vector<int>(static_cast<std::size_t>(n) + 1, 0));
        }
        for (const auto& b : quota.bounds) {
            bound_lo[static_cast<std::size_t>(b.attr)][static_cast<std::size_t>(b.cat)] = b.lower;
            bound_hi[static_cast<std::size_t>(b.attr)][static_cast<std::size_t>(b.cat)] = b.upper;
        }
        for (int pos = n - 1; pos >= 0; --pos) {
            const auto& rec = pool.records[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])];
            for (std::size_t t = 0; t < d; ++t) {
                for (std::size_t c = 0; c < suffix[t].size(); ++c) {
                    suffix[t][c][static_cast<std::size_t>(pos)] =
                        suffix[t][c][static_cast<std::size_t>(pos) + 1];
                }
                suffix[t][static_cast<std::size_t>(rec.attribute_values[t])]
                      [static_cast<std::size_t>(pos)]++;
            }
        }
    }

    bool completable(int pos, int remaining) const {
        if (n - pos < remaining) return false;
        const std::size_t d = bound_lo.size();
        for (std::size_t t = 0; t < d; ++t) {
            int deficit = 0;
            long long capacity = 0;
            for (std::size_t c = 0; c < bound_lo[t].size(); ++c) {
                const int avail = suffix[t][c][static_cast<std::size_t>(pos)];
                if (bound_lo[t][c] >= 0) {
                    const int need = bound_lo[t][c] - counts[t][c];
                    if (need > 0) {
                        if (avail < need) return false;
                        deficit += need;
                    }
                    capacity += std::min(avail, bound_hi[t][c] - counts[t][c]);
                } else {
                    capacity += avail;
                }
            }
            if (deficit > remaining) return false;
            if (capacity < remaining) return false;
        }
        return true;
    }

    bool can_add(int rec_index) const {
        const auto& rec = pool.records[static_cast<std::size_t>(rec_index)];
        for (std::size_t t = 0; t < bound_hi.size(); ++t) {
            const auto c = static_cast<std::size_t>(rec.attribute_values[t]);
            if (bound_hi[t][c] >= 0 && counts[t][c] >= bound_hi[t][c]) return false;
        }
        return true;
    }

    bool lower_bounds_met() const {
        for (std::size_t t = 0; t < bound_lo.size(); ++t) {
            for (std::size_t c = 0; c < bound_lo[t].size(); ++c) {
                if (bound_lo[t][c] >= 0 && counts[t][c] < bound_lo[t][c]) return false;
            }
        }
        return true;
    }

    // Returns false to abort the search (first_only shortcut).
    bool recurse(int pos) {
        const int remaining = k - static_cast<int>(chosen.size());
        if (remaining == 0) {
            if (!lower_bounds_met()) return true;
            result.push_back(chosen);
            if (first_only) return false;
            if (result.size() > cap) {
                throw SolverError("feasible panel enumeration exceeded cap of " +
                                  std::to_string(cap));
            }
            return true;
        }
        if (!completable(pos, remaining)) return true;
        for (int p = pos; p < n; ++p) {
            const int rec_index = order[static_cast<std::size_t>(p)];
            if (!can_add(rec_index)) continue;
            const auto& rec = pool.records[static_cast<std::size_t>(rec_index)];
            for (std::size_t t = 0; t < counts.size(); ++t) {
                counts[t][static_cast<std::size_t>(rec.attribute_values[t])]++;
            }
            chosen.push_back(rec_index);
            const bool keep_going = recurse(p + 1);
            chosen.pop_back();
            for (std::size_t t = 0; t < counts.size(); ++t) {
                counts[t][static_cast<std::size_t>(rec.attribute_values[t])]--;
            }
            if (!keep_going) return false;
        }
        return true;
    }
};

std::vector<std::vector<int>> enumerate_indices(const RaterPool& pool, const QuotaSpec& quota,
                                                std::size_t cap, bool first_only) {
    if (quota.k < 1) throw ConfigError("panel size must be >= 1");
    if (quota.k > static_cast<int>(pool.records.size())) {
        throw DataError("no feasible panel exists: k exceeds pool size");
    }
    Enumerator e(pool, quota, cap, first_only);
    e.recurse(0);
    return std::move(e.result);
}

Panel make_panel(const RaterPool& pool, const std::vector<int>& members) {
    Panel panel;
    panel.member_ids.reserve(members.size());
    for (int m : members) panel.member_ids.push_back(pool.records[static_cast<std::size_t>(m)].rater_id);
    std::sort(panel.member_ids.begin(), panel.member_ids.end());
    return panel;
}

} // namespace

std::vector<Panel> enumerate_feasible_panels(const RaterPool& pool, const QuotaSpec& quota,
                                             std::size_t cap) {
    if (cap < 1) throw ConfigError("enumeration cap must be >= 1");
    auto indices = enumerate_indices(pool, quota, cap, false);
    if (indices.empty()) throw DataError("no feasible panel exists for the given quotas");
    std::vector<Panel> panels;
    panels.reserve(indices.size());
    for (const auto& members : indices) panels.push_back(make_panel(pool, members));
    // Enumeration over id-sorted raters already yields lexicographic order.
    return panels;
}

namespace {

struct LeximinState {
    const RaterPool& pool;
    std::vector<std::vector<int>> panels;       // member record indices
    std::vector<std::vector<int>> agent_panels; // agent -> panel indices
    std::vector<int> active_agents;             // agents covered by >= 1 panel
    double tol;

    LeximinState(const RaterPool& p, std::vector<std::vector<int>> pnls, double tolerance)
        : pool(p), panels(std::move(pnls)), tol(tolerance) {
        agent_panels.assign(pool.records.size(), {});
        for (std::size_t s = 0; s < panels.size(); ++s) {
            for (int m : panels[s]) {
                agent_panels[static_cast<std::size_t>(m)].push_back(static_cast<int>(s));
            }
        }
        for (std::size_t i = 0; i < pool.records.size(); ++i) {
            if (!agent_panels[i].empty()) active_agents.push_back(static_cast<int>(i));
        }
    }

    std::vector<double> probs_from(const std::vector<double>& x) const {
        std::vector<double> pi(pool.records.size(), 0.0);
        for (std::size_t i = 0; i < pool.records.size(); ++i) {
            double s = 0.0;
            for (int p : agent_panels[i]) s += x[static_cast<std::size_t>(p)];
            pi[i] = s;
        }
        return pi;
    }

    // Max-min LP over lottery weights: variables x_0..x_{N-1}, t.
    // maximize t  s.t.  pi_i(x) >= fixed_i (fixed i), pi_j(x) - t >= 0
    // (unfixed j), sum x = 1.
    lp::Solution solve_maxmin(const std::vector<double>& fixed, const std::vector<bool>& is_fixed,
                              int& lp_count) const {
        const std::size_t N = panels.size();
        lp::Problem prob;
        prob.num_vars = static_cast<int>(N) + 1;
        prob.maximize = true;
        prob.objective.assign(N + 1, 0.0);
        prob.objective[N] = 1.0;
        for (int i : active_agents) {
            lp::Constraint con;
            con.coeffs.assign(N + 1, 0.0);
            for (int p : agent_panels[static_cast<std::size_t>(i)]) {
                con.coeffs[static_cast<std::size_t>(p)] = 1.0;
            }
            con.rel = lp::Relation::ge;
            if (is_fixed[static_cast<std::size_t>(i)]) {
                con.rhs = fixed[static_cast<std::size_t>(i)];
            } else {
                con.coeffs[N] = -1.0;
                con.rhs = 0.0;
            }
            prob.constraints.push_back(std::move(con));
        }
        lp::Constraint sum_con;
        sum_con.coeffs.assign(N + 1, 0.0);
        for (std::size_t p = 0; p < N; ++p) sum_con.coeffs[p] = 1.0;
        sum_con.rel = lp::Relation::eq;
        sum_con.rhs = 1.0;
        prob.constraints.push_back(std::move(sum_con));

        ++lp_count;
        lp::Solution sol = lp::solve(prob, tol);
        if (sol.status != lp::Status::optimal) {
            throw SolverError("leximin max-min LP did not reach optimality");
        }
        return sol;
    }

    // Test LP: can agent j's probability exceed `level` while every unfixed
    // agent keeps at least `level` and fixed agents keep their values?
    double solve_improvement(int j, double level, const std::vector<double>& fixed,
                             const std::vector<bool>& is_fixed, int& lp_count) const {
        const std::size_t N = panels.size();
        lp::Problem prob;
        prob.num_vars = static_cast<int>(N);
        prob.maximize = true;
        prob.objective.assign(N, 0.0);
        for (int p : agent_panels[static_cast<std::size_t>(j)]) {
            prob.objective[static_cast<std::size_t>(p)] = 1.0;
        }
        for (int i : active_agents) {
            lp::Constraint con;
            con.coeffs.assign(N, 0.0);
            for (int p : agent_panels[static_cast<std::size_t>(i)]) {
                con.coeffs[static_cast<std::size_t>(p)] = 1.0;
            }
            con.rel = lp::Relation::ge;
            con.rhs = is_fixed[static_cast<std::size_t>(i)] ? fixed[static_cast<std::size_t>(i)]
                                                            : level;
            prob.constraints.push_back(std::move(con));
        }
        lp::Constraint sum_con;
        sum_con.coeffs.assign(N, 1.0);
        sum_con.rel = lp::Relation::eq;
        sum_con.rhs = 1.0;
        prob.constraints.push_back(std::move(sum_con));

        ++lp_count;
        lp::Solution sol = lp::solve(prob, tol);
        if (sol.status != lp::Status::optimal) {
            throw SolverError("leximin improvement LP did not reach optimality");
        }
        return sol.objective;
    }

    // Full leximin fixing sequence. Agents with identical attribute vectors
    // are interchangeable with respect to quota feasibility, so improvement
    // tests are shared per equivalence class and classes are fixed whole.
    std::vector<double> run(int& rounds, int& lp_count) const {
        const std::size_t n = pool.records.size();
        std::vector<double> fixed(n, 0.0);
        std::vector<bool> is_fixed(n, false);
        for (std::size_t i = 0; i < n; ++i) {
            if (agent_panels[i].empty()) is_fixed[i] = true; // pi == 0 forever
        }

        std::map<std::string, std::vector<int>> classes;
        for (int i : active_agents) {
            classes[pool.attribute_key(i)].push_back(i);
        }

        std::vector<double> x;
        const double tight_eps = 1e-7;
        while (true) {
            bool any_unfixed = false;
            for (int i : active_agents) {
                if (!is_fixed[static_cast<std::size_t>(i)]) {
                    any_unfixed = true;
                    break;
                }
            }
            if (!any_unfixed) break;

            ++rounds;
            lp::Solution sol = solve_maxmin(fixed, is_fixed, lp_count);
            const double level = sol.objective;
            x.assign(sol.x.begin(), sol.x.begin() + static_cast<long>(panels.size()));
            std::vector<double> pi = probs_from(x);

            // Candidate classes: every unfixed member sits at the current
            // level. A member strictly above it certifies the whole class
            // can exceed the level (interchangeability), so skip the class.
            std::vector<const std::vector<int>*> candidates;
            for (const auto& [key, members] : classes) {
                bool all_tight = true;
                bool any_unfixed_member = false;
                for (int i : members) {
                    if (is_fixed[static_cast<std::size_t>(i)]) continue;
                    any_unfixed_member = true;
                    if (pi[static_cast<std::size_t>(i)] > level + tight_eps) {
                        all_tight = false;
                        break;
                    }
                }
                if (any_unfixed_member && all_tight) candidates.push_back(&members);
            }
            if (candidates.empty()) {
                // Numerical belt-and-braces: test every class with an
                // unfixed member.
                for (const auto& [key, members] : classes) {
                    for (int i : members) {
                        if (!is_fixed[static_cast<std::size_t>(i)]) {
                            candidates.push_back(&members);
                            break;
                        }
                    }
                }
            }

            bool fixed_any = false;
            const std::vector<int>* least_improvable = nullptr;
            double least_value = std::numeric_limits<double>::infinity();
            for (const auto* members : candidates) {
                int rep = -1;
                for (int i : *members) {
                    if (!is_fixed[static_cast<std::size_t>(i)]) {
                        rep = i;
                        break;
                    }
                }
                const double best = solve_improvement(rep, level, fixed, is_fixed, lp_count);
                if (best <= level + tight_eps) {
                    for (int i : *members) {
                        if (!is_fixed[static_cast<std::size_t>(i)]) {
                            is_fixed[static_cast<std::size_t>(i)] = true;
                            fixed[static_cast<std::size_t>(i)] = level;
                        }
                    }
                    fixed_any = true;
                } else if (best < least_value) {
                    least_value = best;
                    least_improvable = members;
                }
            }
            if (!fixed_any) {
                // Theory guarantees a blocked agent exists; if tolerance
                // hides it, fix the least-improvable class to make progress.
                if (least_improvable == nullptr) {
                    throw SolverError("leximin made no progress");
                }
                for (int i : *least_improvable) {
                    if (!is_fixed[static_cast<std::size_t>(i)]) {
                        is_fixed[static_cast<std::size_t>(i)] = true;
                        fixed[static_cast<std::size_t>(i)] = level;
                    }
                }
            }
        }
        return x;
    }
};

PanelLottery build_lottery(const RaterPool& pool, const std::vector<std::vector<int>>& panels,
                           std::vector<double> x, int k) {
    double total = 0.0;
    for (double v : x) total += v;
    if (total <= 0.0) throw SolverError("leximin produced an empty lottery");

    std::map<std::vector<std::string>, double> merged;
    for (std::size_t p = 0; p < panels.size(); ++p) {
        const double w = x[p] / total;
        if (w <= 1e-12) continue;
        merged[make_panel(pool, panels[p]).member_ids] += w;
    }
    double kept = 0.0;
    for (const auto& [ids, w] : merged) kept += w;

    PanelLottery lottery;
    lottery.k = k;
    for (const auto& [ids, w] : merged) {
        lottery.entries.push_back({Panel{ids}, w / kept});
    }
    return lottery;
}

// Randomized greedy construction of one feasible panel; nullptr weights mean
// uniform random order. Returns empty on failure.
std::vector<int> greedy_panel(const RaterPool& pool, const QuotaSpec& quota, Rng& rng,
                              const std::vector<double>* weights, int forced_member) {
    Enumerator helper(pool, quota, 1, true); // reuse count/prune machinery
    const int n = static_cast<int>(pool.records.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    if (weights == nullptr) {
        rng.shuffle(order);
    } else {
        std::vector<double> key(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            key[static_cast<std::size_t>(i)] =
                (*weights)[static_cast<std::size_t>(i)] + 1e-3 * rng.unit();
        }
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return key[static_cast<std::size_t>(a)] > key[static_cast<std::size_t>(b)]; });
    }
    if (forced_member >= 0) {
        order.erase(std::remove(order.begin(), order.end(), forced_member), order.end());
        order.insert(order.begin(), forced_member);
    }

    std::vector<int> chosen;
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    while (static_cast<int>(chosen.size()) < quota.k) {
        bool added = false;
        for (int i : order) {
            if (used[static_cast<std::size_t>(i)] || !helper.can_add(i)) continue;
            // Tentatively add, then verify the remainder stays completable
            // against the full pool (position 0 with the chosen set removed
            // is approximated by the global suffix counts; sound because the
            // acceptance check below still validates the finished panel).
            const auto& rec = pool.records[static_cast<std::size_t>(i)];
            for (std::size_t t = 0; t < helper.counts.size(); ++t) {
                helper.counts[t][static_cast<std::size_t>(rec.attribute_values[t])]++;
            }
            used[static_cast<std::size_t>(i)] = true;
            chosen.push_back(i);
            added = true;
            break;
        }
        if (!added) return {};
    }
    if (!helper.lower_bounds_met()) return {};
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

std::vector<std::vector<int>> column_generation_panels(const RaterPool& pool,
                                                       const QuotaSpec& quota,
                                                       const LeximinOptions& options) {
    Rng rng(derive_seed(options.seed, {0x70616e656cull}));
    std::set<std::vector<int>> seen;
    std::vector<std::vector<int>> panels;
    auto add = [&](std::vector<int> p) {
        if (p.empty()) return;
        if (seen.insert(p).second) panels.push_back(std::move(p));
    };
    for (int r = 0; r < options.greedy_restarts; ++r) {
        add(greedy_panel(pool, quota, rng, nullptr, -1));
    }
    // Try to cover every rater at least once.
    for (int i = 0; i < static_cast<int>(pool.records.size()); ++i) {
        bool covered = false;
        for (const auto& p : panels) {
            if (std::binary_search(p.begin(), p.end(), i)) {
                covered = true;
                break;
            }
        }
        if (!covered) {
            for (int attempt = 0; attempt < 20 && !covered; ++attempt) {
                auto p = greedy_panel(pool, quota, rng, nullptr, i);
                if (!p.empty()) {
                    add(std::move(p));
                    covered = true;
                }
            }
        }
    }
    if (panels.empty()) throw DataError("no feasible panel found by the randomized oracle");
    return panels;
}

bool lex_less(const std::vector<double>& a, const std::vector<double>& b, double tol) {
    for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) {
        if (a[i] < b[i] - tol) return true;
        if (a[i] > b[i] + tol) return false;
    }
    return false;
}

} // namespace

LeximinResult leximin_lottery(const RaterPool& pool, const QuotaSpec& quota,
                              const LeximinOptions& options) {
    LeximinResult result;
    std::vector<std::vector<int>> panels;
    bool exact = true;
    try {
        panels = enumerate_indices(pool, quota, options.enumeration_cap, false);
        if (panels.empty()) throw DataError("no feasible panel exists for the given quotas");
        result.method = "enumerated";
    } catch (const SolverError&) {
        if (!options.allow_approximation) throw;
        exact = false;
        result.method = "column_generation";
        panels = column_generation_panels(pool, quota, options);
    }

    if (exact) {
        LeximinState state(pool, panels, options.tolerance);
        std::vector<double> x = state.run(result.rounds, result.lp_solves);
        result.lottery = build_lottery(pool, panels, std::move(x), quota.k);
        result.panels_considered = panels.size();
    } else {
        // Column generation: alternate leximin solves on the working set with
        // randomized-oracle augmentation targeting low-probability raters.
        Rng rng(derive_seed(options.seed, {0x636f6c67656eull}));
        std::vector<double> best_sorted;
        std::vector<double> x;
        int stalls = 0;
        for (int iter = 0; iter < 50; ++iter) {
            LeximinState state(pool, panels, options.tolerance);
            x = state.run(result.rounds, result.lp_solves);
            std::vector<double> pi = state.probs_from(x);
            std::vector<double> sorted_pi = pi;
            std::sort(sorted_pi.begin(), sorted_pi.end());
            if (!best_sorted.empty() && !lex_less(best_sorted, sorted_pi, 1e-7)) {
                ++stalls;
                if (stalls >= options.stall_limit) break;
            } else {
                stalls = 0;
                best_sorted = sorted_pi;
            }
            // Oracle: prioritize raters by ascending probability.
            std::vector<double> weight(pool.records.size(), 0.0);
            const double top = *std::max_element(pi.begin(), pi.end());
            for (std::size_t i = 0; i < pi.size(); ++i) weight[i] = top - pi[i];
            std::set<std::vector<int>> seen(panels.begin(), panels.end());
            bool grew = false;
            for (int r = 0; r < options.greedy_restarts / 4 + 1; ++r) {
                auto p = greedy_panel(pool, quota, rng, &weight, -1);
                if (!p.empty() && seen.insert(p).second) {
                    panels.push_back(std::move(p));
                    grew = true;
                }
            }
            if (!grew) break;
        }
        result.lottery = build_lottery(pool, panels, std::move(x), quota.k);
        result.panels_considered = panels.size();
    }

    result.exact = exact;
    if (options.symmetrize) result.lottery = symmetrize(result.lottery, pool);
    result.probs = inclusion_probabilities(result.lottery, pool);
    return result;
}

InclusionProbs inclusion_probabilities(const PanelLottery& lottery, const RaterPool& pool) {
    InclusionProbs probs;
    for (const auto& rec : pool.records) probs.pi[rec.rater_id] = 0.0;
    for (const auto& [panel, weight] : lottery.entries) {
        for (const auto& id : panel.member_ids) {
            auto it = probs.pi.find(id);
            if (it == probs.pi.end()) throw DataError("lottery panel member not in pool: " + id);
            it->second += weight;
        }
    }
    return probs;
}

PanelLottery symmetrize(const PanelLottery& lottery, const RaterPool& pool) {
    // Group raters by attribute vector.
    std::map<std::string, std::vector<std::string>> classes;
    for (std::size_t i = 0; i < pool.records.size(); ++i) {
        classes[pool.attribute_key(static_cast<int>(i))].push_back(pool.records[i].rater_id);
    }

    std::map<std::vector<std::string>, double> entries;
    for (const auto& [panel, w] : lottery.entries) entries[panel.member_ids] += w;

    InclusionProbs probs = inclusion_probabilities(lottery, pool);
    for (auto& [key, members] : classes) {
        if (members.size() < 2) continue;
        std::sort(members.begin(), members.end());
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& id : members) {
            lo = std::min(lo, probs.at(id));
            hi = std::max(hi, probs.at(id));
        }
        if (hi - lo <= 1e-9) continue;

        // Cyclic orbit-average within the class: swapping raters with equal
        // attribute vectors maps feasible panels to feasible panels.
        std::map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < members.size(); ++i) pos[members[i]] = i;
        std::map<std::vector<std::string>, double> averaged;
        const double share = 1.0 / static_cast<double>(members.size());
        for (const auto& [ids, w] : entries) {
            for (std::size_t shift = 0; shift < members.size(); ++shift) {
                std::vector<std::string> rotated;
                rotated.reserve(ids.size());
                for (const auto& id : ids) {
                    auto it = pos.find(id);
                    if (it == pos.end()) {
                        rotated.push_back(id);
                    } else {
                        rotated.push_back(members[(it->second + shift) % members.size()]);
                    }
                }
                std::sort(rotated.begin(), rotated.end());
                averaged[rotated] += w * share;
            }
        }
        entries = std::move(averaged);
        // Recompute probabilities for subsequent classes.
        PanelLottery tmp;
        tmp.k = lottery.k;
        for (const auto& [ids, w] : entries) tmp.entries.push_back({Panel{ids}, w});
        probs = inclusion_probabilities(tmp, pool);
    }

    PanelLottery out;
    out.k = lottery.k;
    double total = 0.0;
    for (const auto& [ids, w] : entries) total += w;
    for (const auto& [ids, w] : entries) {
        if (w / total <= 1e-15) continue;
        out.entries.push_back({Panel{ids}, w / total});
    }
    return out;
}

Panel sample_panel(const PanelLottery& lottery, std::uint64_t seed) {
    if (lottery.entries.empty()) throw DataError("cannot sample from an empty lottery");
    Rng rng(derive_seed(seed, {0x73616d706c65ull}));
    const double u = rng.unit();
    double acc = 0.0;
    for (const auto& [panel, w] : lottery.entries) {
        acc += w;
        if (u < acc) return panel;
    }
    return lottery.entries.back().first;
}

LotteryDiagnostics lottery_diagnostics(const PanelLottery& lottery, const QuotaSpec& quota,
                                       const RaterPool& pool, const PopulationTargets* targets) {
    LotteryDiagnostics d;
    d.k = quota.k;
    d.support_size = lottery.entries.size();

    InclusionProbs probs = inclusion_probabilities(lottery, pool);
    d.pi_sum = probs.sum();
    d.min_pi = std::numeric_limits<double>::infinity();
    d.max_pi = 0.0;
    double pref_mass = 0.0;
    for (const auto& rec : pool.records) {
        const double p = probs.at(rec.rater_id);
        d.min_pi = std::min(d.min_pi, p);
        d.max_pi = std::max(d.max_pi, p);
        if (p <= 1e-12) ++d.zero_pi_raters;
        if (rec.has_preference_data) pref_mass += p;
    }
    d.preference_mass_share = d.pi_sum > 0 ? pref_mass / d.pi_sum : 0.0;

    double worst_dev = 0.0;
    for (const auto& [panel, w] : lottery.entries) {
        (void)w;
        if (!check_feasibility(panel, quota, pool).empty()) ++d.quota_violations;
        if (targets != nullptr) {
            const auto& schema = pool.schema;
            std::vector<std::vector<int>> counts(schema.attributes.size());
            for (std::size_t t = 0; t < schema.attributes.size(); ++t) {
                counts[t].assign(schema.attributes[t].categories.size(), 0);
            }
            for (const auto& id : panel.member_ids) {
                const RaterRecord& rec = pool.by_id(id);
                for (std::size_t t = 0; t < schema.attributes.size(); ++t) {
                    counts[t][static_cast<std::size_t>(rec.attribute_values[t])]++;
                }
            }
            for (const auto& b : quota.bounds) {
                const double share =
                    static_cast<double>(counts[static_cast<std::size_t>(b.attr)]
                                              [static_cast<std::size_t>(b.cat)]) /
                    static_cast<double>(quota.k);
                const double dev = std::abs(share - targets->at(b.attr, b.cat)) * 100.0;
                worst_dev = std::max(worst_dev, dev);
            }
        }
    }
    if (targets != nullptr) d.max_abs_deviation_pp = worst_dev;
    return d;
}

nlohmann::json LotteryDiagnostics::to_json() const {
    json j;
    j["pi_sum"] = pi_sum;
    j["k"] = k;
    j["min_pi"] = min_pi;
    j["max_pi"] = max_pi;
    j["support_size"] = support_size;
    j["zero_pi_raters"] = zero_pi_raters;
    j["quota_violations"] = quota_violations;
    j["preference_mass_share"] = preference_mass_share;
    if (max_abs_deviation_pp.has_value()) {
        j["max_abs_deviation_pp"] = *max_abs_deviation_pp;
    } else {
        j["max_abs_deviation_pp"] = nullptr;
    }
    return j;
}

int max_feasible_k(const RaterPool& pool, const PopulationTargets& targets,
                   const AttributeSchema& schema, double tau, int k_max) {
    for (int k = std::min(k_max, static_cast<int>(pool.records.size())); k >= 1; --k) {
        QuotaSpec quota = quota_bounds(targets, schema, k, tau);
        auto found = enumerate_indices(pool, quota, 1, true);
        if (!found.empty()) return k;
    }
    return 0;
}

bool feasible_panel_exists(const RaterPool& pool, const QuotaSpec& quota) {
    if (quota.k > static_cast<int>(pool.records.size())) return false;
    return !enumerate_indices(pool, quota, 1, true).empty();
}

json lottery_to_json(const PanelLottery& lottery) {
    json j;
    j["k"] = lottery.k;
    json panels = json::array();
    for (const auto& [panel, w] : lottery.entries) {
        json e;
        e["members"] = panel.member_ids;
        e["probability"] = w;
        panels.push_back(std::move(e));
    }
    j["panels"] = std::move(panels);
    return j;
}

PanelLottery lottery_from_json(const json& j) {
    PanelLottery lottery;
    try {
        lottery.k = j.at("k").get<int>();
        for (const auto& e : j.at("panels")) {
            Panel p;
            p.member_ids = e.at("members").get<std::vector<std::string>>();
            std::sort(p.member_ids.begin(), p.member_ids.end());
            lottery.entries.push_back({std::move(p), e.at("probability").get<double>()});
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("lottery parse failure: ") + e.what());
    }
    double sum = 0.0;
    for (const auto& [panel, w] : lottery.entries) {
        if (w < 0.0) throw DataError("lottery probability is negative");
        if (static_cast<int>(panel.member_ids.size()) != lottery.k) {
            throw DataError("lottery panel size does not match k");
        }
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw DataError("lottery probabilities do not sum to 1");
    return lottery;
}

json inclusion_to_json(const InclusionProbs& probs, int k) {
    json j;
    j["k"] = k;
    j["pi"] = json::object();
    for (const auto& [id, p] : probs.pi) j["pi"][id] = p;
    return j;
}

InclusionProbs inclusion_from_json(const json& j) {
    InclusionProbs probs;
    try {
        for (const auto& [id, p] : j.at("pi").items()) {
            probs.pi[id] = p.get<double>();
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("inclusion probabilities parse failure: ") + e.what());
    }
    return probs;
}

} // namespace panelkit
