#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "panelkit/errors.hpp"
#include "panelkit/rng.hpp"
#include "panelkit/sortition.hpp"

using namespace panelkit;

namespace {

// Pool with one "grade" attribute; ids are <category><index>, e.g. a1, b2.
RaterPool grade_pool(int n_a, int n_b) {
    RaterPool pool;
    pool.schema.attributes.push_back({"grade", {"A", "B"}, {}});
    for (int i = 1; i <= n_a; ++i) {
        pool.records.push_back({"a" + std::to_string(i), {0}, {}, {}, true});
    }
    for (int i = 1; i <= n_b; ++i) {
        pool.records.push_back({"b" + std::to_string(i), {1}, {}, {}, true});
    }
    pool.rebuild_index();
    return pool;
}

QuotaSpec exact_quota(int k, int a_count, int b_count) {
    QuotaSpec q;
    q.k = k;
    q.bounds.push_back({0, 0, a_count, a_count});
    q.bounds.push_back({0, 1, b_count, b_count});
    return q;
}

QuotaSpec no_bounds(int k) {
    QuotaSpec q;
    q.k = k;
    return q;
}

} // namespace

TEST_CASE("feasibility check reports exact quota satisfaction") {
    RaterPool pool = grade_pool(1, 1);
    pool.records[0].rater_id = "f1";
    pool.records[1].rater_id = "m1";
    pool.rebuild_index();
    QuotaSpec q = exact_quota(2, 1, 1);

    CHECK(check_feasibility(Panel{{"f1", "m1"}}, q, pool).empty());

    RaterPool pool2 = grade_pool(2, 1);
    auto violations = check_feasibility(Panel{{"a1", "a2"}}, q, pool2);
    REQUIRE(violations.size() == 2); // A over, B under
    bool saw_b_under = false;
    for (const auto& v : violations) {
        if (v.category == "B" && v.observed == 0 && v.lower == 1) saw_b_under = true;
    }
    CHECK(saw_b_under);

    auto size_violations = check_feasibility(Panel{{"a1"}}, no_bounds(2), pool2);
    REQUIRE(size_violations.size() == 1);
    CHECK(size_violations[0].attribute.empty());
    CHECK(size_violations[0].observed == 1);

    CHECK_THROWS_AS(check_feasibility(Panel{{"ghost"}}, q, pool2), DataError);
}

TEST_CASE("enumeration matches hand counts") {
    // 2x2 choice: quota exactly one A and one B from {a1,a2,b1,b2}.
    RaterPool pool = grade_pool(2, 2);
    auto panels = enumerate_feasible_panels(pool, exact_quota(2, 1, 1), 1000);
    CHECK(panels.size() == 4);

    // No bounds: C(4,2) = 6.
    auto all = enumerate_feasible_panels(pool, no_bounds(2), 1000);
    CHECK(all.size() == 6);
    // Deterministic lexicographic order by sorted member ids.
    CHECK(all[0].member_ids == std::vector<std::string>{"a1", "a2"});
    CHECK(all[1].member_ids == std::vector<std::string>{"a1", "b1"});

    // Unsatisfiable: lower bounds exceed k.
    QuotaSpec bad = exact_quota(2, 2, 2);
    CHECK_THROWS_AS(enumerate_feasible_panels(pool, bad, 1000), DataError);

    // Cap exceeded signals the approximation path.
    CHECK_THROWS_AS(enumerate_feasible_panels(pool, no_bounds(2), 3), SolverError);
}

TEST_CASE("leximin on the symmetric 2+2 instance gives uniform halves") {
    RaterPool pool = grade_pool(2, 2);
    auto result = leximin_lottery(pool, exact_quota(2, 1, 1));
    CHECK(result.exact);
    for (const auto& [id, p] : result.probs.pi) {
        CHECK(p == doctest::Approx(0.5).epsilon(1e-9));
    }
    CHECK(result.probs.sum() == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("leximin on the 3+1 instance protects the scarce rater") {
    // Feasible panels: {a_i, b1} for i in 1..3. b1 is always included;
    // the unique leximin lottery spreads the a's evenly.
    RaterPool pool = grade_pool(3, 1);
    auto result = leximin_lottery(pool, exact_quota(2, 1, 1));
    CHECK(result.probs.at("b1") == doctest::Approx(1.0).epsilon(1e-9));
    for (const auto& id : {"a1", "a2", "a3"}) {
        CHECK(result.probs.at(id) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    }
    CHECK(result.lottery.entries.size() == 3);
}

TEST_CASE("no bounds and k = n force a single full panel") {
    RaterPool pool = grade_pool(2, 1);
    auto result = leximin_lottery(pool, no_bounds(3));
    REQUIRE(result.lottery.entries.size() == 1);
    CHECK(result.lottery.entries[0].second == doctest::Approx(1.0));
    for (const auto& [id, p] : result.probs.pi) {
        CHECK(p == doctest::Approx(1.0));
    }
}

TEST_CASE("inclusion probabilities are linear in lottery weights") {
    RaterPool pool = grade_pool(2, 1);
    PanelLottery lottery;
    lottery.k = 2;
    lottery.entries.push_back({Panel{{"a1", "a2"}}, 1.0});
    auto probs = inclusion_probabilities(lottery, pool);
    CHECK(probs.at("a1") == doctest::Approx(1.0));
    CHECK(probs.at("a2") == doctest::Approx(1.0));
    CHECK(probs.at("b1") == doctest::Approx(0.0));

    PanelLottery mixed;
    mixed.k = 2;
    mixed.entries.push_back({Panel{{"a1", "a2"}}, 0.5});
    mixed.entries.push_back({Panel{{"a1", "b1"}}, 0.5});
    auto probs2 = inclusion_probabilities(mixed, pool);
    CHECK(probs2.at("a1") == doctest::Approx(1.0));
    CHECK(probs2.at("a2") == doctest::Approx(0.5));
    CHECK(probs2.at("b1") == doctest::Approx(0.5));
    CHECK(probs2.sum() == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("symmetrize equalizes interchangeable raters") {
    RaterPool pool = grade_pool(2, 1);
    // Asymmetric lottery over {a1,b1} and {a2,b1}: a1 gets 0.6, a2 gets 0.4.
    PanelLottery lottery;
    lottery.k = 2;
    lottery.entries.push_back({Panel{{"a1", "b1"}}, 0.6});
    lottery.entries.push_back({Panel{{"a2", "b1"}}, 0.4});

    PanelLottery sym = symmetrize(lottery, pool);
    auto probs = inclusion_probabilities(sym, pool);
    CHECK(probs.at("a1") == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(probs.at("a2") == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(probs.at("b1") == doctest::Approx(1.0).epsilon(1e-12));

    // Feasibility of every supported panel is preserved.
    for (const auto& [panel, w] : sym.entries) {
        CHECK(check_feasibility(panel, exact_quota(2, 1, 1), pool).empty());
    }

    // Already-symmetric input is a fixed point (same entries up to order).
    PanelLottery again = symmetrize(sym, pool);
    auto probs2 = inclusion_probabilities(again, pool);
    for (const auto& [id, p] : probs.pi) {
        CHECK(probs2.at(id) == doctest::Approx(p).epsilon(1e-12));
    }

    // Singleton classes only: identity.
    RaterPool singles = grade_pool(1, 1);
    PanelLottery point;
    point.k = 2;
    point.entries.push_back({Panel{{"a1", "b1"}}, 1.0});
    PanelLottery same = symmetrize(point, singles);
    REQUIRE(same.entries.size() == 1);
    CHECK(same.entries[0].first.member_ids == std::vector<std::string>{"a1", "b1"});
}

TEST_CASE("sampling is deterministic and matches lottery weights") {
    RaterPool pool = grade_pool(2, 2);
    PanelLottery point;
    point.k = 2;
    point.entries.push_back({Panel{{"a1", "b1"}}, 1.0});
    for (std::uint64_t seed : {1ull, 2ull, 99ull}) {
        CHECK(sample_panel(point, seed).member_ids == std::vector<std::string>{"a1", "b1"});
    }

    PanelLottery coin;
    coin.k = 2;
    coin.entries.push_back({Panel{{"a1", "a2"}}, 0.5});
    coin.entries.push_back({Panel{{"b1", "b2"}}, 0.5});
    int first = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        if (sample_panel(coin, 7000 + static_cast<std::uint64_t>(i)).member_ids[0] == "a1") {
            ++first;
        }
    }
    CHECK(std::abs(first / static_cast<double>(draws) - 0.5) < 0.02);

    CHECK(sample_panel(coin, 42).member_ids == sample_panel(coin, 42).member_ids);
}

TEST_CASE("diagnostics report mass, support, and deviations") {
    RaterPool pool = grade_pool(2, 2);
    pool.records[3].has_preference_data = false; // b2 is survey-only
    auto result = leximin_lottery(pool, exact_quota(2, 1, 1));
    PopulationTargets targets;
    targets.proportions = {{0.5, 0.5}};

    auto diag = lottery_diagnostics(result.lottery, exact_quota(2, 1, 1), pool, &targets);
    CHECK(diag.pi_sum == doctest::Approx(2.0));
    CHECK(diag.quota_violations == 0);
    CHECK(diag.support_size == result.lottery.entries.size());
    REQUIRE(diag.max_abs_deviation_pp.has_value());
    CHECK(*diag.max_abs_deviation_pp == doctest::Approx(0.0)); // exact halves
    CHECK(diag.preference_mass_share < 1.0);
    CHECK(diag.min_pi > 0.0);

    // Zero-pi rater shows up in the min field.
    PanelLottery narrow;
    narrow.k = 2;
    narrow.entries.push_back({Panel{{"a1", "b1"}}, 1.0});
    auto diag2 = lottery_diagnostics(narrow, exact_quota(2, 1, 1), pool, &targets);
    CHECK(diag2.min_pi == doctest::Approx(0.0));
    CHECK(diag2.zero_pi_raters == 2);
}

TEST_CASE("lottery and inclusion serialization round-trip") {
    RaterPool pool = grade_pool(3, 1);
    auto result = leximin_lottery(pool, exact_quota(2, 1, 1));

    const auto j = lottery_to_json(result.lottery);
    PanelLottery back = lottery_from_json(j);
    REQUIRE(back.entries.size() == result.lottery.entries.size());
    CHECK(lottery_to_json(back).dump(2) == j.dump(2));

    const auto ji = inclusion_to_json(result.probs, result.lottery.k);
    InclusionProbs probs = inclusion_from_json(ji);
    CHECK(probs.at("b1") == doctest::Approx(1.0));

    CHECK_THROWS_AS(lottery_from_json(nlohmann::json{{"k", 2}}), DataError);
}

TEST_CASE("randomized instances: sum rule, feasibility, symmetry, dominance") {
    for (std::uint64_t instance = 0; instance < 12; ++instance) {
        Rng rng(derive_seed(9000, {instance}));
        const int n_a = 2 + static_cast<int>(rng.below(5));
        const int n_b = 2 + static_cast<int>(rng.below(4));
        const int n = n_a + n_b;
        RaterPool pool = grade_pool(n_a, n_b);
        const int k = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n / 2)));

        PopulationTargets targets;
        const double p = 0.3 + 0.4 * rng.unit();
        targets.proportions = {{p, 1.0 - p}};
        const QuotaSpec quota = quota_bounds(targets, pool.schema, k, 0.3 + 0.3 * rng.unit());

        std::vector<Panel> panels;
        try {
            panels = enumerate_feasible_panels(pool, quota, 100000);
        } catch (const DataError&) {
            continue; // infeasible draw
        }
        auto result = leximin_lottery(pool, quota);

        // Lemma: inclusion probabilities sum to k.
        CHECK(std::abs(result.probs.sum() - k) <= 1e-9);

        // Every supported panel is feasible.
        for (const auto& [panel, w] : result.lottery.entries) {
            CHECK(check_feasibility(panel, quota, pool).empty());
        }

        // Symmetry within equivalence classes.
        std::map<int, std::vector<double>> by_class;
        for (const auto& rec : pool.records) {
            by_class[rec.attribute_values[0]].push_back(result.probs.at(rec.rater_id));
        }
        for (const auto& [cls, values] : by_class) {
            for (double v : values) CHECK(std::abs(v - values[0]) <= 1e-9);
        }

        // Leximin dominance over the uniform lottery on feasible panels.
        InclusionProbs uniform;
        for (const auto& rec : pool.records) uniform.pi[rec.rater_id] = 0.0;
        for (const auto& panel : panels) {
            for (const auto& id : panel.member_ids) {
                uniform.pi[id] += 1.0 / static_cast<double>(panels.size());
            }
        }
        std::vector<double> ours, base;
        for (const auto& [id, v] : result.probs.pi) ours.push_back(v);
        for (const auto& [id, v] : uniform.pi) base.push_back(v);
        std::sort(ours.begin(), ours.end());
        std::sort(base.begin(), base.end());
        bool dominated = false;
        for (std::size_t i = 0; i < ours.size(); ++i) {
            if (ours[i] > base[i] + 1e-7) break;
            if (ours[i] < base[i] - 1e-7) {
                dominated = true;
                break;
            }
        }
        CHECK_FALSE(dominated);
    }
}

TEST_CASE("column generation path stays feasible and keeps the sum rule") {
    RaterPool pool = grade_pool(14, 10);
    PopulationTargets targets;
    targets.proportions = {{0.5, 0.5}};
    const QuotaSpec quota = quota_bounds(targets, pool.schema, 6, 0.2);

    LeximinOptions opts;
    opts.enumeration_cap = 50; // force the fallback
    opts.allow_approximation = true;
    opts.seed = 11;
    auto result = leximin_lottery(pool, quota, opts);
    CHECK_FALSE(result.exact);
    CHECK(result.method == "column_generation");
    CHECK(std::abs(result.probs.sum() - 6.0) <= 1e-9);
    for (const auto& [panel, w] : result.lottery.entries) {
        CHECK(check_feasibility(panel, quota, pool).empty());
    }
    // The max-min level should be strictly positive here.
    double min_pi = 1.0;
    for (const auto& [id, p] : result.probs.pi) min_pi = std::min(min_pi, p);
    CHECK(min_pi > 0.0);

    // Cap exceeded with approximation disabled stays an error.
    LeximinOptions strict;
    strict.enumeration_cap = 50;
    strict.allow_approximation = false;
    CHECK_THROWS_AS(leximin_lottery(pool, quota, strict), SolverError);
}

TEST_CASE("empirical panel frequencies converge to inclusion probabilities") {
    RaterPool pool = grade_pool(3, 1);
    auto result = leximin_lottery(pool, exact_quota(2, 1, 1));
    std::map<std::string, int> hits;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        for (const auto& id :
             sample_panel(result.lottery, derive_seed(123, {static_cast<std::uint64_t>(i)}))
                 .member_ids) {
            hits[id]++;
        }
    }
    for (const auto& [id, expected] : result.probs.pi) {
        const double freq = hits[id] / static_cast<double>(draws);
        const double se = std::sqrt(std::max(expected * (1 - expected), 1e-9) / draws);
        CHECK(std::abs(freq - expected) <= std::max(3 * se, 1e-3));
    }
}

TEST_CASE("max feasible k utility scans downward") {
    RaterPool pool = grade_pool(3, 3);
    PopulationTargets targets;
    targets.proportions = {{0.5, 0.5}};
    // tau = 0, even k requires an exact split; k = 6 uses the whole pool.
    CHECK(max_feasible_k(pool, targets, pool.schema, 0.0, 7) == 6);

    // With only one B rater, k = 4 would need floor(2) = 2 of them.
    RaterPool scarce = grade_pool(3, 1);
    CHECK(max_feasible_k(scarce, targets, scarce.schema, 0.0, 6) == 3);
}

TEST_CASE("sorted leximin vector is unchanged by symmetrization") {
    RaterPool pool = grade_pool(4, 2);
    PopulationTargets targets;
    targets.proportions = {{0.6, 0.4}};
    const QuotaSpec quota = quota_bounds(targets, pool.schema, 3, 0.25);

    LeximinOptions no_sym;
    no_sym.symmetrize = false;
    auto raw = leximin_lottery(pool, quota, no_sym);
    auto sym_lottery = symmetrize(raw.lottery, pool);
    auto sym_probs = inclusion_probabilities(sym_lottery, pool);

    std::vector<double> a, b;
    for (const auto& [id, p] : raw.probs.pi) a.push_back(p);
    for (const auto& [id, p] : sym_probs.pi) b.push_back(p);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-9));
    }
}
