#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "panelkit/errors.hpp"
#include "panelkit/rng.hpp"
#include "panelkit/stats.hpp"

using namespace panelkit;

namespace {

Ranking rank(const std::string& qid, int trial, std::vector<std::string> order,
             std::vector<std::string> presented = {}) {
    Ranking r;
    r.question_id = qid;
    r.trial_id = trial;
    r.order = std::move(order);
    r.presented = std::move(presented);
    return r;
}

} // namespace

TEST_CASE("constant statistic yields a zero-width interval") {
    auto res = bootstrap_scalar(10, [](const std::vector<std::size_t>&) { return 3.5; },
                                {200, 1});
    CHECK(res.point == doctest::Approx(3.5));
    CHECK(res.lower == doctest::Approx(3.5));
    CHECK(res.upper == doctest::Approx(3.5));
}

TEST_CASE("bootstrap is deterministic under the seed") {
    std::vector<double> data;
    Rng rng(8);
    for (int i = 0; i < 100; ++i) data.push_back(rng.normal());
    auto stat = [&](const std::vector<std::size_t>& idx) {
        double s = 0.0;
        for (auto i : idx) s += data[i];
        return s / static_cast<double>(idx.size());
    };
    auto a = bootstrap_scalar(data.size(), stat, {500, 42});
    auto b = bootstrap_scalar(data.size(), stat, {500, 42});
    CHECK(a.lower == b.lower);
    CHECK(a.upper == b.upper);
    auto c = bootstrap_scalar(data.size(), stat, {500, 43});
    CHECK((a.lower != c.lower || a.upper != c.upper));
}

TEST_CASE("bernoulli mean interval width matches the normal approximation") {
    // n = 400, p = 0.5: width ~ 2 * 1.96 * sqrt(0.25/400) = 0.098
    std::vector<double> data(400);
    Rng rng(77);
    for (auto& v : data) v = rng.unit() < 0.5 ? 1.0 : 0.0;
    auto res = bootstrap_scalar(
        data.size(),
        [&](const std::vector<std::size_t>& idx) {
            double s = 0.0;
            for (auto i : idx) s += data[i];
            return s / static_cast<double>(idx.size());
        },
        {1000, 5});
    const double width = res.upper - res.lower;
    CHECK(width > 0.098 * 0.8);
    CHECK(width < 0.098 * 1.2);
}

TEST_CASE("bootstrap reports which resample broke the statistic") {
    auto failing = [](const std::vector<std::size_t>& idx) -> double {
        if (idx[0] == 2) throw DataError("boom");
        return 1.0;
    };
    CHECK_THROWS_AS(bootstrap_scalar(5, failing, {200, 3}), DataError);
}

TEST_CASE("bootstrap coverage for a bernoulli mean sits near nominal") {
    // 500 replications of a n=150 Bernoulli(0.3) sample; count how often the
    // percentile interval covers the true mean.
    int covered = 0;
    const double p = 0.3;
    for (int rep = 0; rep < 500; ++rep) {
        Rng rng(derive_seed(4242, {static_cast<std::uint64_t>(rep)}));
        std::vector<double> data(150);
        for (auto& v : data) v = rng.unit() < p ? 1.0 : 0.0;
        auto res = bootstrap_scalar(
            data.size(),
            [&](const std::vector<std::size_t>& idx) {
                double s = 0.0;
                for (auto i : idx) s += data[i];
                return s / static_cast<double>(idx.size());
            },
            {400, derive_seed(9999, {static_cast<std::uint64_t>(rep)})});
        if (res.lower <= p && p <= res.upper) ++covered;
    }
    const double coverage = covered / 500.0;
    CHECK(coverage >= 0.92);
    CHECK(coverage <= 0.975);
}

TEST_CASE("kendall tau normalization") {
    CHECK(kendall_tau({"A", "B", "C"}, {"A", "B", "C"}) == doctest::Approx(1.0));
    CHECK(kendall_tau({"A", "B", "C"}, {"C", "B", "A"}) == doctest::Approx(-1.0));
    CHECK(kendall_tau({"A", "B", "C"}, {"B", "A", "C"}) == doctest::Approx(1.0 - 2.0 / 3.0));
}

TEST_CASE("inter-judge agreement over questions") {
    // Identical judges agree perfectly.
    std::vector<Ranking> same = {rank("q1", 0, {"A", "B", "C"}), rank("q1", 1, {"A", "B", "C"}),
                                 rank("q2", 0, {"B", "A", "C"}), rank("q2", 1, {"B", "A", "C"})};
    CHECK(kendall_tau_agreement(same) == doctest::Approx(1.0));

    // Exactly reversed judges.
    std::vector<Ranking> reversed = {rank("q1", 0, {"A", "B", "C"}),
                                     rank("q1", 1, {"C", "B", "A"})};
    CHECK(kendall_tau_agreement(reversed) == doctest::Approx(-1.0));

    std::vector<Ranking> lonely = {rank("q1", 0, {"A", "B"})};
    CHECK_THROWS_AS(kendall_tau_agreement(lonely), DataError);
}

TEST_CASE("fleiss kappa on the top choice") {
    // Perfect agreement.
    std::vector<Ranking> perfect;
    for (const auto& q : {"q1", "q2", "q3"}) {
        for (int t = 0; t < 3; ++t) perfect.push_back(rank(q, t, {"A", "B", "C"}));
    }
    CHECK(fleiss_kappa_top1(perfect) == doctest::Approx(1.0));

    // Constructed chance-level table: 4 questions, 2 trials, 2 categories;
    // one unanimous A, one unanimous B, two split -> observed = chance = 0.5.
    std::vector<Ranking> chance = {
        rank("q1", 0, {"A", "B"}), rank("q1", 1, {"A", "B"}),
        rank("q2", 0, {"B", "A"}), rank("q2", 1, {"B", "A"}),
        rank("q3", 0, {"A", "B"}), rank("q3", 1, {"B", "A"}),
        rank("q4", 0, {"B", "A"}), rank("q4", 1, {"A", "B"}),
    };
    CHECK(fleiss_kappa_top1(chance) == doctest::Approx(0.0).epsilon(1e-12));

    // Unequal trial counts are reported by question.
    std::vector<Ranking> uneven = {rank("q1", 0, {"A", "B"}), rank("q1", 1, {"A", "B"}),
                                   rank("q2", 0, {"A", "B"})};
    CHECK_THROWS_WITH_AS(fleiss_kappa_top1(uneven), doctest::Contains("q2"), DataError);
}

TEST_CASE("vote-level win rates and the majority variant") {
    std::vector<Ranking> rankings = {
        rank("q1", 0, {"A", "B"}), rank("q1", 1, {"A", "B"}), rank("q1", 2, {"B", "A"}),
        rank("q2", 0, {"A", "B"}), rank("q2", 1, {"B", "A"}), rank("q2", 2, {"B", "A"}),
    };
    auto res = pairwise_win_rate(rankings, "A", "B", {200, 9});
    CHECK(res.vote_rate == doctest::Approx(0.5));
    CHECK(res.votes == 6);
    CHECK(res.questions == 2);
    CHECK(res.majority_rate == doctest::Approx(0.5)); // q1 to A, q2 to B
    CHECK(res.majority_ties == 0);

    // Complement: rate(B over A) = 1 - rate(A over B) for total orders.
    auto comp = pairwise_win_rate(rankings, "B", "A", {200, 9});
    CHECK(comp.vote_rate == doctest::Approx(1.0 - res.vote_rate));

    // Sweep wins.
    std::vector<Ranking> sweep = {rank("q1", 0, {"A", "B"}), rank("q2", 0, {"A", "B"})};
    auto all = pairwise_win_rate(sweep, "A", "B", {100, 1});
    CHECK(all.vote_rate == doctest::Approx(1.0));

    // Even trial counts can tie; ties are excluded and counted.
    std::vector<Ranking> tied = {rank("q1", 0, {"A", "B"}), rank("q1", 1, {"B", "A"})};
    auto t = pairwise_win_rate(tied, "A", "B", {100, 1});
    CHECK(t.majority_ties == 1);

    CHECK_THROWS_AS(pairwise_win_rate(sweep, "A", "Z", {100, 1}), DataError);
}

TEST_CASE("position bias detects an order-following judge") {
    // Judge output equals the presented order.
    std::vector<Ranking> follow;
    std::vector<std::vector<std::string>> presentations = {
        {"A", "B", "C"}, {"B", "C", "A"}, {"C", "A", "B"}, {"B", "A", "C"}};
    int t = 0;
    for (const auto& pres : presentations) {
        follow.push_back(rank("q" + std::to_string(t), t, pres, pres));
        ++t;
    }
    auto res = position_bias(follow);
    CHECK(res.pearson_rho == doctest::Approx(1.0));
    CHECK(res.top1_by_position[0] == doctest::Approx(1.0));
    CHECK(res.top1_by_position[1] == doctest::Approx(0.0));

    // Presentation-invariant judge with random presentation: rho near 0.
    Rng rng(12);
    std::vector<Ranking> invariant;
    const std::vector<std::string> truth = {"A", "B", "C", "D"};
    for (int i = 0; i < 10000; ++i) {
        std::vector<std::string> pres = truth;
        rng.shuffle(pres);
        invariant.push_back(rank("q" + std::to_string(i), 0, truth, pres));
    }
    auto res2 = position_bias(invariant);
    CHECK(std::abs(res2.pearson_rho) <= 0.05);

    std::vector<Ranking> missing = {rank("q", 0, {"A", "B"})};
    CHECK_THROWS_AS(position_bias(missing), DataError);
}

TEST_CASE("length bias counts longer-wins pairs") {
    std::map<std::string, std::map<std::string, std::string>> texts;
    texts["q1"]["A"] = "the longest response of them all";
    texts["q1"]["B"] = "short";
    texts["q1"]["C"] = "medium text";

    // Judge always prefers the longer response.
    std::vector<Ranking> longer = {rank("q1", 0, {"A", "C", "B"})};
    auto res = length_bias(texts, longer);
    CHECK(res.longer_wins_rate == doctest::Approx(1.0));
    CHECK(res.pairs_counted == 3);
    CHECK(res.corr_chars < 0.0); // longer ranks better -> negative correlation

    // Tied lengths are excluded from the rate.
    texts["q1"]["B"] = "mediumtext1"; // same length as "medium text"
    auto res2 = length_bias(texts, longer);
    CHECK(res2.pairs_tied_length == 1);
    CHECK(res2.pairs_counted == 2);
}

TEST_CASE("rank position probabilities are doubly stochastic") {
    std::vector<Ranking> rankings;
    for (int i = 0; i < 12; ++i) {
        rankings.push_back(rank("q" + std::to_string(i % 4), i, {"A", "B", "C"}));
    }
    auto mat = rank_position_probabilities(rankings, ConsensusMethod::kemeny, {100, 3});
    CHECK(mat.exact_match_rate == doctest::Approx(1.0)); // identical rankings
    for (std::size_t i = 0; i < mat.items.size(); ++i) {
        double row = 0.0, col = 0.0;
        for (std::size_t p = 0; p < mat.items.size(); ++p) {
            row += mat.prob[i][p];
            col += mat.prob[p][i];
        }
        CHECK(row == doctest::Approx(1.0));
        CHECK(col == doctest::Approx(1.0));
    }
    // All mass on the identity permutation.
    CHECK(mat.prob[0][0] == doctest::Approx(1.0));

    auto mallows = rank_position_probabilities(rankings, ConsensusMethod::mallows, {50, 3});
    CHECK(mallows.prob[0][0] == doctest::Approx(1.0));
}

TEST_CASE("noisy rankings spread consensus mass but stay stochastic") {
    Rng rng(31);
    std::vector<Ranking> rankings;
    const std::vector<std::string> truth = {"A", "B", "C"};
    for (int i = 0; i < 60; ++i) {
        std::vector<std::string> order = truth;
        if (rng.unit() < 0.45) rng.shuffle(order);
        rankings.push_back(rank("q" + std::to_string(i % 10), i, order));
    }
    auto mat = rank_position_probabilities(rankings, ConsensusMethod::kemeny, {200, 17});
    for (std::size_t i = 0; i < mat.items.size(); ++i) {
        double row = 0.0;
        for (std::size_t p = 0; p < mat.items.size(); ++p) row += mat.prob[i][p];
        CHECK(row == doctest::Approx(1.0));
    }
    CHECK(mat.prob[0][0] > 0.5); // A should usually win
}
