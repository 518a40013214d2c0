#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "panelkit/errors.hpp"
#include "panelkit/preference.hpp"

using namespace panelkit;

namespace {

ConversationRecord two_turn_conv() {
    ConversationRecord conv;
    conv.thread_id = "t1";
    conv.rater_id = "r1";
    ConversationTurn turn0;
    turn0.user_message = "u0";
    turn0.candidates = {{"A", 10.0, true}, {"B", 90.0, std::nullopt}};
    ConversationTurn turn1;
    turn1.user_message = "u1";
    turn1.candidates = {{"X", 10.0, std::nullopt}, {"Y", 90.0, std::nullopt}};
    conv.turns = {turn0, turn1};
    return conv;
}

std::vector<PreferencePair> simple_pairs(const std::vector<std::pair<std::string, int>>& spec) {
    std::vector<PreferencePair> out;
    int i = 0;
    for (const auto& [rater, count] : spec) {
        for (int c = 0; c < count; ++c) {
            PreferencePair p;
            p.context.messages.push_back({"user", "q"});
            p.preferred = "good" + std::to_string(i);
            p.rejected = "bad" + std::to_string(i);
            p.rater_id = rater;
            p.thread_id = "t" + std::to_string(i);
            p.score_gap = 1.0;
            out.push_back(std::move(p));
            ++i;
        }
    }
    return out;
}

} // namespace

TEST_CASE("context at turn zero is the single user message") {
    auto ctx = reconstruct_context(two_turn_conv(), 0);
    REQUIRE(ctx.messages.size() == 1);
    CHECK(ctx.messages[0].role == "user");
    CHECK(ctx.messages[0].text == "u0");
}

TEST_CASE("context uses the chosen response for prior turns") {
    auto ctx = reconstruct_context(two_turn_conv(), 1);
    REQUIRE(ctx.messages.size() == 3);
    CHECK(ctx.messages[0].text == "u0");
    CHECK(ctx.messages[1].role == "assistant");
    CHECK(ctx.messages[1].text == "A"); // chosen beats higher score
    CHECK(ctx.messages[2].text == "u1");
}

TEST_CASE("argmax fallback when no chosen marker, ties by order") {
    ConversationRecord conv = two_turn_conv();
    conv.turns[0].candidates = {{"X", 10.0, std::nullopt}, {"Y", 90.0, std::nullopt}};
    auto ctx = reconstruct_context(conv, 1);
    CHECK(ctx.messages[1].text == "Y");

    conv.turns[0].candidates = {{"first", 50.0, std::nullopt}, {"second", 50.0, std::nullopt}};
    ctx = reconstruct_context(conv, 1);
    CHECK(ctx.messages[1].text == "first");
}

TEST_CASE("placeholder turns are dropped whole and empties are errors") {
    ConversationRecord conv = two_turn_conv();
    conv.turns[0].user_message = "EMPTY STRING";
    auto ctx = reconstruct_context(conv, 1);
    REQUIRE(ctx.messages.size() == 1); // turn 0 dropped entirely
    CHECK(ctx.messages[0].text == "u1");

    ConversationRecord empty = two_turn_conv();
    empty.turns[1].user_message = "EMPTY STRING";
    CHECK_THROWS_AS(reconstruct_context(empty, 1), DataError);

    ConversationRecord no_candidates = two_turn_conv();
    no_candidates.turns[0].candidates.clear();
    CHECK_THROWS_AS(reconstruct_context(no_candidates, 1), DataError);

    CHECK_THROWS_AS(reconstruct_context(two_turn_conv(), 5), DataError);
}

TEST_CASE("pair extraction enumerates strict-gap ordered pairs") {
    ConversationRecord conv;
    conv.thread_id = "t";
    conv.rater_id = "r";
    ConversationTurn turn;
    turn.user_message = "q";
    turn.candidates = {{"a", 90.0, std::nullopt}, {"b", 60.0, std::nullopt},
                       {"c", 60.0, std::nullopt}};
    conv.turns = {turn};

    auto pairs = extract_pairs(conv, 0.0);
    REQUIRE(pairs.size() == 2); // 90>60 twice, 60/60 tie excluded
    for (const auto& p : pairs) {
        CHECK(p.preferred == "a");
        CHECK(p.score_gap == doctest::Approx(30.0));
        CHECK(p.rater_id == "r");
        CHECK(p.turn_index == 0);
    }

    // Gap equal to delta is excluded (strict inequality).
    conv.turns[0].candidates = {{"a", 90.0, std::nullopt}, {"b", 60.0, std::nullopt}};
    CHECK(extract_pairs(conv, 30.0).empty());
    CHECK(extract_pairs(conv, 29.9).size() == 1);

    // Single candidate produces nothing.
    conv.turns[0].candidates = {{"only", 1.0, std::nullopt}};
    CHECK(extract_pairs(conv, 0.0).empty());

    CHECK_THROWS_AS(extract_pairs(conv, -1.0), ConfigError);
}

TEST_CASE("placeholder candidates never appear in pairs") {
    ConversationRecord conv;
    conv.thread_id = "t";
    conv.rater_id = "r";
    ConversationTurn turn;
    turn.user_message = "q";
    turn.candidates = {{"EMPTY STRING", 99.0, std::nullopt}, {"real", 50.0, std::nullopt},
                       {"other", 10.0, std::nullopt}};
    conv.turns = {turn};
    auto pairs = extract_pairs(conv, 0.0);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].preferred == "real");
    CHECK(pairs[0].rejected == "other");
}

TEST_CASE("rater counts are exact multiplicities") {
    CHECK(rater_counts({}).empty());
    auto pairs = simple_pairs({{"r", 3}});
    auto counts = rater_counts(pairs);
    CHECK(counts.size() == 1);
    CHECK(counts["r"] == 3);

    auto mixed = simple_pairs({{"r", 2}, {"s", 5}});
    auto counts2 = rater_counts(mixed);
    CHECK(counts2["r"] == 2);
    CHECK(counts2["s"] == 5);
}

TEST_CASE("condition datasets filter and weight correctly") {
    auto pairs = simple_pairs({{"r", 2}, {"s", 3}});
    RaterPool pool;
    pool.schema.attributes.push_back({"grade", {"A"}, {}});
    pool.records.push_back({"r", {0}, {}, true, true});
    pool.records.push_back({"s", {0}, {}, false, true});
    pool.rebuild_index();

    SUBCASE("full keeps everything at unit weight") {
        ConditionSpec spec;
        spec.kind = ConditionSpec::Kind::full;
        auto ds = build_condition_dataset(pairs, spec, &pool);
        CHECK(ds.pairs.size() == 5);
        CHECK(ds.scheme.w.at("r") == 1.0);
        CHECK(ds.manifest.rater_count == 2);
        CHECK(ds.manifest.condition == "full");
    }

    SUBCASE("us_rep keeps flagged raters") {
        ConditionSpec spec;
        spec.kind = ConditionSpec::Kind::us_rep;
        auto ds = build_condition_dataset(pairs, spec, &pool);
        CHECK(ds.pairs.size() == 2);
        for (const auto& p : ds.pairs) CHECK(p.rater_id == "r");
    }

    SUBCASE("hard keeps panel members only") {
        ConditionSpec spec;
        spec.kind = ConditionSpec::Kind::hard;
        spec.panel.member_ids = {"r"};
        auto ds = build_condition_dataset(pairs, spec, &pool);
        CHECK(ds.pairs.size() == 2);
        CHECK(ds.scheme.counts.at("r") == 2);
    }

    SUBCASE("soft drops zero-probability raters and applies f") {
        ConditionSpec spec;
        spec.kind = ConditionSpec::Kind::soft;
        spec.pi.pi = {{"r", 0.5}, {"s", 0.0}};
        auto ds = build_condition_dataset(pairs, spec, &pool);
        CHECK(ds.pairs.size() == 2);
        CHECK(ds.scheme.w.at("r") == doctest::Approx(0.5));
        CHECK(ds.scheme.w.count("s") == 0);

        spec.pi.pi = {{"r", 0.8}, {"s", 0.2}};
        spec.f_kind = WeightKind::clipped;
        spec.c_max = 0.5;
        auto clipped = build_condition_dataset(pairs, spec, &pool);
        CHECK(clipped.scheme.w.at("r") == doctest::Approx(0.5));
        CHECK(clipped.scheme.w.at("s") == doctest::Approx(0.2));

        spec.f_kind = WeightKind::normalized;
        auto normalized = build_condition_dataset(pairs, spec, &pool);
        CHECK(normalized.scheme.w.at("r") == doctest::Approx(0.8));
        CHECK(normalized.scheme.w.at("s") == doctest::Approx(0.2));
    }

    SUBCASE("missing pi entries and empty datasets are errors") {
        ConditionSpec spec;
        spec.kind = ConditionSpec::Kind::soft;
        spec.pi.pi = {{"r", 0.5}};
        CHECK_THROWS_AS(build_condition_dataset(pairs, spec, &pool), DataError);

        ConditionSpec hard;
        hard.kind = ConditionSpec::Kind::hard;
        hard.panel.member_ids = {"ghost"};
        CHECK_THROWS_AS(build_condition_dataset(pairs, hard, &pool), DataError);
    }
}

TEST_CASE("per-example weights divide by rater counts") {
    auto pairs = simple_pairs({{"r", 4}});
    WeightScheme scheme;
    scheme.w = {{"r", 1.0}};
    scheme.counts = {{"r", 4}};
    auto omegas = per_example_weights(pairs, scheme);
    for (double w : omegas) CHECK(w == doctest::Approx(0.25));

    auto mixed = simple_pairs({{"r", 2}, {"s", 1}});
    WeightScheme scheme2;
    scheme2.w = {{"r", 0.5}, {"s", 1.0}};
    scheme2.counts = {{"r", 2}, {"s", 1}};
    auto omegas2 = per_example_weights(mixed, scheme2);
    CHECK(omegas2[0] == doctest::Approx(0.25));
    CHECK(omegas2[1] == doctest::Approx(0.25));
    CHECK(omegas2[2] == doctest::Approx(1.0));

    WeightScheme missing;
    CHECK_THROWS_AS(per_example_weights(mixed, missing), DataError);
}

TEST_CASE("weight conservation: per-rater omega sums equal w_i") {
    auto pairs = simple_pairs({{"r", 7}, {"s", 3}, {"t", 1}});
    ConditionSpec spec;
    spec.kind = ConditionSpec::Kind::soft;
    spec.pi.pi = {{"r", 0.3}, {"s", 0.9}, {"t", 0.25}};
    auto ds = build_condition_dataset(pairs, spec, nullptr);
    auto omegas = per_example_weights(ds.pairs, ds.scheme);
    std::map<std::string, double> sums;
    for (std::size_t i = 0; i < ds.pairs.size(); ++i) sums[ds.pairs[i].rater_id] += omegas[i];
    for (const auto& [id, w] : ds.scheme.w) {
        CHECK(sums.at(id) == doctest::Approx(w).epsilon(1e-12));
    }
}

TEST_CASE("budget resampling has exact length and is seed-deterministic") {
    auto stream = resample_to_budget(7, 10, 4, 42);
    CHECK(stream.size() == 40);
    for (auto i : stream) CHECK(i < 7);
    CHECK(resample_to_budget(7, 10, 4, 42) == stream);
    CHECK(resample_to_budget(7, 10, 4, 43) != stream);
    CHECK(resample_to_budget(1000, 2, 3, 1).size() == 6);
    CHECK_THROWS_AS(resample_to_budget(0, 1, 1, 1), DataError);
}

TEST_CASE("rater-proportional sampler weights raters not volumes") {
    auto pairs = simple_pairs({{"heavy", 90}, {"light", 10}});
    WeightScheme scheme;
    scheme.w = {{"heavy", 1.0}, {"light", 1.0}};
    scheme.counts = {{"heavy", 90}, {"light", 10}};
    auto stream = resample_by_rater(pairs, scheme, 100, 50, 7);
    int light_draws = 0;
    for (auto i : stream) {
        if (pairs[i].rater_id == "light") ++light_draws;
    }
    // Equal rater weights: roughly half the draws despite 9x fewer pairs.
    CHECK(std::abs(light_draws / 5000.0 - 0.5) < 0.05);
}

TEST_CASE("export and import round-trip exactly") {
    auto pairs = simple_pairs({{"r", 2}, {"s", 1}});
    pairs[0].context.messages.push_back({"assistant", "with \"quotes\" and\nnewlines"});
    pairs[0].context.messages.push_back({"user", "follow-up"});
    ConditionSpec spec;
    spec.kind = ConditionSpec::Kind::full;
    auto ds = build_condition_dataset(pairs, spec, nullptr);

    const std::string path = "/tmp/panelkit_test_dataset.jsonl";
    auto manifest = export_dataset(ds, path);
    CHECK(manifest.pair_count == 3);

    // Manifest pair count equals line count.
    std::ifstream in(path);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == manifest.pair_count);

    auto back = import_dataset(path);
    REQUIRE(back.pairs.size() == ds.pairs.size());
    for (std::size_t i = 0; i < back.pairs.size(); ++i) {
        CHECK(pair_to_json(back.pairs[i]).dump() == pair_to_json(ds.pairs[i]).dump());
    }
    CHECK(back.manifest.pairs_hash == ds.manifest.pairs_hash);
    CHECK(pairs_hash(back.pairs) == ds.manifest.pairs_hash);

    // Hash changes iff any pair changes.
    auto mutated = ds.pairs;
    mutated[1].preferred = "different";
    CHECK(pairs_hash(mutated) != ds.manifest.pairs_hash);

    std::remove(path.c_str());
    std::remove((path + ".manifest.json").c_str());
}

TEST_CASE("condition nesting: hard and us_rep are subsets of full") {
    auto pairs = simple_pairs({{"r", 3}, {"s", 2}, {"t", 4}});
    RaterPool pool;
    pool.schema.attributes.push_back({"grade", {"A"}, {}});
    pool.records.push_back({"r", {0}, {}, true, true});
    pool.records.push_back({"s", {0}, {}, false, true});
    pool.records.push_back({"t", {0}, {}, true, true});
    pool.rebuild_index();

    ConditionSpec full_spec;
    full_spec.kind = ConditionSpec::Kind::full;
    auto full_ds = build_condition_dataset(pairs, full_spec, &pool);
    std::set<std::string> full_hashes;
    for (const auto& p : full_ds.pairs) full_hashes.insert(pair_to_json(p).dump());

    ConditionSpec hard_spec;
    hard_spec.kind = ConditionSpec::Kind::hard;
    hard_spec.panel.member_ids = {"r", "s"};
    for (const auto& p : build_condition_dataset(pairs, hard_spec, &pool).pairs) {
        CHECK(full_hashes.count(pair_to_json(p).dump()) == 1);
    }
    ConditionSpec rep_spec;
    rep_spec.kind = ConditionSpec::Kind::us_rep;
    for (const auto& p : build_condition_dataset(pairs, rep_spec, &pool).pairs) {
        CHECK(full_hashes.count(pair_to_json(p).dump()) == 1);
    }
}

TEST_CASE("conversation file round-trip") {
    std::vector<ConversationRecord> convs = {two_turn_conv()};
    const std::string path = "/tmp/panelkit_test_convs.jsonl";
    save_conversations(convs, path);
    auto back = load_conversations(path);
    REQUIRE(back.size() == 1);
    CHECK(back[0].thread_id == "t1");
    REQUIRE(back[0].turns.size() == 2);
    CHECK(back[0].turns[0].candidates[0].chosen.value_or(false));
    CHECK_FALSE(back[0].turns[1].candidates[0].chosen.has_value());
    std::remove(path.c_str());
}
