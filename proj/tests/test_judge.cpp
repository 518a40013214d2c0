#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "panelkit/errors.hpp"
#include "panelkit/judge.hpp"
#include "panelkit/mock_judge.hpp"
#include "panelkit/rng.hpp"

using namespace panelkit;

namespace {

std::vector<QuestionCandidates> make_questions(int n, int m) {
    std::vector<QuestionCandidates> out;
    for (int q = 0; q < n; ++q) {
        QuestionCandidates qc;
        qc.question_id = "q" + std::to_string(q);
        qc.question = "which answer is best for case " + std::to_string(q) + "?";
        for (int c = 0; c < m; ++c) {
            // Candidate text sorts by item id, so the lexicographic mock's
            // true ranking is item0 < item1 < ...
            qc.candidates.emplace_back("item" + std::to_string(c),
                                       "answer rank " + std::to_string(c) + " for q" +
                                           std::to_string(q));
        }
        out.push_back(std::move(qc));
    }
    return out;
}

JudgeConfig mock_config(const MockJudgeServer& server) {
    JudgeConfig config;
    config.endpoint = server.endpoint();
    config.model = "mock";
    config.trials = 5;
    config.max_concurrent = 3;
    config.retries = 3;
    config.backoff_ms = 0;
    config.prompt_template = default_prompt_template();
    return config;
}

} // namespace

TEST_CASE("presentation permutations are uniform and reproducible") {
    // 120k draws over the 120 permutations of m=5; 4-sigma band per cell.
    std::map<std::vector<int>, int> counts;
    const int draws = 120000;
    for (int i = 0; i < draws; ++i) {
        counts[randomize_order(5, derive_seed(55, {static_cast<std::uint64_t>(i)}))]++;
    }
    CHECK(counts.size() == 120);
    const double expected = draws / 120.0;
    const double sigma = std::sqrt(expected * (1.0 - 1.0 / 120.0));
    for (const auto& [perm, n] : counts) {
        CHECK(std::abs(n - expected) <= 4.0 * sigma);
    }

    CHECK(randomize_order(5, 7) == randomize_order(5, 7));
    const auto two = randomize_order(2, 3);
    CHECK((two == std::vector<int>{0, 1} || two == std::vector<int>{1, 0}));
    CHECK_THROWS_AS(randomize_order(1, 1), ConfigError);
}

TEST_CASE("judgment parser accepts exactly the documented forms") {
    CHECK(parse_judgment("[3,1,2]", 3) == std::vector<int>{3, 1, 2});
    CHECK(parse_judgment(R"({"ranking": [2,1]})", 2) == std::vector<int>{2, 1});
    CHECK_THROWS_AS(parse_judgment("[1,1,2]", 3), DataError);   // duplicate
    CHECK_THROWS_AS(parse_judgment("[1,2]", 3), DataError);     // wrong length
    CHECK_THROWS_AS(parse_judgment("[0,1,2]", 3), DataError);   // out of range
    CHECK_THROWS_AS(parse_judgment("[1,2,4]", 3), DataError);   // out of range
    CHECK_THROWS_AS(parse_judgment("best is A", 3), DataError); // not JSON
    CHECK_THROWS_AS(parse_judgment("[1.5,2,3]", 3), DataError); // not integers
    CHECK_THROWS_AS(parse_judgment(R"({"answer": [1,2]})", 2), DataError);
}

TEST_CASE("collect gathers R rankings per question through the mock") {
    MockJudgeServer server({MockJudgeOptions::Behavior::lexicographic, 0.4, 2, 1});
    auto questions = make_questions(10, 3);
    auto result = collect(mock_config(server), questions, 2024);

    CHECK(result.manifest.successes == 50);
    CHECK(result.manifest.parse_failures == 0);
    CHECK(result.manifest.transport_failures == 0);
    CHECK(result.rankings.size() == 50);

    // The lexicographic mock ranks by candidate text, which sorts by item id.
    for (const auto& r : result.rankings) {
        CHECK(r.order == std::vector<std::string>{"item0", "item1", "item2"});
    }

    // Permutation round-trip: every ranking is a permutation of the item set
    // and the presented list is recorded.
    for (const auto& r : result.rankings) {
        std::set<std::string> seen(r.order.begin(), r.order.end());
        CHECK(seen.size() == 3);
        CHECK(r.presented.size() == 3);
        std::set<std::string> pres(r.presented.begin(), r.presented.end());
        CHECK(pres == seen);
    }

    // Bounded concurrency observed by the server.
    CHECK(server.max_in_flight() <= 3);
    CHECK(server.requests_served() == 50);
}

TEST_CASE("same master seed reproduces identical presentations") {
    MockJudgeServer server({MockJudgeOptions::Behavior::lexicographic, 0.4, 2, 1});
    auto questions = make_questions(3, 4);
    auto a = collect(mock_config(server), questions, 99);
    auto b = collect(mock_config(server), questions, 99);
    REQUIRE(a.trials.size() == b.trials.size());
    for (std::size_t i = 0; i < a.trials.size(); ++i) {
        CHECK(a.trials[i].presentation == b.trials[i].presentation);
    }
}

TEST_CASE("flaky endpoint succeeds after retries with attempt count") {
    MockJudgeServer server({MockJudgeOptions::Behavior::flaky, 0.4, 2, 1});
    JudgeConfig config = mock_config(server);
    config.trials = 1;
    auto questions = make_questions(1, 3);
    auto result = collect(config, questions, 5);
    REQUIRE(result.manifest.successes == 1);
    CHECK(result.trials[0].attempts == 3); // two malformed replies, then ok
}

TEST_CASE("exhausted retries keep the trial with parse-error status") {
    MockJudgeServer server({MockJudgeOptions::Behavior::flaky, 0.4, 99, 1});
    JudgeConfig config = mock_config(server);
    config.trials = 1;
    config.retries = 2;
    config.max_failure_rate = 1.0;
    auto result = collect(config, make_questions(1, 3), 5);
    CHECK(result.manifest.successes == 0);
    CHECK(result.manifest.parse_failures == 1);
    CHECK(result.trials[0].status == "parse_error");
    CHECK(result.trials[0].attempts == 2);
}

TEST_CASE("unreachable endpoint fails after retries") {
    JudgeConfig config;
    config.endpoint = "http://127.0.0.1:9"; // discard port, nothing listens
    config.model = "none";
    config.trials = 1;
    config.retries = 2;
    config.backoff_ms = 0;
    config.prompt_template = default_prompt_template();
    config.max_failure_rate = 0.0;
    CHECK_THROWS_AS(collect(config, make_questions(1, 2), 1), NetworkError);
}

TEST_CASE("position-biased mock reproduces the planted top-1 bias") {
    const double bias = 0.4;
    MockJudgeServer server({MockJudgeOptions::Behavior::position_biased, bias, 2, 7});
    JudgeConfig config = mock_config(server);
    config.trials = 5;
    auto questions = make_questions(250, 5);
    auto result = collect(config, questions, 31337);
    REQUIRE(result.rankings.size() == 1250);

    // Pr(top1 shown at position 0) = bias + (1-bias)/5; others (1-bias)/5.
    int top_at_first = 0;
    for (const auto& r : result.rankings) {
        if (r.order.front() == r.presented.front()) ++top_at_first;
    }
    const double observed = top_at_first / 1250.0;
    const double planted = bias + (1.0 - bias) / 5.0;
    CHECK(std::abs(observed - planted) <= 0.03);
}

TEST_CASE("record then replay reproduces byte-identical rankings") {
    const std::string transcript = "/tmp/panelkit_test_transcript.jsonl";
    const std::string out_a = "/tmp/panelkit_test_rankings_a.jsonl";
    const std::string out_b = "/tmp/panelkit_test_rankings_b.jsonl";
    auto questions = make_questions(4, 3);

    {
        MockJudgeServer server({MockJudgeOptions::Behavior::position_biased, 0.5, 2, 3});
        JudgeConfig config = mock_config(server);
        config.mode = JudgeConfig::Mode::record;
        config.transcript_path = transcript;
        auto live = collect(config, questions, 777);
        save_rankings(live.rankings, out_a);
    }
    // No server: replay must not touch the network.
    JudgeConfig config;
    config.endpoint = "";
    config.model = "mock";
    config.trials = 5;
    config.prompt_template = default_prompt_template();
    config.mode = JudgeConfig::Mode::replay;
    config.transcript_path = transcript;
    auto replayed = collect(config, questions, 777);
    save_rankings(replayed.rankings, out_b);

    std::ifstream fa(out_a), fb(out_b);
    std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    CHECK_FALSE(sa.empty());

    std::remove(transcript.c_str());
    std::remove(out_a.c_str());
    std::remove(out_b.c_str());
}

TEST_CASE("judge config validation") {
    JudgeConfig config;
    config.endpoint = "http://x";
    config.prompt_template = "no slots";
    CHECK_THROWS_AS(config.validate(), ConfigError);
    config.prompt_template = default_prompt_template();
    config.trials = 0;
    CHECK_THROWS_AS(config.validate(), ConfigError);
    config.trials = 5;
    config.mode = JudgeConfig::Mode::record;
    CHECK_THROWS_AS(config.validate(), ConfigError); // no transcript path
    config.transcript_path = "/tmp/t.jsonl";
    CHECK_NOTHROW(config.validate());

    const auto j = config.to_json();
    JudgeConfig back = JudgeConfig::from_json(j);
    CHECK(back.transcript_path == config.transcript_path);
    CHECK(back.trials == 5);
}

TEST_CASE("questions file loads") {
    const std::string path = "/tmp/panelkit_test_questions.jsonl";
    std::ofstream out(path);
    out << R"({"question_id":"q1","question":"pick","candidates":[)"
        << R"({"item_id":"a","text":"first"},{"item_id":"b","text":"second"}]})" << "\n";
    out.close();
    auto questions = load_questions(path);
    REQUIRE(questions.size() == 1);
    CHECK(questions[0].candidates.size() == 2);
    CHECK(questions[0].candidates[1].first == "b");
    std::remove(path.c_str());
}
