#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>

namespace panelkit {

/// Deterministic in-process judge endpoint for tests and offline runs.
/// Behaviors:
///   lexicographic    ranks candidates by text, ascending
///   position_biased  presented order with probability bias_prob, otherwise
///                    a seeded random permutation
///   flaky            malformed JSON for the first fail_first requests of
///                    each distinct prompt, then lexicographic
struct MockJudgeOptions {
    enum class Behavior { lexicographic, position_biased, flaky };
    Behavior behavior = Behavior::lexicographic;
    double bias_prob = 0.4;   // position_biased
    int fail_first = 2;       // flaky
    std::uint64_t seed = 1;   // per-request randomness is derived from
                              // (seed, request body) so replies are
                              // deterministic under concurrency
};

class MockJudgeServer {
  public:
    explicit MockJudgeServer(MockJudgeOptions options);
    ~MockJudgeServer();
    MockJudgeServer(const MockJudgeServer&) = delete;
    MockJudgeServer& operator=(const MockJudgeServer&) = delete;

    std::string endpoint() const; // http://127.0.0.1:<port>
    int port() const;
    int max_in_flight() const;
    long requests_served() const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace panelkit
