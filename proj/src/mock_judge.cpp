#include "panelkit/mock_judge.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "panelkit/errors.hpp"
#include "panelkit/rng.hpp"

namespace panelkit {

using nlohmann::json;

namespace {

// Candidate texts in display order, pulled from the "A. text" block the
// judge client renders.
std::vector<std::string> extract_candidates(const std::string& prompt) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    for (char label = 'A'; label <= 'Z'; ++label) {
        const std::string tag = std::string(1, label) + ". ";
        const std::size_t line_start = prompt.find("\n" + tag, pos);
        std::size_t text_start;
        if (line_start == std::string::npos) {
            if (label == 'A' && prompt.rfind(tag, 0) == 0) {
                text_start = tag.size();
            } else {
                break;
            }
        } else {
            text_start = line_start + 1 + tag.size();
        }
        const std::size_t end = prompt.find('\n', text_start);
        out.push_back(prompt.substr(text_start, end == std::string::npos ? std::string::npos
                                                                         : end - text_start));
        pos = end == std::string::npos ? prompt.size() : end;
    }
    return out;
}

} // namespace

struct MockJudgeServer::Impl {
    MockJudgeOptions options;
    httplib::Server server;
    std::thread thread;
    int port = 0;

    std::atomic<int> in_flight{0};
    std::atomic<int> max_in_flight{0};
    std::atomic<long> served{0};
    std::mutex flaky_mutex;
    std::map<std::uint64_t, int> flaky_counts;

    explicit Impl(MockJudgeOptions opts) : options(opts) {
        server.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                   httplib::Response& res) {
            const int now = in_flight.fetch_add(1) + 1;
            int seen = max_in_flight.load();
            while (now > seen && !max_in_flight.compare_exchange_weak(seen, now)) {
            }
            served.fetch_add(1);

            handle(req, res);
            in_flight.fetch_sub(1);
        });
        port = server.bind_to_any_port("127.0.0.1");
        if (port <= 0) throw NetworkError("mock judge could not bind a port");
        thread = std::thread([this]() { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~Impl() {
        server.stop();
        if (thread.joinable()) thread.join();
    }

    void handle(const httplib::Request& req, httplib::Response& res) {
        std::string prompt;
        try {
            json body = json::parse(req.body);
            prompt = body.at("messages").at(0).at("content").get<std::string>();
        } catch (const json::exception&) {
            res.status = 400;
            res.set_content("{\"error\":\"bad request\"}", "application/json");
            return;
        }
        const std::vector<std::string> candidates = extract_candidates(prompt);
        const int m = static_cast<int>(candidates.size());
        if (m < 2) {
            res.status = 400;
            res.set_content("{\"error\":\"no candidates found\"}", "application/json");
            return;
        }

        std::string content;
        const std::uint64_t request_key = fnv1a64(req.body);
        switch (options.behavior) {
        case MockJudgeOptions::Behavior::flaky: {
            int count;
            {
                std::lock_guard<std::mutex> lock(flaky_mutex);
                count = flaky_counts[request_key]++;
            }
            if (count < options.fail_first) {
                content = "not json at all";
                break;
            }
            [[fallthrough]];
        }
        case MockJudgeOptions::Behavior::lexicographic: {
            std::vector<int> order(static_cast<std::size_t>(m));
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                return candidates[static_cast<std::size_t>(a)] <
                       candidates[static_cast<std::size_t>(b)];
            });
            json arr = json::array();
            for (int i : order) arr.push_back(i + 1);
            content = arr.dump();
            break;
        }
        case MockJudgeOptions::Behavior::position_biased: {
            Rng rng(derive_seed(options.seed, {request_key}));
            json arr = json::array();
            if (rng.unit() < options.bias_prob) {
                for (int i = 1; i <= m; ++i) arr.push_back(i);
            } else {
                std::vector<int> order(static_cast<std::size_t>(m));
                std::iota(order.begin(), order.end(), 1);
                rng.shuffle(order);
                for (int i : order) arr.push_back(i);
            }
            content = arr.dump();
            break;
        }
        }

        json reply;
        reply["choices"] = json::array(
            {json{{"message", json{{"role", "assistant"}, {"content", content}}}}});
        res.status = 200;
        res.set_content(reply.dump(), "application/json");
    }
};

MockJudgeServer::MockJudgeServer(MockJudgeOptions options)
    : impl_(std::make_unique<Impl>(options)) {}

MockJudgeServer::~MockJudgeServer() = default;

std::string MockJudgeServer::endpoint() const {
    return "http://127.0.0.1:" + std::to_string(impl_->port);
}

int MockJudgeServer::port() const { return impl_->port; }

int MockJudgeServer::max_in_flight() const { return impl_->max_in_flight.load(); }

long MockJudgeServer::requests_served() const { return impl_->served.load(); }

} // namespace panelkit
