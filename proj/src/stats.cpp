#include "panelkit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "panelkit/errors.hpp"
#include "panelkit/rng.hpp"

namespace panelkit {

using nlohmann::json;

namespace {

// Linear-interpolation empirical quantile on a sorted vector.
double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double h = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = h - std::floor(h);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

std::vector<std::size_t> identity_indices(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

std::vector<std::size_t> resample_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    for (auto& v : idx) v = rng.index(n);
    return idx;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    if (n < 2) return 0.0;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

} // namespace

BootstrapResult bootstrap_scalar(std::size_t n_units,
                                 const std::function<double(const std::vector<std::size_t>&)>& stat,
                                 const BootstrapConfig& config) {
    if (n_units == 0) throw DataError("bootstrap over zero units");
    if (config.n_resamples < 1) throw ConfigError("n_resamples must be >= 1");

    BootstrapResult out;
    out.n_resamples = config.n_resamples;
    out.seed = config.seed;
    out.point = stat(identity_indices(n_units));

    std::vector<double> replicates;
    replicates.reserve(static_cast<std::size_t>(config.n_resamples));
    for (int b = 0; b < config.n_resamples; ++b) {
        Rng rng(derive_seed(config.seed, {0x626f6f74ull, static_cast<std::uint64_t>(b)}));
        try {
            replicates.push_back(stat(resample_indices(n_units, rng)));
        } catch (const std::exception& e) {
            throw DataError("statistic failed on bootstrap resample " + std::to_string(b) + ": " +
                            e.what());
        }
    }
    std::sort(replicates.begin(), replicates.end());
    out.lower = quantile_sorted(replicates, 0.025);
    out.upper = quantile_sorted(replicates, 0.975);
    return out;
}

std::vector<BootstrapResult>
bootstrap_vector(std::size_t n_units,
                 const std::function<std::vector<double>(const std::vector<std::size_t>&)>& stat,
                 const BootstrapConfig& config) {
    if (n_units == 0) throw DataError("bootstrap over zero units");
    if (config.n_resamples < 1) throw ConfigError("n_resamples must be >= 1");

    const std::vector<double> point = stat(identity_indices(n_units));
    std::vector<std::vector<double>> replicates(point.size());
    for (int b = 0; b < config.n_resamples; ++b) {
        Rng rng(derive_seed(config.seed, {0x626f6f74ull, static_cast<std::uint64_t>(b)}));
        std::vector<double> rep;
        try {
            rep = stat(resample_indices(n_units, rng));
        } catch (const std::exception& e) {
            throw DataError("statistic failed on bootstrap resample " + std::to_string(b) + ": " +
                            e.what());
        }
        if (rep.size() != point.size()) throw DataError("statistic dimension changed on resample");
        for (std::size_t i = 0; i < rep.size(); ++i) replicates[i].push_back(rep[i]);
    }
    std::vector<BootstrapResult> out(point.size());
    for (std::size_t i = 0; i < point.size(); ++i) {
        std::sort(replicates[i].begin(), replicates[i].end());
        out[i].point = point[i];
        out[i].lower = quantile_sorted(replicates[i], 0.025);
        out[i].upper = quantile_sorted(replicates[i], 0.975);
        out[i].n_resamples = config.n_resamples;
        out[i].seed = config.seed;
    }
    return out;
}

double kendall_tau(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const int m = static_cast<int>(a.size());
    if (m < 2) throw DataError("kendall tau needs at least two items");
    const int d = kendall_distance(a, b);
    const double pairs = static_cast<double>(m) * (m - 1) / 2.0;
    return 1.0 - 2.0 * static_cast<double>(d) / pairs;
}

namespace {

std::map<std::string, std::vector<const Ranking*>> group_by_question(
    const std::vector<Ranking>& rankings) {
    std::map<std::string, std::vector<const Ranking*>> groups;
    for (const auto& r : rankings) groups[r.question_id].push_back(&r);
    return groups;
}

} // namespace

double kendall_tau_agreement(const std::vector<Ranking>& rankings) {
    const auto groups = group_by_question(rankings);
    double sum = 0.0;
    std::size_t used = 0;
    for (const auto& [qid, trials] : groups) {
        if (trials.size() < 2) continue;
        double tau_sum = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < trials.size(); ++i) {
            for (std::size_t j = i + 1; j < trials.size(); ++j) {
                tau_sum += kendall_tau(trials[i]->order, trials[j]->order);
                ++pairs;
            }
        }
        sum += tau_sum / static_cast<double>(pairs);
        ++used;
    }
    if (used == 0) throw DataError("no question has two or more trials");
    return sum / static_cast<double>(used);
}

double fleiss_kappa_top1(const std::vector<Ranking>& rankings) {
    const auto items = canonical_items(rankings);
    const auto groups = group_by_question(rankings);
    if (groups.empty()) throw DataError("no rankings");

    std::size_t trials = 0;
    std::vector<std::string> bad;
    for (const auto& [qid, rs] : groups) {
        if (trials == 0) trials = rs.size();
        if (rs.size() != trials) bad.push_back(qid);
    }
    if (trials < 2) throw DataError("fleiss kappa needs at least two trials per question");
    if (!bad.empty()) {
        std::string msg = "unequal trial counts for questions:";
        for (const auto& q : bad) msg += " " + q;
        throw DataError(msg);
    }

    std::map<std::string, int> item_index;
    for (std::size_t i = 0; i < items.size(); ++i) item_index[items[i]] = static_cast<int>(i);

    const double n = static_cast<double>(trials);
    const double N = static_cast<double>(groups.size());
    std::vector<double> category_share(items.size(), 0.0);
    double p_bar = 0.0;
    for (const auto& [qid, rs] : groups) {
        std::vector<double> counts(items.size(), 0.0);
        for (const auto* r : rs) {
            counts[static_cast<std::size_t>(item_index.at(r->order.front()))] += 1.0;
        }
        double agree = 0.0;
        for (std::size_t c = 0; c < counts.size(); ++c) {
            agree += counts[c] * counts[c];
            category_share[c] += counts[c];
        }
        p_bar += (agree - n) / (n * (n - 1.0));
    }
    p_bar /= N;
    double p_e = 0.0;
    for (double share : category_share) {
        const double p = share / (N * n);
        p_e += p * p;
    }
    if (std::abs(1.0 - p_e) < 1e-15) return 1.0; // all mass on one category
    return (p_bar - p_e) / (1.0 - p_e);
}

WinRateResult pairwise_win_rate(const std::vector<Ranking>& rankings, const std::string& a,
                                const std::string& b, const BootstrapConfig& config) {
    const auto items = canonical_items(rankings);
    if (!std::binary_search(items.begin(), items.end(), a) ||
        !std::binary_search(items.begin(), items.end(), b)) {
        throw DataError("win rate items missing from rankings");
    }

    // Group rankings by question; the bootstrap resamples questions.
    std::vector<std::string> questions;
    std::map<std::string, std::pair<int, int>> question_votes; // (a-above-b, total)
    for (const auto& r : rankings) {
        auto [it, inserted] = question_votes.try_emplace(r.question_id, std::pair<int, int>{0, 0});
        if (inserted) questions.push_back(r.question_id);
        int pos_a = -1, pos_b = -1;
        for (std::size_t p = 0; p < r.order.size(); ++p) {
            if (r.order[p] == a) pos_a = static_cast<int>(p);
            if (r.order[p] == b) pos_b = static_cast<int>(p);
        }
        it->second.second += 1;
        if (pos_a < pos_b) it->second.first += 1;
    }
    std::sort(questions.begin(), questions.end());

    WinRateResult out;
    out.questions = questions.size();
    long long wins = 0, total = 0;
    std::size_t maj_wins = 0, maj_decided = 0;
    for (const auto& q : questions) {
        const auto [w, t] = question_votes.at(q);
        wins += w;
        total += t;
        if (2 * w > t) {
            ++maj_wins;
            ++maj_decided;
        } else if (2 * w < t) {
            ++maj_decided;
        } else {
            ++out.majority_ties;
        }
    }
    out.votes = static_cast<std::size_t>(total);
    out.vote_rate = static_cast<double>(wins) / static_cast<double>(total);
    out.majority_rate = maj_decided > 0
                            ? static_cast<double>(maj_wins) / static_cast<double>(maj_decided)
                            : 0.0;

    out.vote_ci = bootstrap_scalar(
        questions.size(),
        [&](const std::vector<std::size_t>& idx) {
            long long w = 0, t = 0;
            for (std::size_t i : idx) {
                const auto [qw, qt] = question_votes.at(questions[i]);
                w += qw;
                t += qt;
            }
            return t > 0 ? static_cast<double>(w) / static_cast<double>(t) : 0.0;
        },
        config);
    return out;
}

PositionBiasResult position_bias(const std::vector<Ranking>& rankings) {
    PositionBiasResult out;
    std::vector<double> presented_pos, final_rank;
    std::vector<double> top1(canonical_items(rankings).size(), 0.0);
    std::size_t counted = 0;
    for (const auto& r : rankings) {
        if (r.presented.empty()) continue;
        std::map<std::string, int> shown_at;
        for (std::size_t p = 0; p < r.presented.size(); ++p) {
            shown_at[r.presented[p]] = static_cast<int>(p);
        }
        for (std::size_t rank = 0; rank < r.order.size(); ++rank) {
            auto it = shown_at.find(r.order[rank]);
            if (it == shown_at.end()) {
                throw DataError("presented list does not cover ranked items (question " +
                                r.question_id + ")");
            }
            presented_pos.push_back(static_cast<double>(it->second));
            final_rank.push_back(static_cast<double>(rank));
        }
        top1[static_cast<std::size_t>(shown_at.at(r.order.front()))] += 1.0;
        ++counted;
    }
    if (counted == 0) throw DataError("no ranking carries a presentation permutation");
    out.n_rankings = counted;
    out.pearson_rho = pearson(presented_pos, final_rank);
    out.top1_by_position.resize(top1.size());
    for (std::size_t p = 0; p < top1.size(); ++p) {
        out.top1_by_position[p] = top1[p] / static_cast<double>(counted);
    }
    return out;
}

LengthBiasResult length_bias(
    const std::map<std::string, std::map<std::string, std::string>>& texts,
    const std::vector<Ranking>& rankings) {
    LengthBiasResult out;
    auto word_count = [](const std::string& s) {
        std::size_t words = 0;
        bool in_word = false;
        for (char c : s) {
            const bool space = c == ' ' || c == '\t' || c == '\n';
            if (!space && !in_word) ++words;
            in_word = !space;
        }
        return static_cast<double>(words);
    };

    std::vector<double> chars, words, ranks;
    for (const auto& r : rankings) {
        auto qit = texts.find(r.question_id);
        if (qit == texts.end()) continue;
        std::vector<double> len_by_pos(r.order.size(), -1.0);
        for (std::size_t rank = 0; rank < r.order.size(); ++rank) {
            auto tit = qit->second.find(r.order[rank]);
            if (tit == qit->second.end()) continue;
            const double c = static_cast<double>(tit->second.size());
            len_by_pos[rank] = c;
            chars.push_back(c);
            words.push_back(word_count(tit->second));
            ranks.push_back(static_cast<double>(rank + 1)); // 1-based, smaller = better
        }
        for (std::size_t i = 0; i < len_by_pos.size(); ++i) {
            if (len_by_pos[i] < 0) continue;
            for (std::size_t j = i + 1; j < len_by_pos.size(); ++j) {
                if (len_by_pos[j] < 0) continue;
                if (len_by_pos[i] == len_by_pos[j]) {
                    ++out.pairs_tied_length;
                    continue;
                }
                ++out.pairs_counted;
                if (len_by_pos[i] > len_by_pos[j]) {
                    // item ranked better is longer
                    out.longer_wins_rate += 1.0;
                }
            }
        }
    }
    if (out.pairs_counted > 0) {
        out.longer_wins_rate /= static_cast<double>(out.pairs_counted);
    }
    out.corr_chars = pearson(chars, ranks);
    out.corr_words = pearson(words, ranks);
    return out;
}

RankPositionMatrix rank_position_probabilities(const std::vector<Ranking>& rankings,
                                               ConsensusMethod method,
                                               const BootstrapConfig& config, int kemeny_cap) {
    const auto items = canonical_items(rankings);
    const std::size_t m = items.size();
    std::map<std::string, std::size_t> item_index;
    for (std::size_t i = 0; i < m; ++i) item_index[items[i]] = i;

    auto consensus_of = [&](const std::vector<Ranking>& sample) {
        if (method == ConsensusMethod::kemeny) {
            return kemeny(sample, kemeny_cap).consensus;
        }
        return fit_mallows(sample, 0.2, config.seed, kemeny_cap).consensus;
    };

    RankPositionMatrix out;
    out.items = items;
    out.prob.assign(m, std::vector<double>(m, 0.0));
    const std::vector<std::string> point = consensus_of(rankings);

    std::size_t exact = 0;
    for (int b = 0; b < config.n_resamples; ++b) {
        Rng rng(derive_seed(config.seed, {0x72616e6b706f73ull, static_cast<std::uint64_t>(b)}));
        std::vector<Ranking> sample;
        sample.reserve(rankings.size());
        for (std::size_t i = 0; i < rankings.size(); ++i) {
            sample.push_back(rankings[rng.index(rankings.size())]);
        }
        const std::vector<std::string> consensus = consensus_of(sample);
        for (std::size_t p = 0; p < consensus.size(); ++p) {
            out.prob[item_index.at(consensus[p])][p] += 1.0;
        }
        if (consensus == point) ++exact;
    }
    for (auto& row : out.prob) {
        for (auto& v : row) v /= static_cast<double>(config.n_resamples);
    }
    out.exact_match_rate = static_cast<double>(exact) / static_cast<double>(config.n_resamples);
    return out;
}

json bootstrap_result_to_json(const BootstrapResult& r) {
    json j;
    j["point"] = r.point;
    j["lower"] = r.lower;
    j["upper"] = r.upper;
    j["n_resamples"] = r.n_resamples;
    j["seed"] = r.seed;
    return j;
}

} // namespace panelkit
