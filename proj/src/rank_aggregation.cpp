#include "panelkit/rank_aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "panelkit/errors.hpp"
#include "panelkit/rng.hpp"

namespace panelkit {

using nlohmann::json;

std::vector<std::string> canonical_items(const std::vector<Ranking>& rankings) {
    if (rankings.empty()) throw DataError("no rankings");
    std::vector<std::string> items = rankings.front().order;
    std::sort(items.begin(), items.end());
    if (std::adjacent_find(items.begin(), items.end()) != items.end()) {
        throw DataError("ranking contains repeated items");
    }
    for (const auto& r : rankings) {
        std::vector<std::string> check = r.order;
        std::sort(check.begin(), check.end());
        if (check != items) {
            throw DataError("ranking for question " + r.question_id +
                            " has an inconsistent item set");
        }
    }
    return items;
}

namespace {

std::map<std::string, int> index_of(const std::vector<std::string>& items) {
    std::map<std::string, int> idx;
    for (std::size_t i = 0; i < items.size(); ++i) idx[items[i]] = static_cast<int>(i);
    return idx;
}

} // namespace

long long PairwiseCounts::total_decided() const {
    long long total = 0;
    for (const auto& row : wins) {
        for (long long v : row) total += v;
    }
    return total;
}

PairwiseCounts rankings_to_pairwise(const std::vector<Ranking>& rankings) {
    PairwiseCounts pc;
    pc.items = canonical_items(rankings);
    const auto idx = index_of(pc.items);
    const std::size_t m = pc.items.size();
    pc.wins.assign(m, std::vector<long long>(m, 0));
    for (const auto& r : rankings) {
        for (std::size_t a = 0; a < r.order.size(); ++a) {
            const int ia = idx.at(r.order[a]);
            for (std::size_t b = a + 1; b < r.order.size(); ++b) {
                const int ib = idx.at(r.order[b]);
                pc.wins[static_cast<std::size_t>(ia)][static_cast<std::size_t>(ib)]++;
            }
        }
    }
    return pc;
}

std::map<std::string, double> borda(const std::vector<Ranking>& rankings) {
    const auto items = canonical_items(rankings);
    const int m = static_cast<int>(items.size());
    std::map<std::string, double> sums;
    for (const auto& id : items) sums[id] = 0.0;
    for (const auto& r : rankings) {
        for (std::size_t p = 0; p < r.order.size(); ++p) {
            sums[r.order[p]] += static_cast<double>(m - 1 - static_cast<int>(p));
        }
    }
    for (auto& [id, s] : sums) s /= static_cast<double>(rankings.size());
    return sums;
}

CopelandScores copeland(const std::vector<Ranking>& rankings) {
    const PairwiseCounts pc = rankings_to_pairwise(rankings);
    CopelandScores out;
    const std::size_t m = pc.items.size();
    for (std::size_t i = 0; i < m; ++i) {
        long long wins = 0, decided = 0;
        for (std::size_t j = 0; j < m; ++j) {
            if (i == j) continue;
            wins += pc.wins[i][j];
            decided += pc.wins[i][j] + pc.wins[j][i];
        }
        out.raw[pc.items[i]] = 2 * wins - decided; // wins - losses
        out.win_rate[pc.items[i]] =
            decided > 0 ? static_cast<double>(wins) / static_cast<double>(decided) : 0.0;
    }
    return out;
}

int kendall_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.size() != b.size()) throw DataError("kendall distance: size mismatch");
    std::map<std::string, int> pos_b;
    for (std::size_t p = 0; p < b.size(); ++p) pos_b[b[p]] = static_cast<int>(p);
    if (pos_b.size() != b.size()) throw DataError("kendall distance: repeated items");
    std::vector<int> mapped;
    mapped.reserve(a.size());
    for (const auto& id : a) {
        auto it = pos_b.find(id);
        if (it == pos_b.end()) throw DataError("kendall distance: item sets differ");
        mapped.push_back(it->second);
    }
    int discordant = 0;
    for (std::size_t i = 0; i < mapped.size(); ++i) {
        for (std::size_t j = i + 1; j < mapped.size(); ++j) {
            if (mapped[i] > mapped[j]) ++discordant;
        }
    }
    return discordant;
}

KemenyResult kemeny(const std::vector<Ranking>& rankings, int cap) {
    const PairwiseCounts pc = rankings_to_pairwise(rankings);
    const int m = static_cast<int>(pc.items.size());
    if (m > cap) {
        throw ConfigError("kemeny: " + std::to_string(m) + " items exceeds brute-force cap " +
                          std::to_string(cap));
    }
    // Total Kendall distance of a candidate ordering = for every ordered pair
    // (above, below) it induces, the number of observed rankings voting the
    // other way.
    std::vector<int> perm(static_cast<std::size_t>(m));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> best_perm;
    long long best = -1;
    do {
        long long dist = 0;
        for (int a = 0; a < m; ++a) {
            for (int b = a + 1; b < m; ++b) {
                dist += pc.wins[static_cast<std::size_t>(perm[static_cast<std::size_t>(b)])]
                               [static_cast<std::size_t>(perm[static_cast<std::size_t>(a)])];
            }
        }
        if (best < 0 || dist < best) { // strict: keeps the lexicographically first minimizer
            best = dist;
            best_perm.assign(perm.begin(), perm.end());
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    KemenyResult res;
    res.total_distance = best;
    for (int i : best_perm) res.consensus.push_back(pc.items[static_cast<std::size_t>(i)]);
    return res;
}

namespace {

void check_monotone(std::vector<double>& trace, double ll) {
    if (!trace.empty() && ll < trace.back() - 1e-9) {
        throw SolverError("fit log-likelihood decreased between iterations");
    }
    trace.push_back(ll);
}

std::map<std::string, double> center_log(const std::vector<std::string>& items,
                                         const std::vector<double>& weights) {
    double mean = 0.0;
    std::vector<double> logs(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        logs[i] = std::log(weights[i]);
        mean += logs[i];
    }
    mean /= static_cast<double>(weights.size());
    std::map<std::string, double> out;
    for (std::size_t i = 0; i < items.size(); ++i) out[items[i]] = logs[i] - mean;
    return out;
}

} // namespace

AbilityFit fit_bt(const PairwiseCounts& counts, const FitOptions& options) {
    const std::size_t m = counts.items.size();
    if (m < 2) throw DataError("bradley-terry needs at least two items");

    std::vector<std::vector<double>> n(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            n[i][j] = static_cast<double>(counts.wins[i][j]);
            if (options.smoothing && i != j) n[i][j] += 0.5;
        }
    }

    // Connectivity of the comparison graph (any decided pair is an edge).
    std::vector<int> comp(m, -1);
    int n_comp = 0;
    for (std::size_t s = 0; s < m; ++s) {
        if (comp[s] >= 0) continue;
        std::vector<std::size_t> stack{s};
        comp[s] = n_comp;
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t v = 0; v < m; ++v) {
                if (comp[v] < 0 && (n[u][v] + n[v][u]) > 0) {
                    comp[v] = n_comp;
                    stack.push_back(v);
                }
            }
        }
        ++n_comp;
    }
    if (n_comp > 1) {
        std::string parts;
        for (int c = 0; c < n_comp; ++c) {
            parts += c == 0 ? "{" : " {";
            bool first = true;
            for (std::size_t i = 0; i < m; ++i) {
                if (comp[i] == c) {
                    if (!first) parts += ",";
                    parts += counts.items[i];
                    first = false;
                }
            }
            parts += "}";
        }
        throw DataError("bradley-terry comparison graph is disconnected: " + parts);
    }
    for (std::size_t i = 0; i < m; ++i) {
        double wins = 0.0, losses = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            wins += n[i][j];
            losses += n[j][i];
        }
        if (wins == 0.0 || losses == 0.0) {
            throw DataError("bradley-terry MLE diverges: item '" + counts.items[i] + "' has " +
                            (wins == 0.0 ? "zero wins" : "zero losses") +
                            " (rerun with smoothing to regularize)");
        }
    }

    std::vector<double> w(m, 1.0);
    auto log_likelihood = [&]() {
        double ll = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                if (i == j || n[i][j] == 0.0) continue;
                ll += n[i][j] * (std::log(w[i]) - std::log(w[i] + w[j]));
            }
        }
        return ll;
    };

    AbilityFit fit;
    check_monotone(fit.ll_trace, log_likelihood());
    for (long iter = 0; iter < options.max_iters; ++iter) {
        std::vector<double> next(m, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            double wins = 0.0, denom = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                if (i == j) continue;
                wins += n[i][j];
                const double pair_total = n[i][j] + n[j][i];
                if (pair_total > 0) denom += pair_total / (w[i] + w[j]);
            }
            next[i] = wins / denom;
        }
        // Normalize to geometric mean 1 to pin the gauge.
        double log_sum = 0.0;
        for (double v : next) log_sum += std::log(v);
        const double scale = std::exp(log_sum / static_cast<double>(m));
        for (auto& v : next) v /= scale;

        double max_change = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            max_change = std::max(max_change, std::abs(std::log(next[i]) - std::log(w[i])));
        }
        w = std::move(next);
        check_monotone(fit.ll_trace, log_likelihood());
        fit.iterations = iter + 1;
        if (max_change <= options.tol) {
            fit.log_abilities = center_log(counts.items, w);
            return fit;
        }
    }
    throw SolverError("bradley-terry fit did not converge within iteration cap");
}

namespace {

// Interior MM fit; requires the implied win digraph to be strongly
// connected (checked by the caller), which guarantees a finite MLE.
AbilityFit fit_pl_interior(const std::vector<std::vector<int>>& seqs,
                           const std::vector<std::string>& items, const FitOptions& options) {
    const std::size_t m = items.size();
    std::vector<double> chosen(m, 0.0);
    for (const auto& s : seqs) {
        for (std::size_t stage = 0; stage + 1 < s.size(); ++stage) {
            chosen[static_cast<std::size_t>(s[stage])] += 1.0;
        }
    }

    std::vector<double> w(m, 1.0);
    auto log_likelihood = [&]() {
        double ll = 0.0;
        for (const auto& s : seqs) {
            double remaining = 0.0;
            for (int i : s) remaining += w[static_cast<std::size_t>(i)];
            // The final singleton stage contributes log(w/w) = 0.
            for (std::size_t stage = 0; stage + 1 < s.size(); ++stage) {
                ll += std::log(w[static_cast<std::size_t>(s[stage])]) - std::log(remaining);
                remaining -= w[static_cast<std::size_t>(s[stage])];
            }
        }
        return ll;
    };

    AbilityFit fit;
    check_monotone(fit.ll_trace, log_likelihood());
    for (long iter = 0; iter < options.max_iters; ++iter) {
        // MM update (Hunter): w_i <- chosen_i / sum over stages containing i
        // of 1 / (total weight remaining at that stage).
        std::vector<double> denom(m, 0.0);
        for (const auto& s : seqs) {
            double remaining = 0.0;
            for (int i : s) remaining += w[static_cast<std::size_t>(i)];
            for (std::size_t stage = 0; stage + 1 < s.size(); ++stage) {
                const double inv = 1.0 / remaining;
                for (std::size_t p = stage; p < s.size(); ++p) {
                    denom[static_cast<std::size_t>(s[p])] += inv;
                }
                remaining -= w[static_cast<std::size_t>(s[stage])];
            }
        }
        std::vector<double> next(m);
        for (std::size_t i = 0; i < m; ++i) next[i] = chosen[i] / denom[i];
        double log_sum = 0.0;
        for (double v : next) log_sum += std::log(v);
        const double scale = std::exp(log_sum / static_cast<double>(m));
        for (auto& v : next) v /= scale;

        double max_change = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            max_change = std::max(max_change, std::abs(std::log(next[i]) - std::log(w[i])));
        }
        w = std::move(next);
        check_monotone(fit.ll_trace, log_likelihood());
        fit.iterations = iter + 1;
        if (max_change <= options.tol) {
            fit.log_abilities = center_log(items, w);
            return fit;
        }
    }
    throw SolverError("plackett-luce fit did not converge within iteration cap");
}

} // namespace

AbilityFit fit_pl(const std::vector<Ranking>& rankings, const FitOptions& options) {
    const auto items = canonical_items(rankings);
    const auto idx = index_of(items);
    const std::size_t m = items.size();
    if (m < 2) throw DataError("plackett-luce needs at least two items");

    // Rankings as index sequences, best first.
    std::vector<std::vector<int>> seqs;
    seqs.reserve(rankings.size());
    for (const auto& r : rankings) {
        std::vector<int> s;
        s.reserve(m);
        for (const auto& id : r.order) s.push_back(idx.at(id));
        seqs.push_back(std::move(s));
    }

    // MLE existence requires the implied win digraph to be strongly
    // connected. Compute reachability; with full rankings the condensation
    // is totally ordered.
    std::vector<std::vector<bool>> reach(m, std::vector<bool>(m, false));
    for (const auto& s : seqs) {
        for (std::size_t a = 0; a < s.size(); ++a) {
            for (std::size_t b = a + 1; b < s.size(); ++b) {
                reach[static_cast<std::size_t>(s[a])][static_cast<std::size_t>(s[b])] = true;
            }
        }
    }
    for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t i = 0; i < m; ++i) {
            if (!reach[i][k]) continue;
            for (std::size_t j = 0; j < m; ++j) {
                if (reach[k][j]) reach[i][j] = true;
            }
        }
    }
    std::vector<int> comp(m, -1);
    int n_comp = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (comp[i] >= 0) continue;
        comp[i] = n_comp;
        for (std::size_t j = i + 1; j < m; ++j) {
            if (comp[j] < 0 && reach[i][j] && reach[j][i]) comp[j] = n_comp;
        }
        ++n_comp;
    }

    if (n_comp == 1) {
        return fit_pl_interior(seqs, items, options);
    }

    // Perfect separation: the MLE lies on the boundary. Fit each strongly
    // connected component on restricted rankings and stack the components
    // with a fixed large gap; ordering stays meaningful, magnitudes do not.
    constexpr double kComponentGap = 60.0;
    std::vector<int> reach_count(static_cast<std::size_t>(n_comp), 0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            if (comp[i] != comp[j] && reach[i][j]) {
                reach_count[static_cast<std::size_t>(comp[i])]++;
            }
        }
    }
    // Components that reach more items sit higher.
    std::vector<int> level(static_cast<std::size_t>(n_comp));
    {
        std::vector<int> order(static_cast<std::size_t>(n_comp));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            return reach_count[static_cast<std::size_t>(a)] >
                   reach_count[static_cast<std::size_t>(b)];
        });
        for (int rank_pos = 0; rank_pos < n_comp; ++rank_pos) {
            level[static_cast<std::size_t>(order[static_cast<std::size_t>(rank_pos)])] = rank_pos;
        }
    }

    AbilityFit fit;
    fit.degenerate = true;
    std::vector<double> raw(m, 0.0);
    for (int c = 0; c < n_comp; ++c) {
        std::vector<std::string> sub_items;
        for (std::size_t i = 0; i < m; ++i) {
            if (comp[i] == c) sub_items.push_back(items[i]);
        }
        std::map<std::string, double> sub_scores;
        if (sub_items.size() == 1) {
            sub_scores[sub_items[0]] = 0.0;
        } else {
            std::vector<Ranking> restricted;
            restricted.reserve(rankings.size());
            for (const auto& r : rankings) {
                Ranking rr;
                rr.question_id = r.question_id;
                rr.trial_id = r.trial_id;
                for (const auto& id : r.order) {
                    if (std::binary_search(sub_items.begin(), sub_items.end(), id)) {
                        rr.order.push_back(id);
                    }
                }
                restricted.push_back(std::move(rr));
            }
            AbilityFit sub = fit_pl(restricted, options);
            fit.iterations += sub.iterations;
            sub_scores = sub.log_abilities;
        }
        const double offset =
            -kComponentGap * static_cast<double>(level[static_cast<std::size_t>(c)]);
        for (std::size_t i = 0; i < m; ++i) {
            if (comp[i] == c) raw[i] = sub_scores.at(items[i]) + offset;
        }
    }
    double mean = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i) fit.log_abilities[items[i]] = raw[i] - mean;
    return fit;
}

double mallows_normalizer(double phi, int m) {
    if (!(phi > 0.0 && phi <= 1.0)) throw ConfigError("phi must be in (0,1]");
    if (m < 1) throw ConfigError("m must be >= 1");
    double z = 1.0;
    for (int j = 1; j < m; ++j) {
        double term = 0.0, power = 1.0;
        for (int r = 0; r <= j; ++r) {
            term += power;
            power *= phi;
        }
        z *= term;
    }
    return z;
}

MallowsModel fit_mallows(const std::vector<Ranking>& rankings, double holdout_fraction,
                         std::uint64_t seed, int kemeny_cap) {
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
        throw ConfigError("holdout fraction must be in [0,1)");
    }
    const auto items = canonical_items(rankings);
    const int m = static_cast<int>(items.size());

    std::vector<std::size_t> order(rankings.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, {0x6d616c6c6f7773ull}));
    rng.shuffle(order);
    const std::size_t n_test = static_cast<std::size_t>(
        std::floor(holdout_fraction * static_cast<double>(rankings.size())));
    std::vector<Ranking> train, test;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i < rankings.size() - n_test) {
            train.push_back(rankings[order[i]]);
        } else {
            test.push_back(rankings[order[i]]);
        }
    }
    if (train.empty()) throw DataError("mallows fit: empty training split");

    MallowsModel model;
    model.n_train = train.size();
    model.n_test = test.size();
    model.consensus = kemeny(train, kemeny_cap).consensus;

    std::vector<int> train_d, test_d;
    for (const auto& r : train) train_d.push_back(kendall_distance(r.order, model.consensus));
    for (const auto& r : test) test_d.push_back(kendall_distance(r.order, model.consensus));
    const double sum_train_d = std::accumulate(train_d.begin(), train_d.end(), 0.0);

    auto train_ll = [&](double phi) {
        return sum_train_d * std::log(phi) -
               static_cast<double>(train.size()) * std::log(mallows_normalizer(phi, m));
    };

    // Golden-section maximization of the train likelihood on (1e-6, 1].
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 1e-6, hi = 1.0;
    double c = hi - gr * (hi - lo);
    double d = lo + gr * (hi - lo);
    double fc = train_ll(c), fd = train_ll(d);
    while (hi - lo > 1e-8) {
        if (fc > fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - gr * (hi - lo);
            fc = train_ll(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + gr * (hi - lo);
            fd = train_ll(d);
        }
    }
    model.phi = std::clamp(0.5 * (lo + hi), 1e-6, 1.0);
    model.train_log_likelihood = train_ll(model.phi);

    double test_ll = 0.0;
    const double log_z = std::log(mallows_normalizer(model.phi, m));
    for (int dist : test_d) test_ll += dist * std::log(model.phi) - log_z;
    model.test_log_likelihood = test_ll;
    return model;
}

json ranking_to_json(const Ranking& r) {
    json j;
    j["question_id"] = r.question_id;
    j["trial_id"] = r.trial_id;
    j["order"] = r.order;
    if (!r.presented.empty()) j["presented"] = r.presented;
    return j;
}

Ranking ranking_from_json(const json& j) {
    Ranking r;
    try {
        r.question_id = j.at("question_id").get<std::string>();
        r.trial_id = j.at("trial_id").get<int>();
        r.order = j.at("order").get<std::vector<std::string>>();
        if (j.contains("presented")) {
            r.presented = j.at("presented").get<std::vector<std::string>>();
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("ranking parse failure: ") + e.what());
    }
    return r;
}

std::vector<Ranking> load_rankings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open rankings: " + path);
    std::vector<Ranking> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(ranking_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw DataError("rankings parse failure at line " + std::to_string(line_no) + ": " +
                            e.what());
        }
    }
    return out;
}

void save_rankings(const std::vector<Ranking>& rankings, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    for (const auto& r : rankings) out << ranking_to_json(r).dump() << "\n";
    if (!out) throw DataError("write failure: " + path);
}

} // namespace panelkit
