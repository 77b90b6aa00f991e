#include "advimmune/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>

namespace advimmune {

std::string baseline_name(BaselineMethod m) {
    switch (m) {
        case BaselineMethod::Random: return "random";
        case BaselineMethod::AttackRandom: return "attack-random";
        case BaselineMethod::Jaccard: return "jaccard";
        case BaselineMethod::Cosine: return "cosine";
        case BaselineMethod::Betweenness: return "betweenness";
        case BaselineMethod::Bridgeness: return "bridgeness";
    }
    throw ConfigError("unknown baseline method");
}

BaselineMethod parse_baseline(const std::string& name) {
    if (name == "random") return BaselineMethod::Random;
    if (name == "attack-random") return BaselineMethod::AttackRandom;
    if (name == "jaccard") return BaselineMethod::Jaccard;
    if (name == "cosine") return BaselineMethod::Cosine;
    if (name == "betweenness") return BaselineMethod::Betweenness;
    if (name == "bridgeness") return BaselineMethod::Bridgeness;
    throw ConfigError("unknown baseline method '" + name + "'");
}

namespace {

struct Candidate {
    int src;
    int dst;
    double score;
};

// walk candidates in order, taking budget-feasible ones until C reached
ImmuneMask take_ranked(const std::vector<Candidate>& ranked, int n, long long budget,
                       const std::vector<int>& local) {
    ImmuneMask mask(n);
    int round = 0;
    for (const Candidate& c : ranked) {
        if (mask.zero_count() >= budget) break;
        if (mask.is_immunized(c.src, c.dst)) continue;
        if (!local.empty() &&
            (mask.incident_zeros[c.src] + 1 > local[c.src] ||
             mask.incident_zeros[c.dst] + 1 > local[c.dst]))
            continue;
        mask.immunize(c.src, c.dst, round++, c.score);
    }
    if (mask.zero_count() < budget)
        throw ConfigError("immune budget " + std::to_string(budget) +
                          " exceeds feasible candidates (" +
                          std::to_string(mask.zero_count()) + " selected)");
    return mask;
}

std::vector<Candidate> non_fixed_edges(const Graph& g, const AttackSpec& spec) {
    std::vector<Candidate> out;
    for (int i = 0; i < g.num_nodes; ++i)
        for (int j : g.adj[i])
            if (!spec.is_fixed(i, j)) out.push_back({i, j, 0.0});
    return out;
}

void rank_desc(std::vector<Candidate>& c) {
    std::stable_sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.src != b.src) return a.src < b.src;
        return a.dst < b.dst;
    });
}

void rank_asc(std::vector<Candidate>& c) {
    std::stable_sort(c.begin(), c.end(), [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score < b.score;
        if (a.src != b.src) return a.src < b.src;
        return a.dst < b.dst;
    });
}

void require_labels(const Graph& g, const char* method) {
    if (g.labels.empty())
        throw ConfigError(std::string(method) + " selection requires labels");
}

void require_features(const Graph& g, const char* method) {
    if (g.features.size() == 0)
        throw ConfigError(std::string(method) + " selection requires features");
}

double jaccard_rows(const Eigen::MatrixXd& x, int i, int j) {
    double inter = 0, uni = 0;
    for (int c = 0; c < x.cols(); ++c) {
        double a = x(i, c), b = x(j, c);
        inter += std::min(a, b);
        uni += std::max(a, b);
    }
    return uni > 0 ? inter / uni : 0.0;
}

double cosine_rows(const Eigen::MatrixXd& x, int i, int j) {
    double dot = x.row(i).dot(x.row(j));
    double na = x.row(i).norm(), nb = x.row(j).norm();
    return (na > 0 && nb > 0) ? dot / (na * nb) : 0.0;
}

ImmuneMask similarity_select(const BaselineConfig& cfg, const Graph& g,
                             const AttackSpec& spec, bool jaccard) {
    const char* name = jaccard ? "jaccard" : "cosine";
    require_features(g, name);
    require_labels(g, name);
    if (jaccard) {
        for (int i = 0; i < g.features.rows(); ++i)
            for (int c = 0; c < g.features.cols(); ++c) {
                double v = g.features(i, c);
                if (v != 0.0 && v != 1.0)
                    throw ConfigError("jaccard selection requires binary features");
            }
    }
    auto sim = [&](int i, int j) {
        return jaccard ? jaccard_rows(g.features, i, j) : cosine_rows(g.features, i, j);
    };

    std::vector<Candidate> connected;
    for (int i = 0; i < g.num_nodes; ++i)
        for (int j : g.adj[i])
            if (!spec.is_fixed(i, j) && g.labels[i] >= 0 && g.labels[i] == g.labels[j])
                connected.push_back({i, j, sim(i, j)});
    rank_desc(connected);

    if (spec.scenario == Scenario::RemoveOnly)
        return take_ranked(connected, g.num_nodes, cfg.global_budget, cfg.local_budget);

    long long c_conn = std::llround(cfg.p_connected * static_cast<double>(cfg.global_budget));
    c_conn = std::min(c_conn, cfg.global_budget);
    long long c_unconn = cfg.global_budget - c_conn;

    std::vector<Candidate> unconnected;
    for (int i = 0; i < g.num_nodes; ++i)
        for (int j = 0; j < g.num_nodes; ++j) {
            if (i == j || g.has_edge(i, j) || spec.is_fixed(i, j)) continue;
            if (g.labels[i] < 0 || g.labels[j] < 0 || g.labels[i] == g.labels[j]) continue;
            unconnected.push_back({i, j, sim(i, j)});
        }
    rank_asc(unconnected);

    ImmuneMask conn_mask = take_ranked(connected, g.num_nodes, c_conn, cfg.local_budget);
    ImmuneMask mask(g.num_nodes);
    int round = 0;
    for (const Selection& s : conn_mask.trace) mask.immunize(s.src, s.dst, round++, s.value);
    long long want = c_conn + c_unconn;
    for (const Candidate& c : unconnected) {
        if (mask.zero_count() >= want) break;
        if (mask.is_immunized(c.src, c.dst)) continue;
        if (!cfg.local_budget.empty() &&
            (mask.incident_zeros[c.src] + 1 > cfg.local_budget[c.src] ||
             mask.incident_zeros[c.dst] + 1 > cfg.local_budget[c.dst]))
            continue;
        mask.immunize(c.src, c.dst, round++, c.score);
    }
    if (mask.zero_count() < want)
        throw ConfigError("immune budget exceeds feasible candidates");
    return mask;
}

}  // namespace

ImmuneMask random_select(const BaselineConfig& cfg, const Graph& g, const AttackSpec& spec) {
    Rng rng(cfg.seed);
    if (spec.scenario == Scenario::RemoveOnly) {
        std::vector<Candidate> cands = non_fixed_edges(g, spec);
        std::vector<int> idx(cands.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
        rng.shuffle(idx);
        std::vector<Candidate> shuffled;
        shuffled.reserve(cands.size());
        for (int i : idx) shuffled.push_back(cands[i]);
        return take_ranked(shuffled, g.num_nodes, cfg.global_budget, cfg.local_budget);
    }

    long long fixed_count = 0;
    for (const auto& row : spec.fixed_out) fixed_count += static_cast<long long>(row.size());
    long long universe = static_cast<long long>(g.num_nodes) * (g.num_nodes - 1) - fixed_count;
    if (cfg.global_budget > universe)
        throw ConfigError("immune budget exceeds candidate pairs");

    ImmuneMask mask(g.num_nodes);
    int round = 0;
    long long attempts = 0, cap = cfg.global_budget * 1000 + 100000;
    while (mask.zero_count() < cfg.global_budget) {
        if (++attempts > cap)
            throw ConfigError("random selection could not satisfy budgets (feasible "
                              "candidates exhausted?)");
        int i = static_cast<int>(rng.uniform_below(g.num_nodes));
        int j = static_cast<int>(rng.uniform_below(g.num_nodes));
        if (i == j || spec.is_fixed(i, j) || mask.is_immunized(i, j)) continue;
        if (!cfg.local_budget.empty() &&
            (mask.incident_zeros[i] + 1 > cfg.local_budget[i] ||
             mask.incident_zeros[j] + 1 > cfg.local_budget[j]))
            continue;
        mask.immunize(i, j, round++, 0.0);
    }
    return mask;
}

ImmuneMask attack_random_select(const BaselineConfig& cfg, const Graph& g,
                                const AttackSpec& spec, const DeltasMap& deltas) {
    (void)spec;
    std::set<std::pair<int, int>> support_set;
    for (const auto& [pair, delta] : deltas)
        for (const DeltaEntry& e : delta.entries) support_set.insert({e.src, e.dst});
    std::vector<Candidate> cands;
    for (auto [i, j] : support_set) cands.push_back({i, j, 0.0});
    if (cfg.global_budget > static_cast<long long>(cands.size()))
        throw ConfigError("immune budget " + std::to_string(cfg.global_budget) +
                          " exceeds worst-case support size " + std::to_string(cands.size()));

    Rng rng(cfg.seed);
    std::vector<int> idx(cands.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    rng.shuffle(idx);
    std::vector<Candidate> shuffled;
    shuffled.reserve(cands.size());
    for (int i : idx) shuffled.push_back(cands[i]);
    return take_ranked(shuffled, g.num_nodes, cfg.global_budget, cfg.local_budget);
}

ImmuneMask jaccard_select(const BaselineConfig& cfg, const Graph& g, const AttackSpec& spec) {
    return similarity_select(cfg, g, spec, true);
}

ImmuneMask cosine_select(const BaselineConfig& cfg, const Graph& g, const AttackSpec& spec) {
    return similarity_select(cfg, g, spec, false);
}

std::map<std::pair<int, int>, double> edge_betweenness(const Graph& g) {
    int n = g.num_nodes;
    std::map<std::pair<int, int>, double> score;
    for (int i = 0; i < n; ++i)
        for (int j : g.adj[i])
            if (i < j) score[{i, j}] = 0.0;

    std::vector<double> sigma(n), delta(n);
    std::vector<int> dist(n);
    std::vector<std::vector<int>> preds(n);
    std::vector<int> order;
    order.reserve(n);

    for (int s = 0; s < n; ++s) {
        std::fill(sigma.begin(), sigma.end(), 0.0);
        std::fill(delta.begin(), delta.end(), 0.0);
        std::fill(dist.begin(), dist.end(), -1);
        for (auto& p : preds) p.clear();
        order.clear();

        std::deque<int> queue;
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while (!queue.empty()) {
            int u = queue.front();
            queue.pop_front();
            order.push_back(u);
            for (int v : g.adj[u]) {
                if (dist[v] < 0) {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
                if (dist[v] == dist[u] + 1) {
                    sigma[v] += sigma[u];
                    preds[v].push_back(u);
                }
            }
        }
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            int w = *it;
            for (int v : preds[w]) {
                double c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                auto key = std::minmax(v, w);
                score[{key.first, key.second}] += c;
                delta[v] += c;
            }
        }
    }
    // each undirected pair contributes from both directions
    for (auto& [k, v] : score) v /= 2.0;
    return score;
}

ImmuneMask betweenness_select(const BaselineConfig& cfg, const Graph& g,
                              const AttackSpec& spec) {
    if (spec.scenario != Scenario::RemoveOnly)
        throw ConfigError("betweenness selection supports only the remove-only scenario");
    auto bw = edge_betweenness(g);
    std::vector<Candidate> cands = non_fixed_edges(g, spec);
    for (Candidate& c : cands) {
        auto key = std::minmax(c.src, c.dst);
        c.score = bw.at({key.first, key.second});
    }
    rank_desc(cands);
    return take_ranked(cands, g.num_nodes, cfg.global_budget, cfg.local_budget);
}

ImmuneMask bridgeness_select(const BaselineConfig& cfg, const Graph& g,
                             const AttackSpec& spec) {
    require_labels(g, "bridgeness");

    auto label_counts = [&](int i) {
        std::map<int, int> counts;
        for (int u : g.adj[i])
            if (g.labels[u] >= 0) ++counts[g.labels[u]];
        return counts;
    };

    std::vector<Candidate> cands = non_fixed_edges(g, spec);
    std::vector<std::map<int, int>> counts(g.num_nodes);
    for (int i = 0; i < g.num_nodes; ++i) counts[i] = label_counts(i);

    for (Candidate& c : cands) {
        const auto& a = counts[c.src];
        const auto& b = counts[c.dst];
        double inter = 0, uni = 0;
        auto ita = a.begin();
        auto itb = b.begin();
        while (ita != a.end() || itb != b.end()) {
            if (itb == b.end() || (ita != a.end() && ita->first < itb->first)) {
                uni += cfg.bridgeness_multiset ? ita->second : 1;
                ++ita;
            } else if (ita == a.end() || itb->first < ita->first) {
                uni += cfg.bridgeness_multiset ? itb->second : 1;
                ++itb;
            } else {
                if (cfg.bridgeness_multiset) {
                    inter += std::min(ita->second, itb->second);
                    uni += std::max(ita->second, itb->second);
                } else {
                    inter += 1;
                    uni += 1;
                }
                ++ita;
                ++itb;
            }
        }
        c.score = uni > 0 ? inter / uni : 0.0;
    }
    rank_desc(cands);
    return take_ranked(cands, g.num_nodes, cfg.global_budget, cfg.local_budget);
}

ImmuneMask select_baseline(const BaselineConfig& cfg, const Graph& g, const AttackSpec& spec,
                           const DeltasMap* deltas) {
    switch (cfg.method) {
        case BaselineMethod::Random: return random_select(cfg, g, spec);
        case BaselineMethod::AttackRandom:
            if (!deltas) throw ConfigError("attack-random needs worst-case deltas");
            return attack_random_select(cfg, g, spec, *deltas);
        case BaselineMethod::Jaccard: return jaccard_select(cfg, g, spec);
        case BaselineMethod::Cosine: return cosine_select(cfg, g, spec);
        case BaselineMethod::Betweenness: return betweenness_select(cfg, g, spec);
        case BaselineMethod::Bridgeness: return bridgeness_select(cfg, g, spec);
    }
    throw ConfigError("unknown baseline method");
}

}  // namespace advimmune
