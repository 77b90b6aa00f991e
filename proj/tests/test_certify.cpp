#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <set>
#include <vector>

#include "advimmune/certify.hpp"
#include "advimmune/common.hpp"
#include "advimmune/graph.hpp"
#include "advimmune/mask.hpp"

using namespace advimmune;

namespace {

Graph random_connected_graph(int n, double extra_p, Rng& rng) {
    std::vector<Edge> edges;
    for (int i = 1; i < n; ++i) edges.push_back({static_cast<int>(rng.uniform_below(i)), i});
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (rng.uniform01() < extra_p) edges.push_back({i, j});
    return graph_from_undirected(n, edges);
}

struct OracleInstance {
    Graph g;
    AttackSpec spec;
    Eigen::MatrixXd h;
    double alpha;
};

// fixed set is a spanning tree so every admissible row keeps an out-edge;
// fragile entries are directed and may point at non-edges (additions)
OracleInstance random_instance(Rng& rng, int max_n = 7, int max_fragile = 8,
                               int max_budget = 3, int num_classes = 3) {
    OracleInstance inst;
    int n = 3 + static_cast<int>(rng.uniform_below(max_n - 2));
    inst.g = random_connected_graph(n, 0.35, rng);
    inst.alpha = 0.6 + 0.3 * rng.uniform01();

    auto mst = minimum_spanning_tree(inst.g);
    inst.spec.scenario = Scenario::RemoveOnly;
    inst.spec.fragile_is_complement = false;
    inst.spec.fixed_out.assign(n, {});
    inst.spec.fragile_out.assign(n, {});
    for (const Edge& e : mst) inst.spec.fixed_out[e.src].push_back(e.dst);
    for (auto& row : inst.spec.fixed_out) std::sort(row.begin(), row.end());

    std::vector<std::pair<int, int>> candidates;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && !inst.spec.is_fixed(i, j)) candidates.emplace_back(i, j);
    rng.shuffle(candidates);
    int num_fragile = static_cast<int>(rng.uniform_below(max_fragile + 1));
    for (int t = 0; t < num_fragile && t < static_cast<int>(candidates.size()); ++t)
        inst.spec.fragile_out[candidates[t].first].push_back(candidates[t].second);
    for (auto& row : inst.spec.fragile_out) std::sort(row.begin(), row.end());

    inst.spec.local_budget.assign(n, 0);
    for (int i = 0; i < n; ++i)
        inst.spec.local_budget[i] = static_cast<int>(rng.uniform_below(max_budget + 1));
    inst.spec.global_budget = static_cast<long long>(n) * n;

    inst.h.resize(n, num_classes);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < num_classes; ++c) inst.h(i, c) = 2.0 * rng.uniform01() - 1.0;
    return inst;
}

Eigen::VectorXd margins_of_rows(const std::vector<std::vector<int>>& rows,
                                const Eigen::MatrixXd& h, double alpha, int y, int k) {
    int n = static_cast<int>(rows.size());
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j : rows[i]) p(i, j) = 1.0 / static_cast<double>(rows[i].size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - alpha * p;
    Eigen::VectorXd b = h.col(y) - h.col(k);
    return (1.0 - alpha) * m.inverse() * b;
}

// enumerates every admissible configuration as a product over rows of
// fragile-subset toggles, minimizing each source margin independently
Eigen::VectorXd brute_force_worst(const OracleInstance& inst, int y, int k,
                                  const ImmuneMask* frozen = nullptr) {
    int n = inst.g.num_nodes;
    std::vector<std::vector<std::vector<int>>> row_choices(n);
    for (int i = 0; i < n; ++i) {
        std::vector<int> fragile;
        for (int j : inst.spec.fragile_out[i])
            if (!frozen || !frozen->is_immunized(i, j)) fragile.push_back(j);
        int f = static_cast<int>(fragile.size());
        std::set<int> clean(inst.g.adj[i].begin(), inst.g.adj[i].end());
        for (int bits = 0; bits < (1 << f); ++bits) {
            if (__builtin_popcount(static_cast<unsigned>(bits)) > inst.spec.local_budget[i])
                continue;
            std::set<int> row = clean;
            for (int t = 0; t < f; ++t)
                if (bits & (1 << t)) {
                    if (row.count(fragile[t]))
                        row.erase(fragile[t]);
                    else
                        row.insert(fragile[t]);
                }
            row_choices[i].emplace_back(row.begin(), row.end());
        }
    }

    Eigen::VectorXd best = Eigen::VectorXd::Constant(n, 1e300);
    std::vector<std::vector<int>> rows(n);
    std::vector<int> pick(n, 0);
    while (true) {
        for (int i = 0; i < n; ++i) rows[i] = row_choices[i][pick[i]];
        Eigen::VectorXd m = margins_of_rows(rows, inst.h, inst.alpha, y, k);
        best = best.cwiseMin(m);
        int i = 0;
        while (i < n && ++pick[i] == static_cast<int>(row_choices[i].size())) pick[i++] = 0;
        if (i == n) break;
    }
    return best;
}

}  // namespace

TEST_CASE("margin of a class against itself is zero") {
    Rng rng(21);
    Graph g = random_connected_graph(6, 0.3, rng);
    Eigen::MatrixXd h = Eigen::MatrixXd::Random(6, 3);
    for (int t = 0; t < 6; ++t) CHECK(margin(g.adj, h, 0.85, t, 1, 1) == 0.0);
}

TEST_CASE("constant logit gap gives a constant margin") {
    Rng rng(22);
    Graph g = random_connected_graph(7, 0.3, rng);
    Eigen::MatrixXd h = Eigen::MatrixXd::Random(7, 2);
    h.col(0) = h.col(1).array() + 0.75;
    for (int t = 0; t < 7; ++t)
        CHECK(margin(g.adj, h, 0.85, t, 0, 1) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("margin agrees with an explicit inverse") {
    Rng rng(23);
    Graph g = random_connected_graph(8, 0.3, rng);
    Eigen::MatrixXd h = Eigen::MatrixXd::Random(8, 3);
    Eigen::VectorXd want = margins_of_rows(g.adj, h, 0.85, 2, 0);
    Eigen::VectorXd got = margin_vector(g.adj, h, 0.85, 2, 0);
    CHECK((want - got).cwiseAbs().maxCoeff() < 1e-11);
    for (int t = 0; t < 8; ++t)
        CHECK(margin(g.adj, h, 0.85, t, 2, 0) == doctest::Approx(want(t)).epsilon(1e-11));
}

TEST_CASE("no fragile entries leaves the clean margins") {
    Rng rng(24);
    OracleInstance inst = random_instance(rng);
    for (auto& row : inst.spec.fragile_out) row.clear();
    AttackResult res = worst_case_attack(inst.g, inst.h, inst.spec, inst.alpha, 0, 1);
    Eigen::VectorXd clean = margin_vector(inst.g.adj, inst.h, inst.alpha, 0, 1);
    CHECK((res.margins - clean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(res.delta.entries.empty());
}

TEST_CASE("a single removable edge is flipped exactly when it helps") {
    Graph g = graph_from_undirected(3, {{0, 1}, {1, 2}, {2, 0}});
    AttackSpec spec;
    spec.scenario = Scenario::RemoveOnly;
    spec.fragile_is_complement = false;
    spec.fixed_out = {{1}, {0, 2}, {1}};
    spec.fragile_out = {{2}, {}, {0}};
    spec.local_budget = {1, 1, 1};
    spec.global_budget = 9;

    Eigen::MatrixXd h(3, 2);
    h << 1.0, 0.0, -1.0, 0.0, 2.0, 0.0;

    AttackResult res = worst_case_attack(g, h, spec, 0.85, 0, 1);
    Eigen::VectorXd kept = margins_of_rows({{1, 2}, {0, 2}, {0, 1}}, h, 0.85, 0, 1);
    Eigen::VectorXd drop02 = margins_of_rows({{1}, {0, 2}, {0, 1}}, h, 0.85, 0, 1);
    Eigen::VectorXd drop20 = margins_of_rows({{1, 2}, {0, 2}, {1}}, h, 0.85, 0, 1);
    Eigen::VectorXd drop_both = margins_of_rows({{1}, {0, 2}, {1}}, h, 0.85, 0, 1);
    Eigen::VectorXd want = kept.cwiseMin(drop02).cwiseMin(drop20).cwiseMin(drop_both);
    CHECK((res.margins - want).cwiseAbs().maxCoeff() < 1e-11);
}

TEST_CASE("policy iteration matches brute force on random instances") {
    Rng rng(25);
    for (int trial = 0; trial < 25; ++trial) {
        OracleInstance inst = random_instance(rng);
        int y = static_cast<int>(rng.uniform_below(3));
        int k = (y + 1 + static_cast<int>(rng.uniform_below(2))) % 3;
        AttackResult res = worst_case_attack(inst.g, inst.h, inst.spec, inst.alpha, y, k);
        Eigen::VectorXd want = brute_force_worst(inst, y, k);
        CHECK((res.margins - want).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("policy iteration matches brute force with additions and a frozen mask") {
    Rng rng(26);
    int tested = 0;
    for (int trial = 0; trial < 25; ++trial) {
        OracleInstance inst = random_instance(rng);
        std::vector<std::pair<int, int>> fragile;
        for (int i = 0; i < inst.g.num_nodes; ++i)
            for (int j : inst.spec.fragile_out[i]) fragile.emplace_back(i, j);
        if (fragile.empty()) continue;
        ImmuneMask mask(inst.g.num_nodes);
        for (const auto& e : fragile)
            if (rng.uniform01() < 0.4) mask.immunize(e.first, e.second, 0, 0.0);
        if (mask.zero_count() == 0) continue;
        ++tested;
        int y = static_cast<int>(rng.uniform_below(3));
        int k = (y + 1) % 3;
        AttackResult res =
            worst_case_attack(inst.g, inst.h, inst.spec, inst.alpha, y, k, &mask);
        Eigen::VectorXd want = brute_force_worst(inst, y, k, &mask);
        CHECK((res.margins - want).cwiseAbs().maxCoeff() < 1e-9);
    }
    CHECK(tested > 5);
}

TEST_CASE("the complement flag matches an explicit fragile expansion") {
    Rng rng(27);
    for (int trial = 0; trial < 8; ++trial) {
        Graph g = random_connected_graph(6, 0.3, rng);
        auto mst = minimum_spanning_tree(g);
        AttackSpec comp = build_attack_spec(g, Scenario::RemoveAdd, mst, 1);

        AttackSpec expl = comp;
        expl.fragile_is_complement = false;
        expl.fragile_out.assign(g.num_nodes, {});
        for (int i = 0; i < g.num_nodes; ++i)
            for (int j = 0; j < g.num_nodes; ++j)
                if (j != i && !comp.is_fixed(i, j)) expl.fragile_out[i].push_back(j);

        Eigen::MatrixXd h = Eigen::MatrixXd::Random(g.num_nodes, 2);
        AttackResult a = worst_case_attack(g, h, comp, 0.85, 0, 1);
        AttackResult b = worst_case_attack(g, h, expl, 0.85, 0, 1);
        CHECK((a.margins - b.margins).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(a.delta.entries == b.delta.entries);
    }
}

TEST_CASE("growing the fragile set never raises the worst margins") {
    Rng rng(28);
    for (int trial = 0; trial < 10; ++trial) {
        OracleInstance inst = random_instance(rng);
        AttackSpec smaller = inst.spec;
        for (auto& row : smaller.fragile_out)
            if (!row.empty()) row.pop_back();
        AttackResult small = worst_case_attack(inst.g, inst.h, smaller, inst.alpha, 0, 1);
        AttackResult big = worst_case_attack(inst.g, inst.h, inst.spec, inst.alpha, 0, 1);
        CHECK((big.margins.array() <= small.margins.array() + 1e-10).all());
    }
}

TEST_CASE("freezing entries never lowers the worst margins") {
    Rng rng(29);
    for (int trial = 0; trial < 10; ++trial) {
        OracleInstance inst = random_instance(rng);
        ImmuneMask mask(inst.g.num_nodes);
        for (int i = 0; i < inst.g.num_nodes; ++i)
            for (int j : inst.spec.fragile_out[i])
                if (rng.uniform01() < 0.5) mask.immunize(i, j, 0, 0.0);
        AttackResult open = worst_case_attack(inst.g, inst.h, inst.spec, inst.alpha, 1, 0);
        AttackResult shut =
            worst_case_attack(inst.g, inst.h, inst.spec, inst.alpha, 1, 0, &mask);
        CHECK((shut.margins.array() >= open.margins.array() - 1e-10).all());
    }
}

TEST_CASE("the objective never increases across iterations") {
    Rng rng(30);
    OracleInstance inst = random_instance(rng, 7, 8, 3);
    AttackResult res = worst_case_attack(inst.g, inst.h, inst.spec, inst.alpha, 0, 2);
    for (size_t i = 1; i < res.objective.size(); ++i)
        CHECK(res.objective[i] <= res.objective[i - 1] + 1e-12);
    CHECK(res.iterations <= 200);
}

TEST_CASE("the attack is deterministic") {
    Rng rng(31);
    OracleInstance inst = random_instance(rng);
    AttackResult a = worst_case_attack(inst.g, inst.h, inst.spec, inst.alpha, 0, 1);
    AttackResult b = worst_case_attack(inst.g, inst.h, inst.spec, inst.alpha, 0, 1);
    CHECK((a.margins.array() == b.margins.array()).all());
    CHECK(a.delta.entries == b.delta.entries);
}

TEST_CASE("the delta rebuilds the attacked margins") {
    Rng rng(32);
    for (int trial = 0; trial < 10; ++trial) {
        OracleInstance inst = random_instance(rng);
        AttackResult res = worst_case_attack(inst.g, inst.h, inst.spec, inst.alpha, 2, 1);
        std::vector<std::vector<int>> rows = inst.g.adj;
        for (const DeltaEntry& e : res.delta.entries) {
            auto& row = rows[e.src];
            if (e.sign > 0) {
                row.insert(std::lower_bound(row.begin(), row.end(), e.dst), e.dst);
            } else {
                row.erase(std::find(row.begin(), row.end(), e.dst));
            }
        }
        Eigen::VectorXd rebuilt = margins_of_rows(rows, inst.h, inst.alpha, 2, 1);
        CHECK((res.margins - rebuilt).cwiseAbs().maxCoeff() < 1e-10);
        for (const DeltaEntry& e : res.delta.entries)
            CHECK(inst.spec.is_fragile(e.src, e.dst));
    }
}

TEST_CASE("certify reports the minimum margin over opposing classes") {
    Rng rng(33);
    OracleInstance inst = random_instance(rng, 7, 8, 2);
    CertifyResult res = certify(inst.g, inst.h, inst.spec, inst.alpha);
    REQUIRE(static_cast<int>(res.reports.size()) == inst.g.num_nodes);

    std::set<int> present(res.predictions.begin(), res.predictions.end());
    for (const MarginReport& r : res.reports) {
        CHECK(r.label_class == res.predictions[r.node]);
        double best = 1e300;
        int best_k = -1;
        for (int k = 0; k < 3; ++k) {
            if (k == r.label_class) continue;
            AttackResult a =
                worst_case_attack(inst.g, inst.h, inst.spec, inst.alpha, r.label_class, k);
            if (a.margins(r.node) < best) {
                best = a.margins(r.node);
                best_k = k;
            }
        }
        CHECK(r.worst_margin == doctest::Approx(best).epsilon(1e-12));
        CHECK(r.worst_class == best_k);
        CHECK(r.robust == (best > 0));
    }
    for (const auto& [pair, delta] : res.deltas) {
        CHECK(present.count(pair.first) == 1);
        CHECK(pair.first != pair.second);
        (void)delta;
    }
}

TEST_CASE("identical opposing columns tie toward the lowest class") {
    Rng rng(34);
    Graph g = random_connected_graph(6, 0.3, rng);
    Eigen::MatrixXd h(6, 3);
    h.col(0).setConstant(1.0);
    h.col(1).setConstant(0.25);
    h.col(2) = h.col(1);
    auto mst = minimum_spanning_tree(g);
    AttackSpec spec = build_attack_spec(g, Scenario::RemoveOnly, mst);
    CertifyResult res = certify(g, h, spec, 0.85);
    for (const MarginReport& r : res.reports) {
        CHECK(r.label_class == 0);
        CHECK(r.worst_class == 1);
    }
}

TEST_CASE("certify aggregates ratios over all nodes") {
    Rng rng(35);
    OracleInstance inst = random_instance(rng);
    CertifyResult res = certify(inst.g, inst.h, inst.spec, inst.alpha);
    int robust = 0;
    double sum = 0;
    for (const MarginReport& r : res.reports) {
        robust += r.robust ? 1 : 0;
        sum += r.worst_margin;
    }
    CHECK(res.robust_ratio ==
          doctest::Approx(static_cast<double>(robust) / inst.g.num_nodes).epsilon(1e-12));
    CHECK(res.mean_worst_margin ==
          doctest::Approx(sum / inst.g.num_nodes).epsilon(1e-12));
}

TEST_CASE("certify is identical with multiple threads") {
    Rng rng(36);
    OracleInstance inst = random_instance(rng);
    CertifyResult a = certify(inst.g, inst.h, inst.spec, inst.alpha, nullptr, 1);
    CertifyResult b = certify(inst.g, inst.h, inst.spec, inst.alpha, nullptr, 4);
    REQUIRE(a.reports.size() == b.reports.size());
    for (size_t i = 0; i < a.reports.size(); ++i) {
        CHECK(a.reports[i].worst_margin == b.reports[i].worst_margin);
        CHECK(a.reports[i].worst_class == b.reports[i].worst_class);
    }
}

TEST_CASE("a single class is rejected") {
    Rng rng(37);
    OracleInstance inst = random_instance(rng, 7, 4, 2, 1);
    CHECK_THROWS_AS(certify(inst.g, inst.h, inst.spec, inst.alpha), ConfigError);
}

TEST_CASE("an exceeded global budget is rejected") {
    Rng rng(38);
    for (int trial = 0; trial < 20; ++trial) {
        OracleInstance inst = random_instance(rng);
        AttackResult probe = worst_case_attack(inst.g, inst.h, inst.spec, inst.alpha, 0, 1);
        if (probe.delta.entries.empty()) continue;
        inst.spec.global_budget = 0;
        CHECK_THROWS_WITH_AS(certify(inst.g, inst.h, inst.spec, inst.alpha),
                             doctest::Contains("unsupported"), ConfigError);
        return;
    }
    FAIL("no instance produced a non-empty attack");
}
