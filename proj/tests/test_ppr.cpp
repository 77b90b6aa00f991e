#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cstdio>
#include <fstream>

#include "advimmune/common.hpp"
#include "advimmune/graph.hpp"
#include "advimmune/ppr.hpp"

using namespace advimmune;

namespace {

Graph random_connected_graph(int n, double extra_p, Rng& rng) {
    std::vector<Edge> edges;
    for (int i = 1; i < n; ++i) {
        int j = static_cast<int>(rng.uniform_below(i));
        edges.push_back({j, i});
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (rng.uniform01() < extra_p) edges.push_back({i, j});
    return graph_from_undirected(n, edges);
}

Eigen::MatrixXd naive_transition(const Graph& g) {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(g.num_nodes, g.num_nodes);
    for (int i = 0; i < g.num_nodes; ++i)
        for (int j : g.adj[i]) p(i, j) = 1.0 / g.degrees[i];
    return p;
}

}  // namespace

TEST_CASE("transition matrix of a triangle is uniform over neighbors") {
    Graph g = graph_from_undirected(3, {{0, 1}, {1, 2}, {2, 0}});
    Eigen::MatrixXd p = transition_matrix(g);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(p(i, j) == (i == j ? 0.0 : 0.5));
}

TEST_CASE("transition matrix rejects isolated nodes") {
    Graph g = graph_from_undirected(3, {{0, 1}});
    CHECK_THROWS_WITH_AS(transition_matrix(g), doctest::Contains("out-degree 0"),
                         ConfigError);
}

TEST_CASE("two node cycle matches the closed form") {
    Graph g = graph_from_undirected(2, {{0, 1}});
    double alpha = 0.85;
    PPRMatrix pi = ppr_full(g, alpha);
    CHECK(pi.pi(0, 0) == doctest::Approx(1.0 / 1.85).epsilon(1e-12));
    CHECK(pi.pi(0, 1) == doctest::Approx(0.85 / 1.85).epsilon(1e-12));
    CHECK(pi.pi(1, 0) == doctest::Approx(0.85 / 1.85).epsilon(1e-12));
    CHECK(pi.pi(1, 1) == doctest::Approx(1.0 / 1.85).epsilon(1e-12));
}

TEST_CASE("diffusion matrix matches an explicit dense inverse") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        int n = 3 + static_cast<int>(rng.uniform_below(8));
        Graph g = random_connected_graph(n, 0.4, rng);
        double alpha = 0.5 + 0.4 * rng.uniform01();
        Eigen::MatrixXd m =
            Eigen::MatrixXd::Identity(n, n) - alpha * naive_transition(g);
        Eigen::MatrixXd want = (1.0 - alpha) * m.inverse();
        PPRMatrix pi = ppr_full(g, alpha);
        CHECK((pi.pi - want).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("diffusion matrix matches the truncated power series") {
    Rng rng(12);
    Graph g = random_connected_graph(9, 0.3, rng);
    double alpha = 0.85;
    Eigen::MatrixXd p = naive_transition(g);
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(9, 9);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(9, 9);
    for (int k = 0; k < 420; ++k) {
        sum += term;
        term = alpha * (term * p);
    }
    Eigen::MatrixXd want = (1.0 - alpha) * sum;
    PPRMatrix pi = ppr_full(g, alpha);
    CHECK((pi.pi - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("single row solve agrees with the full matrix") {
    Rng rng(13);
    Graph g = random_connected_graph(12, 0.3, rng);
    PPRMatrix pi = ppr_full(g, 0.85);
    for (int t : {0, 5, 11}) {
        Eigen::VectorXd row = ppr_row(g, 0.85, t);
        CHECK((row.transpose() - pi.pi.row(t)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("rows sum to one") {
    Rng rng(14);
    Graph g = random_connected_graph(30, 0.1, rng);
    PPRMatrix pi = ppr_full(g, 0.85);
    for (int i = 0; i < 30; ++i)
        CHECK(pi.pi.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pi.pi.minCoeff() >= 0.0);
}

TEST_CASE("small alpha keeps mass at the source") {
    Graph g = graph_from_undirected(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
    PPRMatrix pi = ppr_full(g, 1e-6);
    CHECK((pi.pi - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 2e-6);
}

TEST_CASE("alpha outside the open unit interval is rejected") {
    Graph g = graph_from_undirected(2, {{0, 1}});
    CHECK_THROWS_AS(ppr_full(g, 0.0), ConfigError);
    CHECK_THROWS_AS(ppr_full(g, 1.0), ConfigError);
    CHECK_THROWS_AS(ppr_row(g, -0.5, 0), ConfigError);
}

TEST_CASE("diffusion is linear") {
    Rng rng(15);
    Graph g = random_connected_graph(10, 0.3, rng);
    PPRMatrix pi = ppr_full(g, 0.85);
    Eigen::MatrixXd h1 = Eigen::MatrixXd::Random(10, 3);
    Eigen::MatrixXd h2 = Eigen::MatrixXd::Random(10, 3);
    Eigen::MatrixXd lhs = diffuse(pi, 2.0 * h1 - 0.5 * h2);
    Eigen::MatrixXd rhs = 2.0 * diffuse(pi, h1) - 0.5 * diffuse(pi, h2);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("diffusing constant columns is an identity") {
    Rng rng(16);
    Graph g = random_connected_graph(8, 0.3, rng);
    PPRMatrix pi = ppr_full(g, 0.85);
    Eigen::MatrixXd h = Eigen::MatrixXd::Ones(8, 2);
    h.col(1).setConstant(-3.0);
    Eigen::MatrixXd out = diffuse(pi, h);
    CHECK((out - h).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("predict breaks ties toward the lowest class") {
    Eigen::MatrixXd h(3, 3);
    h << 1.0, 1.0, 1.0, 0.0, 2.0, 2.0, -1.0, 0.5, 0.4;
    std::vector<int> want = {0, 1, 1};
    CHECK(predict(h) == want);
}

TEST_CASE("cache round trips bit for bit") {
    Rng rng(17);
    Graph g = random_connected_graph(15, 0.2, rng);
    PPRMatrix pi = ppr_full(g, 0.85);
    std::string path = "/tmp/advimmune_test_cache.bin";
    save_ppr_cache(pi, path);
    PPRMatrix back = load_ppr_cache(path);
    CHECK(back.alpha == pi.alpha);
    REQUIRE(back.pi.rows() == pi.pi.rows());
    CHECK((back.pi.array() == pi.pi.array()).all());
}

TEST_CASE("cache rejects a bad magic") {
    std::string path = "/tmp/advimmune_test_cache_bad.bin";
    std::ofstream out(path, std::ios::binary);
    out << "nonsense data here";
    out.close();
    CHECK_THROWS_AS(load_ppr_cache(path), ConfigError);
}

TEST_CASE("cache rejects truncation") {
    Graph g = graph_from_undirected(4, {{0, 1}, {1, 2}, {2, 3}});
    PPRMatrix pi = ppr_full(g, 0.85);
    std::string path = "/tmp/advimmune_test_cache_trunc.bin";
    save_ppr_cache(pi, path);
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 8));
    out.close();
    CHECK_THROWS_AS(load_ppr_cache(path), ConfigError);
}

TEST_CASE("a thousand node graph solves quickly") {
    Rng rng(18);
    Graph g = random_connected_graph(1000, 0.004, rng);
    PPRMatrix pi = ppr_full(g, 0.85);
    CHECK(pi.pi.row(0).sum() == doctest::Approx(1.0).epsilon(1e-9));
    Eigen::VectorXd row = ppr_row(g, 0.85, 123);
    CHECK((row.transpose() - pi.pi.row(123)).cwiseAbs().maxCoeff() < 1e-10);
}
