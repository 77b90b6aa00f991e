#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "advimmune/common.hpp"

namespace advimmune {

struct Graph {
    int num_nodes = 0;
    std::vector<std::vector<int>> adj;    // sorted out-neighbor lists
    std::vector<int> degrees;
    std::vector<long long> original_ids;  // internal id -> input id
    Eigen::MatrixXd features;             // 0x0 when absent
    std::vector<int> labels;              // empty when absent, -1 = unlabeled
    int num_classes = 0;
    int duplicate_edges = 0;              // deduplicated at load

    bool has_edge(int i, int j) const;
    long long num_directed_edges() const;
};

enum class Scenario { RemoveOnly, RemoveAdd };

std::string scenario_name(Scenario s);
Scenario parse_scenario(const std::string& name);

// Fragile entries are directed. RemoveAdd keeps the fragile set implicit:
// every ordered pair that is neither fixed nor a self-loop.
struct AttackSpec {
    Scenario scenario = Scenario::RemoveOnly;
    std::vector<std::vector<int>> fixed_out;
    std::vector<std::vector<int>> fragile_out;
    bool fragile_is_complement = false;
    std::vector<int> local_budget;
    long long global_budget = 0;

    bool is_fixed(int i, int j) const;
    bool is_fragile(int i, int j) const;
    void validate(const Graph& g) const;
};

Graph load_edge_list(const std::string& path);
Graph largest_connected_component(const Graph& g);

// Unit weights, Kruskal in lexicographic (src,dst) order. Returns both
// directed entries of each tree edge, sorted.
std::vector<Edge> minimum_spanning_tree(const Graph& g);

AttackSpec build_attack_spec(const Graph& g, Scenario scenario,
                             const std::vector<Edge>& fixed_edges,
                             int remove_add_offset = 6);

void load_labels(Graph& g, const std::string& path);
void load_features(Graph& g, const std::string& path);
void save_id_map(const Graph& g, const std::string& path, const std::string& header_comment);

Graph graph_from_undirected(int n, const std::vector<Edge>& edges);

Graph generate_planted_partition(int n, int blocks, double p_in, double p_out,
                                 std::uint64_t seed);

// Block-indicator features with per-bit noise; binary, one block of
// `bits_per_class` columns per class.
Eigen::MatrixXd synth_block_features(const std::vector<int>& labels, int num_classes,
                                     int bits_per_class, double flip_prob,
                                     std::uint64_t seed);

}  // namespace advimmune
