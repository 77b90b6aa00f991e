#pragma once

#include <map>
#include <utility>
#include <vector>

#include "advimmune/certify.hpp"

namespace advimmune {

enum class BaselineMethod { Random, AttackRandom, Jaccard, Cosine, Betweenness, Bridgeness };

std::string baseline_name(BaselineMethod m);
BaselineMethod parse_baseline(const std::string& name);

struct BaselineConfig {
    BaselineMethod method = BaselineMethod::Random;
    std::uint64_t seed = 0;
    long long global_budget = 0;
    std::vector<int> local_budget;   // empty = unlimited
    double p_connected = 0.3;        // remove-add similarity split
    bool bridgeness_multiset = false;
};

ImmuneMask random_select(const BaselineConfig& cfg, const Graph& g, const AttackSpec& spec);
ImmuneMask attack_random_select(const BaselineConfig& cfg, const Graph& g,
                                const AttackSpec& spec, const DeltasMap& deltas);
ImmuneMask jaccard_select(const BaselineConfig& cfg, const Graph& g, const AttackSpec& spec);
ImmuneMask cosine_select(const BaselineConfig& cfg, const Graph& g, const AttackSpec& spec);
ImmuneMask betweenness_select(const BaselineConfig& cfg, const Graph& g,
                              const AttackSpec& spec);
ImmuneMask bridgeness_select(const BaselineConfig& cfg, const Graph& g,
                             const AttackSpec& spec);

ImmuneMask select_baseline(const BaselineConfig& cfg, const Graph& g, const AttackSpec& spec,
                           const DeltasMap* deltas = nullptr);

// Exact unweighted edge betweenness (Brandes), undirected keys (u,v) with
// u < v; every edge counted once.
std::map<std::pair<int, int>, double> edge_betweenness(const Graph& g);

}  // namespace advimmune
