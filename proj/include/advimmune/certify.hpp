#pragma once

#include <Eigen/Dense>
#include <map>
#include <vector>

#include "advimmune/graph.hpp"
#include "advimmune/mask.hpp"
#include "advimmune/ppr.hpp"

namespace advimmune {

struct MarginReport {
    int node = 0;
    int label_class = 0;   // clean predicted class
    int worst_class = 0;
    double worst_margin = 0.0;
    bool robust = false;
};

struct DeltaEntry {
    int src = 0;
    int dst = 0;
    int sign = 0;  // +1 added, -1 removed

    friend auto operator<=>(const DeltaEntry&, const DeltaEntry&) = default;
};

struct PerturbationDelta {
    int y = 0;
    int k = 0;
    std::vector<DeltaEntry> entries;  // sorted by (src,dst)
    long long flip_count() const { return static_cast<long long>(entries.size()); }
};

using DeltasMap = std::map<std::pair<int, int>, PerturbationDelta>;

struct AttackResult {
    PerturbationDelta delta;
    Eigen::VectorXd margins;            // per source node, the minimum over
                                        // admissible configurations
    int iterations = 0;
    std::vector<double> objective;      // sum of values per iteration
};

struct CertifyResult {
    std::vector<MarginReport> reports;
    DeltasMap deltas;
    std::vector<int> predictions;
    double robust_ratio = 0.0;
    double mean_worst_margin = 0.0;
};

double margin(const std::vector<std::vector<int>>& rows, const Eigen::MatrixXd& h,
              double alpha, int t, int y, int k);

Eigen::VectorXd margin_vector(const std::vector<std::vector<int>>& rows,
                              const Eigen::MatrixXd& h, double alpha, int y, int k);

// Policy iteration over admissible perturbed graphs for one ordered class
// pair. The returned configuration is optimal simultaneously for every
// source node, so one run yields all N worst-case margins.
AttackResult worst_case_attack(const Graph& g, const Eigen::MatrixXd& h,
                               const AttackSpec& spec, double alpha, int y, int k,
                               const ImmuneMask* frozen = nullptr, int max_iters = 200);

CertifyResult certify(const Graph& g, const Eigen::MatrixXd& h, const AttackSpec& spec,
                      double alpha, const ImmuneMask* frozen = nullptr, int threads = 1);

}  // namespace advimmune
