#pragma once

#include <Eigen/Dense>
#include <map>
#include <utility>
#include <vector>

#include "advimmune/certify.hpp"

namespace advimmune {

struct MetaGradient {
    // nonzero only on the union of delta supports
    std::map<std::pair<int, int>, double> values;
    Eigen::MatrixXd dense(int n) const;
};

struct GreedyOptions {
    long long global_budget = 0;         // C, counts directed zeros
    std::vector<int> local_budget;       // c_t; empty means unlimited
    bool symmetric = false;              // zero (i,j) and (j,i) together
    int threads = 1;
};

struct EvalMetrics {
    double robust_ratio = 0.0;
    double mean_worst_margin = 0.0;
    long long budget_used = 0;
    Scenario scenario = Scenario::RemoveOnly;
    std::vector<MarginReport> reports;
};

std::vector<std::vector<int>> modified_adjacency(const Graph& g,
                                                 const PerturbationDelta& delta,
                                                 const ImmuneMask& mask);

int worst_case_class(int t, const Graph& g, const DeltasMap& deltas,
                     const ImmuneMask& mask, const Eigen::MatrixXd& h, double alpha,
                     const std::vector<int>& predictions);

// One class-pair margin evaluation per delta; nodes then pick their argmin
// rival. Returns k_t for every node.
std::vector<int> worst_case_classes(const Graph& g, const DeltasMap& deltas,
                                    const ImmuneMask& mask, const Eigen::MatrixXd& h,
                                    double alpha, const std::vector<int>& predictions,
                                    int threads = 1);

// Gradient of the summed worst-case margins with respect to the mask,
// holding each node's rival class fixed. Grouped by class pair: one solve
// and one transpose solve per group.
MetaGradient meta_gradient(const Graph& g, const DeltasMap& deltas, const ImmuneMask& mask,
                           const Eigen::MatrixXd& h, double alpha,
                           const std::vector<int>& predictions,
                           const std::vector<int>& worst_classes, int threads = 1);

ImmuneMask greedy_immunize(const Graph& g, const Eigen::MatrixXd& h, const AttackSpec& spec,
                           double alpha, const GreedyOptions& opt, const DeltasMap& deltas,
                           const std::vector<int>& predictions);

// Convenience overload running the clean-graph certification first.
ImmuneMask greedy_immunize(const Graph& g, const Eigen::MatrixXd& h, const AttackSpec& spec,
                           double alpha, const GreedyOptions& opt);

EvalMetrics evaluate_immunization(const Graph& g, const Eigen::MatrixXd& h,
                                  const AttackSpec& spec, double alpha,
                                  const ImmuneMask& mask, int threads = 1);

}  // namespace advimmune
