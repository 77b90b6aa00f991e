#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "advimmune/certify.hpp"
#include "advimmune/graph.hpp"

namespace advimmune {

struct TrainConfig {
    double learning_rate = 0.1;
    int epochs = 500;
    double l2 = 1e-4;
    double train_fraction = 0.1;
    double val_fraction = 0.1;
    std::uint64_t seed = 0;
};

struct Splits {
    std::vector<char> train, val, test;
};

struct TrainResult {
    Eigen::MatrixXd h;  // XW + b for every node
    Eigen::MatrixXd w;
    Eigen::VectorXd b;
    std::vector<double> loss_curve;
};

Eigen::MatrixXd load_logits(const std::string& path, int num_nodes);
void save_logits(const Eigen::MatrixXd& h, const std::string& path,
                 const std::string& header_comment);

// Stratified per class so small graphs keep every class in the train set.
Splits make_splits(const std::vector<int>& labels, const TrainConfig& cfg);

void save_splits(const Splits& s, const std::string& path,
                 const std::vector<long long>& original_ids,
                 const std::string& header_comment);

// One linear layer trained with softmax cross-entropy on the train mask,
// full-batch gradient descent with backtracking step halving.
TrainResult train_linear(const Eigen::MatrixXd& features, const std::vector<int>& labels,
                         const std::vector<char>& train_mask, int num_classes,
                         const TrainConfig& cfg);

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels,
                const std::vector<char>& mask);

enum class AttackEvalMode { PerNodePair, GlobalWorstPair };

// Accuracy with every node classified on its own worst-case perturbed
// graph (or the single globally worst pair), mask protection applied.
double accuracy_under_attack(const Graph& g, const Eigen::MatrixXd& h,
                             const AttackSpec& spec, double alpha, const DeltasMap& deltas,
                             const std::vector<MarginReport>& reports,
                             const ImmuneMask* mask, const std::vector<char>& eval_mask,
                             AttackEvalMode mode = AttackEvalMode::PerNodePair);

}  // namespace advimmune
