#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "advimmune/baselines.hpp"
#include "advimmune/immunize.hpp"
#include "advimmune/logits.hpp"

namespace advimmune {

// Thin wrapper over the resolved JSON config. Defaults are materialized into
// the JSON itself so the hash covers effective values.
struct ExperimentConfig {
    nlohmann::json j;

    static ExperimentConfig from_file(const std::string& path);
    static ExperimentConfig from_json(const nlohmann::json& j);

    void resolve_defaults();
    std::string hash_hex() const;
    std::string header_comment() const;

    std::string str(const std::string& key, const std::string& fallback = "") const;
    double num(const std::string& key, double fallback) const;
    long long integer(const std::string& key, long long fallback) const;
    bool flag(const std::string& key, bool fallback) const;
    bool has(const std::string& key) const { return j.contains(key); }
};

struct Dataset {
    Graph g;
    Eigen::MatrixXd h;
    Splits splits;
    bool has_splits = false;
};

Dataset load_dataset(const ExperimentConfig& cfg, bool need_logits = true);

AttackSpec attack_spec_from_config(const ExperimentConfig& cfg, const Graph& g);

// Resolves the immune budget C: absolute count, or fraction of undirected
// clean edges (remove-only) / node pairs (remove-add), floored.
long long resolve_immune_budget(const ExperimentConfig& cfg, const Graph& g,
                                Scenario scenario);
long long immune_budget_from_fraction(double fraction, const Graph& g, Scenario scenario);
std::vector<int> resolve_immune_local_budget(const ExperimentConfig& cfg, const Graph& g);

int cmd_certify(const ExperimentConfig& cfg);
int cmd_immunize(const ExperimentConfig& cfg);
int cmd_baseline(const ExperimentConfig& cfg);
int cmd_analyze(const ExperimentConfig& cfg);
int cmd_report(const ExperimentConfig& cfg);
int cmd_synth(const ExperimentConfig& cfg);
int cmd_train(const ExperimentConfig& cfg);

int run_cli(int argc, char** argv);

}  // namespace advimmune
