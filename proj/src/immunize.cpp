#include "advimmune/immunize.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace advimmune {

void ImmuneMask::immunize(int i, int j, int round, double value) {
    if (i == j) throw ConfigError("cannot immunize a self-loop");
    if (i < 0 || i >= num_nodes || j < 0 || j >= num_nodes)
        throw ConfigError("immunized pair out of range");
    if (!zeros.insert({i, j}).second)
        throw ConfigError("pair immunized twice");
    ++incident_zeros[i];
    ++incident_zeros[j];
    trace.push_back({round, i, j, value});
}

std::vector<int> ImmuneMask::row_zeros(int i) const {
    std::vector<int> out;
    for (auto it = zeros.lower_bound({i, 0}); it != zeros.end() && it->first == i; ++it)
        out.push_back(it->second);
    return out;
}

void ImmuneMask::validate_budgets(long long global, const std::vector<int>& local) const {
    if (zero_count() > global)
        throw ConfigError("immune mask exceeds global budget");
    if (local.empty()) return;
    for (int i = 0; i < num_nodes; ++i)
        if (incident_zeros[i] > local[i])
            throw ConfigError("node " + std::to_string(i) + " exceeds its immune budget");
}

void save_mask(const ImmuneMask& mask, const std::string& path,
               const std::vector<long long>& original_ids,
               const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write mask: " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "round,src,dst,value\n";
    char buf[64];
    for (const Selection& s : mask.trace) {
        std::snprintf(buf, sizeof(buf), "%.17g", s.value);
        out << s.round << "," << original_ids[s.src] << "," << original_ids[s.dst] << ","
            << buf << "\n";
    }
}

ImmuneMask load_mask(const std::string& path, int num_nodes,
                     const std::vector<long long>& original_ids) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open mask: " + path);
    std::map<long long, int> to_internal;
    for (int i = 0; i < num_nodes; ++i) to_internal[original_ids[i]] = i;

    ImmuneMask mask(num_nodes);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#' || line.rfind("round,", 0) == 0) continue;
        std::istringstream ss(line);
        std::string tok;
        std::vector<std::string> cols;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
        if (cols.size() != 4)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected round,src,dst,value");
        int round = std::stoi(cols[0]);
        long long src = std::stoll(cols[1]);
        long long dst = std::stoll(cols[2]);
        double value = std::stod(cols[3]);
        auto si = to_internal.find(src), di = to_internal.find(dst);
        if (si == to_internal.end() || di == to_internal.end())
            throw ConfigError(path + ":" + std::to_string(lineno) + ": node id not in graph");
        mask.immunize(si->second, di->second, round, value);
    }
    return mask;
}

std::vector<std::vector<int>> modified_adjacency(const Graph& g,
                                                 const PerturbationDelta& delta,
                                                 const ImmuneMask& mask) {
    std::vector<std::vector<int>> rows = g.adj;
    for (const DeltaEntry& e : delta.entries) {
        if (mask.is_immunized(e.src, e.dst)) continue;
        auto& row = rows[e.src];
        auto it = std::lower_bound(row.begin(), row.end(), e.dst);
        bool present = it != row.end() && *it == e.dst;
        if (e.sign > 0) {
            if (present)
                throw ConfigError("delta adds entry (" + std::to_string(e.src) + "," +
                                  std::to_string(e.dst) + ") that already exists");
            row.insert(it, e.dst);
        } else {
            if (!present)
                throw ConfigError("delta removes missing entry (" + std::to_string(e.src) +
                                  "," + std::to_string(e.dst) + ")");
            row.erase(it);
        }
    }
    return rows;
}

namespace {

// deterministic group order: nodes grouped by (y_t, k_t), pairs ascending
std::map<std::pair<int, int>, std::vector<int>> group_by_pair(
    const std::vector<int>& predictions, const std::vector<int>& worst_classes) {
    std::map<std::pair<int, int>, std::vector<int>> groups;
    for (std::size_t t = 0; t < predictions.size(); ++t)
        groups[{predictions[t], worst_classes[t]}].push_back(static_cast<int>(t));
    return groups;
}

const PerturbationDelta& delta_for(const DeltasMap& deltas, int y, int k) {
    auto it = deltas.find({y, k});
    if (it == deltas.end())
        throw ConfigError("missing delta for class pair (" + std::to_string(y) + "," +
                          std::to_string(k) + ")");
    return it->second;
}

}  // namespace

std::vector<int> worst_case_classes(const Graph& g, const DeltasMap& deltas,
                                    const ImmuneMask& mask, const Eigen::MatrixXd& h,
                                    double alpha, const std::vector<int>& predictions,
                                    int threads) {
    int n = g.num_nodes;
    std::vector<std::pair<int, int>> pairs;
    for (const auto& [pair, delta] : deltas) pairs.push_back(pair);

    std::vector<Eigen::VectorXd> margins(pairs.size());
    parallel_for(static_cast<int>(pairs.size()), threads, [&](int idx) {
        auto [y, k] = pairs[idx];
        auto rows = modified_adjacency(g, delta_for(deltas, y, k), mask);
        margins[idx] = margin_vector(rows, h, alpha, y, k);
    });

    std::vector<int> kt(n, -1);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    for (std::size_t idx = 0; idx < pairs.size(); ++idx) {
        auto [y, k] = pairs[idx];
        for (int t = 0; t < n; ++t) {
            if (predictions[t] != y) continue;
            double m = margins[idx](t);
            if (m < best[t]) {
                best[t] = m;
                kt[t] = k;
            }
        }
    }
    for (int t = 0; t < n; ++t)
        if (kt[t] < 0)
            throw ConfigError("no delta covers node " + std::to_string(t) +
                              " (predicted class " + std::to_string(predictions[t]) + ")");
    return kt;
}

int worst_case_class(int t, const Graph& g, const DeltasMap& deltas,
                     const ImmuneMask& mask, const Eigen::MatrixXd& h, double alpha,
                     const std::vector<int>& predictions) {
    return worst_case_classes(g, deltas, mask, h, alpha, predictions)[t];
}

Eigen::MatrixXd MetaGradient::dense(int n) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    for (const auto& [ij, v] : values) out(ij.first, ij.second) = v;
    return out;
}

MetaGradient meta_gradient(const Graph& g, const DeltasMap& deltas, const ImmuneMask& mask,
                           const Eigen::MatrixXd& h, double alpha,
                           const std::vector<int>& predictions,
                           const std::vector<int>& worst_classes, int threads) {
    int n = g.num_nodes;
    auto groups = group_by_pair(predictions, worst_classes);

    std::vector<std::pair<std::pair<int, int>, std::vector<int>>> ordered(groups.begin(),
                                                                          groups.end());
    std::vector<std::map<std::pair<int, int>, double>> partial(ordered.size());

    parallel_for(static_cast<int>(ordered.size()), threads, [&](int gi) {
        const auto& [pair, members] = ordered[gi];
        auto [y, k] = pair;
        const PerturbationDelta& delta = delta_for(deltas, y, k);
        auto rows = modified_adjacency(g, delta, mask);

        Eigen::MatrixXd p = transition_from_rows(rows);
        Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - alpha * p;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
        Eigen::VectorXd hv = h.col(y) - h.col(k);
        Eigen::VectorXd v = solve_checked(lu, m, hv);
        Eigen::VectorXd pv = p * v;

        Eigen::MatrixXd mt = m.transpose();
        Eigen::PartialPivLU<Eigen::MatrixXd> lut(mt);
        Eigen::VectorXd ones_group = Eigen::VectorXd::Zero(n);
        for (int t : members) ones_group(t) = 1.0;
        Eigen::VectorXd w = solve_checked(lut, mt, ones_group);

        double scale = alpha * (1.0 - alpha);
        for (const DeltaEntry& e : delta.entries) {
            double deg = static_cast<double>(rows[e.src].size());
            if (deg <= 0) throw NumericalError("degenerate degree in gradient");
            double grad = e.sign * scale * w(e.src) * (v(e.dst) - pv(e.src)) / deg;
            partial[gi][{e.src, e.dst}] += grad;
        }
    });

    MetaGradient out;
    for (const auto& part : partial)
        for (const auto& [ij, val] : part) out.values[ij] += val;
    return out;
}

ImmuneMask greedy_immunize(const Graph& g, const Eigen::MatrixXd& h, const AttackSpec& spec,
                           double alpha, const GreedyOptions& opt, const DeltasMap& deltas,
                           const std::vector<int>& predictions) {
    spec.validate(g);
    int n = g.num_nodes;
    if (!opt.local_budget.empty() && static_cast<int>(opt.local_budget.size()) != n)
        throw ConfigError("immune local budget does not match graph size");

    std::vector<std::pair<int, int>> support;
    for (const auto& [pair, delta] : deltas)
        for (const DeltaEntry& e : delta.entries) support.emplace_back(e.src, e.dst);
    std::sort(support.begin(), support.end());
    support.erase(std::unique(support.begin(), support.end()), support.end());

    ImmuneMask mask(n);
    auto feasible = [&](int i, int j, int cost_i, int cost_j) {
        if (opt.local_budget.empty()) return true;
        return mask.incident_zeros[i] + cost_i <= opt.local_budget[i] &&
               mask.incident_zeros[j] + cost_j <= opt.local_budget[j];
    };

    int round = 0;
    while (mask.zero_count() < opt.global_budget) {
        int cost = opt.symmetric ? 2 : 1;
        if (opt.global_budget - mask.zero_count() < cost) break;

        std::vector<int> kt = worst_case_classes(g, deltas, mask, h, alpha, predictions,
                                                 opt.threads);
        MetaGradient grad = meta_gradient(g, deltas, mask, h, alpha, predictions, kt,
                                          opt.threads);

        bool found = false;
        std::pair<int, int> pick;
        double pick_value = 0;
        for (const auto& ij : support) {
            if (mask.is_immunized(ij.first, ij.second)) continue;
            auto it = grad.values.find(ij);
            double value = it == grad.values.end() ? 0.0 : -it->second;
            if (value <= 0) continue;
            bool mirror = opt.symmetric && !mask.is_immunized(ij.second, ij.first) &&
                          ij.first != ij.second;
            int per_end = (opt.symmetric && mirror) ? 2 : 1;
            if (!feasible(ij.first, ij.second, per_end, per_end)) continue;
            if (!found || value > pick_value) {
                found = true;
                pick = ij;
                pick_value = value;
            }
        }
        if (!found) {
            std::fprintf(stderr,
                         "warning: immunization stopped early after %lld of %lld pairs "
                         "(no remaining entry with positive value)\n",
                         static_cast<long long>(mask.zero_count()),
                         static_cast<long long>(opt.global_budget));
            break;
        }

        mask.immunize(pick.first, pick.second, round, pick_value);
        if (opt.symmetric && !mask.is_immunized(pick.second, pick.first) &&
            pick.first != pick.second)
            mask.immunize(pick.second, pick.first, round, pick_value);
        ++round;
    }
    return mask;
}

ImmuneMask greedy_immunize(const Graph& g, const Eigen::MatrixXd& h, const AttackSpec& spec,
                           double alpha, const GreedyOptions& opt) {
    CertifyResult clean = certify(g, h, spec, alpha, nullptr, opt.threads);
    return greedy_immunize(g, h, spec, alpha, opt, clean.deltas, clean.predictions);
}

EvalMetrics evaluate_immunization(const Graph& g, const Eigen::MatrixXd& h,
                                  const AttackSpec& spec, double alpha,
                                  const ImmuneMask& mask, int threads) {
    CertifyResult res = certify(g, h, spec, alpha, &mask, threads);
    EvalMetrics out;
    out.robust_ratio = res.robust_ratio;
    out.mean_worst_margin = res.mean_worst_margin;
    out.budget_used = mask.zero_count();
    out.scenario = spec.scenario;
    out.reports = std::move(res.reports);
    return out;
}

}  // namespace advimmune
