#include "advimmune/certify.hpp"

#include <algorithm>
#include <numeric>

namespace advimmune {

namespace {

Eigen::VectorXd evaluate_rows(const std::vector<std::vector<int>>& rows,
                              const Eigen::VectorXd& h, double alpha) {
    int n = static_cast<int>(rows.size());
    Eigen::MatrixXd p = transition_from_rows(rows);
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - alpha * p;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    return solve_checked(lu, m, h);
}

double row_mean(const std::vector<int>& row, const Eigen::VectorXd& v) {
    double s = 0;
    for (int j : row) s += v(j);
    return s / static_cast<double>(row.size());
}

// Static description of what the attacker may do with node i's out-row.
// Pools are derived from the clean graph and the frozen mask once; they do
// not change across policy iterations.
struct RowProblem {
    std::vector<int> always_on;   // fixed edges plus frozen clean-fragile entries
    std::vector<int> pool_rem;    // clean fragile entries, may be switched off
    std::vector<int> pool_add;    // non-clean fragile entries (explicit mode)
    std::vector<int> blocked_add; // frozen non-edges (complement mode), sorted
    bool complement_add = false;
    int budget = 0;
};

RowProblem build_row_problem(const Graph& g, const AttackSpec& spec,
                             const ImmuneMask* frozen, int i) {
    RowProblem rp;
    rp.budget = spec.local_budget[i];
    const auto& clean = g.adj[i];
    const auto& fixed = spec.fixed_out[i];

    std::vector<int> frozen_cols;
    if (frozen) frozen_cols = frozen->row_zeros(i);
    auto is_frozen = [&](int j) {
        return std::binary_search(frozen_cols.begin(), frozen_cols.end(), j);
    };

    std::vector<int> cf;  // clean fragile
    if (spec.fragile_is_complement) {
        std::set_difference(clean.begin(), clean.end(), fixed.begin(), fixed.end(),
                            std::back_inserter(cf));
        rp.complement_add = true;
    } else {
        const auto& fr = spec.fragile_out[i];
        std::set_intersection(fr.begin(), fr.end(), clean.begin(), clean.end(),
                              std::back_inserter(cf));
        std::vector<int> na;
        std::set_difference(fr.begin(), fr.end(), clean.begin(), clean.end(),
                            std::back_inserter(na));
        for (int j : na)
            if (!is_frozen(j)) rp.pool_add.push_back(j);
    }

    for (int j : cf)
        if (!is_frozen(j)) rp.pool_rem.push_back(j);
    std::set_difference(clean.begin(), clean.end(), rp.pool_rem.begin(), rp.pool_rem.end(),
                        std::back_inserter(rp.always_on));

    if (rp.complement_add) {
        for (int j : frozen_cols)
            if (!std::binary_search(clean.begin(), clean.end(), j) && j != i)
                rp.blocked_add.push_back(j);
    }
    return rp;
}

// Exact minimization of the post-perturbation neighbor mean for one row:
// choose r removals (largest values first) and a additions (smallest values
// first) with a + r <= budget. Prefix sums make each count pair O(1); ties
// resolve toward fewer flips, so an all-equal value vector keeps the row.
std::vector<int> best_row(const RowProblem& rp, const Eigen::VectorXd& v,
                          const std::vector<int>& order_asc, int self,
                          const std::vector<int>& clean) {
    std::vector<int> rem = rp.pool_rem;
    std::sort(rem.begin(), rem.end(), [&](int a, int b) {
        if (v(a) != v(b)) return v(a) > v(b);
        return a < b;
    });

    std::vector<int> add;
    if (rp.complement_add) {
        for (int j : order_asc) {
            if (static_cast<int>(add.size()) >= rp.budget) break;
            if (j == self) continue;
            if (std::binary_search(clean.begin(), clean.end(), j)) continue;
            if (std::binary_search(rp.blocked_add.begin(), rp.blocked_add.end(), j)) continue;
            add.push_back(j);
        }
    } else {
        add = rp.pool_add;
        std::sort(add.begin(), add.end(), [&](int a, int b) {
            if (v(a) != v(b)) return v(a) < v(b);
            return a < b;
        });
        if (static_cast<int>(add.size()) > rp.budget) add.resize(rp.budget);
    }

    double base_num = 0;
    for (int j : rp.always_on) base_num += v(j);
    for (int j : rem) base_num += v(j);
    int base_den = static_cast<int>(rp.always_on.size() + rem.size());

    std::vector<double> rem_prefix(rem.size() + 1, 0.0);
    for (std::size_t r = 0; r < rem.size(); ++r) rem_prefix[r + 1] = rem_prefix[r] + v(rem[r]);
    std::vector<double> add_prefix(add.size() + 1, 0.0);
    for (std::size_t a = 0; a < add.size(); ++a) add_prefix[a + 1] = add_prefix[a] + v(add[a]);

    int best_a = 0, best_r = 0;
    double best_mean = base_num / static_cast<double>(base_den);
    for (int a = 0; a <= static_cast<int>(add.size()); ++a) {
        int rmax = std::min(rp.budget - a, static_cast<int>(rem.size()));
        if (rmax < 0) break;
        for (int r = 0; r <= rmax; ++r) {
            int den = base_den - r + a;
            if (den <= 0) continue;
            double mean = (base_num - rem_prefix[r] + add_prefix[a]) / den;
            if (mean < best_mean) {
                best_mean = mean;
                best_a = a;
                best_r = r;
            }
        }
    }

    std::vector<int> row = rp.always_on;
    for (std::size_t r = best_r; r < rem.size(); ++r) row.push_back(rem[r]);
    for (int a = 0; a < best_a; ++a) row.push_back(add[a]);
    std::sort(row.begin(), row.end());
    return row;
}

}  // namespace

double margin(const std::vector<std::vector<int>>& rows, const Eigen::MatrixXd& h,
              double alpha, int t, int y, int k) {
    if (y == k) return 0.0;
    Eigen::VectorXd hv = h.col(y) - h.col(k);
    Eigen::VectorXd v = evaluate_rows(rows, hv, alpha);
    return (1.0 - alpha) * v(t);
}

Eigen::VectorXd margin_vector(const std::vector<std::vector<int>>& rows,
                              const Eigen::MatrixXd& h, double alpha, int y, int k) {
    Eigen::VectorXd hv = h.col(y) - h.col(k);
    Eigen::VectorXd v = evaluate_rows(rows, hv, alpha);
    return (1.0 - alpha) * v;
}

AttackResult worst_case_attack(const Graph& g, const Eigen::MatrixXd& h,
                               const AttackSpec& spec, double alpha, int y, int k,
                               const ImmuneMask* frozen, int max_iters) {
    spec.validate(g);
    if (y == k) throw ConfigError("class pair requires distinct classes");
    if (y < 0 || y >= h.cols() || k < 0 || k >= h.cols())
        throw ConfigError("class id out of range");

    int n = g.num_nodes;
    Eigen::VectorXd hv = h.col(y) - h.col(k);

    std::vector<RowProblem> problems;
    problems.reserve(n);
    for (int i = 0; i < n; ++i) problems.push_back(build_row_problem(g, spec, frozen, i));

    std::vector<std::vector<int>> rows = g.adj;
    // frozen entries never leave their clean state, but a row that starts
    // inside the admissible set stays comparable across iterations
    AttackResult out;

    Eigen::VectorXd v = evaluate_rows(rows, hv, alpha);
    out.objective.push_back(v.sum());

    std::vector<int> order_asc(n);
    for (int iter = 0; iter < max_iters; ++iter) {
        std::iota(order_asc.begin(), order_asc.end(), 0);
        std::sort(order_asc.begin(), order_asc.end(), [&](int a, int b) {
            if (v(a) != v(b)) return v(a) < v(b);
            return a < b;
        });

        bool changed = false;
        for (int i = 0; i < n; ++i) {
            std::vector<int> cand = best_row(problems[i], v, order_asc, i, g.adj[i]);
            if (cand == rows[i]) continue;
            if (row_mean(cand, v) < row_mean(rows[i], v)) {
                rows[i] = std::move(cand);
                changed = true;
            }
        }
        out.iterations = iter + 1;
        if (!changed) break;

        v = evaluate_rows(rows, hv, alpha);
        out.objective.push_back(v.sum());

        if (iter == max_iters - 1) {
            long long flips = 0;
            for (int i = 0; i < n; ++i) {
                std::vector<int> diff;
                std::set_symmetric_difference(rows[i].begin(), rows[i].end(),
                                              g.adj[i].begin(), g.adj[i].end(),
                                              std::back_inserter(diff));
                flips += static_cast<long long>(diff.size());
            }
            throw NumericalError("policy iteration did not settle after " +
                                 std::to_string(max_iters) + " iterations (pair " +
                                 std::to_string(y) + "," + std::to_string(k) +
                                 ", last configuration has " + std::to_string(flips) +
                                 " flips)");
        }
    }

    out.margins = (1.0 - alpha) * v;

    for (int i = 0; i < n; ++i) {
        std::vector<std::pair<int, int>> ent;  // (col, sign)
        std::vector<int> added, removed;
        std::set_difference(rows[i].begin(), rows[i].end(), g.adj[i].begin(), g.adj[i].end(),
                            std::back_inserter(added));
        std::set_difference(g.adj[i].begin(), g.adj[i].end(), rows[i].begin(), rows[i].end(),
                            std::back_inserter(removed));
        if (static_cast<int>(added.size() + removed.size()) > spec.local_budget[i])
            throw NumericalError("internal error: node " + std::to_string(i) +
                                 " exceeded its local budget");
        for (int j : added) ent.emplace_back(j, +1);
        for (int j : removed) ent.emplace_back(j, -1);
        std::sort(ent.begin(), ent.end());
        for (auto [j, s] : ent) out.delta.entries.push_back({i, j, s});
    }
    out.delta.y = y;
    out.delta.k = k;
    return out;
}

CertifyResult certify(const Graph& g, const Eigen::MatrixXd& h, const AttackSpec& spec,
                      double alpha, const ImmuneMask* frozen, int threads) {
    spec.validate(g);
    int n = g.num_nodes;
    int num_classes = static_cast<int>(h.cols());
    if (num_classes < 2) throw ConfigError("need at least 2 classes of logits");
    if (h.rows() != n) throw ConfigError("logits shape does not match graph");

    CertifyResult out;
    {
        Eigen::MatrixXd p = transition_matrix(g);
        Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - alpha * p;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
        Eigen::MatrixXd hdiff = (1.0 - alpha) * lu.solve(h);
        out.predictions = predict(hdiff);
    }

    std::vector<int> present = out.predictions;
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());

    std::vector<std::pair<int, int>> pairs;
    for (int y : present)
        for (int k = 0; k < num_classes; ++k)
            if (k != y) pairs.emplace_back(y, k);

    std::vector<AttackResult> results(pairs.size());
    parallel_for(static_cast<int>(pairs.size()), threads, [&](int idx) {
        auto [y, k] = pairs[idx];
        results[idx] = worst_case_attack(g, h, spec, alpha, y, k, frozen);
    });

    for (std::size_t idx = 0; idx < pairs.size(); ++idx) {
        if (results[idx].delta.flip_count() > spec.global_budget)
            throw ConfigError("worst-case perturbation needs " +
                              std::to_string(results[idx].delta.flip_count()) +
                              " flips but the global budget is " +
                              std::to_string(spec.global_budget) +
                              "; budget-constrained attacks are unsupported");
        out.deltas[pairs[idx]] = results[idx].delta;
    }

    out.reports.resize(n);
    int robust_count = 0;
    double margin_sum = 0;
    for (int t = 0; t < n; ++t) {
        int y = out.predictions[t];
        MarginReport rep;
        rep.node = t;
        rep.label_class = y;
        bool first = true;
        for (std::size_t idx = 0; idx < pairs.size(); ++idx) {
            if (pairs[idx].first != y) continue;
            double m = results[idx].margins(t);
            if (first || m < rep.worst_margin) {
                rep.worst_margin = m;
                rep.worst_class = pairs[idx].second;
                first = false;
            }
        }
        rep.robust = rep.worst_margin > 0;
        out.reports[t] = rep;
        robust_count += rep.robust ? 1 : 0;
        margin_sum += rep.worst_margin;
    }
    out.robust_ratio = static_cast<double>(robust_count) / n;
    out.mean_worst_margin = margin_sum / n;
    return out;
}

}  // namespace advimmune
