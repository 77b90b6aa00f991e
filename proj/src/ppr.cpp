#include "advimmune/ppr.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace advimmune {

Eigen::MatrixXd transition_from_rows(const std::vector<std::vector<int>>& rows) {
    int n = static_cast<int>(rows.size());
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        if (rows[i].empty())
            throw ConfigError("node " + std::to_string(i) + " has out-degree 0");
        double w = 1.0 / static_cast<double>(rows[i].size());
        for (int j : rows[i]) p(i, j) = w;
    }
    return p;
}

Eigen::MatrixXd transition_matrix(const Graph& g) {
    return transition_from_rows(g.adj);
}

namespace {

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("alpha must lie in (0,1)");
}

}  // namespace

Eigen::VectorXd solve_checked(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu,
                              const Eigen::MatrixXd& m, const Eigen::VectorXd& b,
                              double tol) {
    Eigen::VectorXd x = lu.solve(b);
    double scale = std::max(1.0, b.lpNorm<Eigen::Infinity>());
    for (int attempt = 0; attempt < 2; ++attempt) {
        Eigen::VectorXd r = b - m * x;
        double res = r.lpNorm<Eigen::Infinity>();
        if (res <= tol * scale) return x;
        x += lu.solve(r);
    }
    Eigen::VectorXd r = b - m * x;
    double res = r.lpNorm<Eigen::Infinity>();
    if (res <= tol * scale) return x;
    throw NumericalError("linear solve residual " + std::to_string(res) + " exceeds tolerance");
}

Eigen::VectorXd ppr_row(const Graph& g, double alpha, int t) {
    check_alpha(alpha);
    if (t < 0 || t >= g.num_nodes) throw ConfigError("source node out of range");
    Eigen::MatrixXd p = transition_matrix(g);
    int n = g.num_nodes;
    // x^T (I - aP) = (1-a) e_t^T  solved through the transpose
    Eigen::MatrixXd mt = Eigen::MatrixXd::Identity(n, n) - alpha * p.transpose();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(t) = 1.0 - alpha;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(mt);
    return solve_checked(lu, mt, b);
}

PPRMatrix ppr_full(const Graph& g, double alpha) {
    check_alpha(alpha);
    if (g.num_nodes > kMaxDenseNodes)
        throw ConfigError("dense PPR capped at " + std::to_string(kMaxDenseNodes) +
                          " nodes; got " + std::to_string(g.num_nodes));
    int n = g.num_nodes;
    Eigen::MatrixXd p = transition_matrix(g);
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - alpha * p;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    PPRMatrix out;
    out.alpha = alpha;
    out.pi = (1.0 - alpha) * lu.solve(Eigen::MatrixXd::Identity(n, n));
    for (int t = 0; t < n; ++t) {
        double s = out.pi.row(t).sum();
        if (std::abs(s - 1.0) > 1e-8)
            throw NumericalError("PPR row " + std::to_string(t) + " sums to " +
                                 std::to_string(s));
    }
    return out;
}

Eigen::MatrixXd diffuse(const PPRMatrix& pi, const Eigen::MatrixXd& raw) {
    if (pi.pi.cols() != raw.rows())
        throw ConfigError("logits shape does not match PPR matrix");
    return pi.pi * raw;
}

std::vector<int> predict(const Eigen::MatrixXd& diffused) {
    std::vector<int> out(diffused.rows());
    for (int i = 0; i < diffused.rows(); ++i) {
        int best = 0;
        for (int k = 1; k < diffused.cols(); ++k)
            if (diffused(i, k) > diffused(i, best)) best = k;
        out[i] = best;
    }
    return out;
}

namespace {

constexpr std::uint32_t kCacheMagic = 0x52505041;  // "APPR"

}  // namespace

void save_ppr_cache(const PPRMatrix& pi, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write PPR cache: " + path);
    std::uint32_t magic = kCacheMagic;
    std::uint32_t n = static_cast<std::uint32_t>(pi.pi.rows());
    double alpha = pi.alpha;
    out.write(reinterpret_cast<const char*>(&magic), 4);
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&alpha), 8);
    for (int i = 0; i < pi.pi.rows(); ++i)
        for (int j = 0; j < pi.pi.cols(); ++j) {
            double v = pi.pi(i, j);
            out.write(reinterpret_cast<const char*>(&v), 8);
        }
    if (!out) throw ConfigError("short write to PPR cache: " + path);
}

PPRMatrix load_ppr_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open PPR cache: " + path);
    std::uint32_t magic = 0, n = 0;
    double alpha = 0;
    in.read(reinterpret_cast<char*>(&magic), 4);
    in.read(reinterpret_cast<char*>(&n), 4);
    in.read(reinterpret_cast<char*>(&alpha), 8);
    if (!in || magic != kCacheMagic)
        throw ConfigError("not a PPR cache file: " + path);
    PPRMatrix out;
    out.alpha = alpha;
    out.pi.resize(n, n);
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = 0; j < n; ++j) {
            double v;
            in.read(reinterpret_cast<char*>(&v), 8);
            if (!in) throw ConfigError("truncated PPR cache: " + path);
            out.pi(i, j) = v;
        }
    return out;
}

}  // namespace advimmune
