#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "advimmune/graph.hpp"

namespace advimmune {

inline constexpr int kMaxDenseNodes = 20000;
inline constexpr double kSolveTol = 1e-10;

struct PPRMatrix {
    double alpha = 0.85;
    Eigen::MatrixXd pi;
};

Eigen::MatrixXd transition_matrix(const Graph& g);
Eigen::MatrixXd transition_from_rows(const std::vector<std::vector<int>>& rows);

Eigen::VectorXd ppr_row(const Graph& g, double alpha, int t);
PPRMatrix ppr_full(const Graph& g, double alpha);

Eigen::MatrixXd diffuse(const PPRMatrix& pi, const Eigen::MatrixXd& raw);
std::vector<int> predict(const Eigen::MatrixXd& diffused);

void save_ppr_cache(const PPRMatrix& pi, const std::string& path);
PPRMatrix load_ppr_cache(const std::string& path);

// Solve M x = b for one right-hand side with residual checking and one
// refinement step. Throws NumericalError when the residual stays above tol.
Eigen::VectorXd solve_checked(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu,
                              const Eigen::MatrixXd& m, const Eigen::VectorXd& b,
                              double tol = kSolveTol);

}  // namespace advimmune
