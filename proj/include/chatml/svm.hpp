#pragma once

// Soft-margin SVM dual solved by SMO with maximal-violating-pair working-set
// selection (second-order choice of the partner).

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace chatml {

double rbf_kernel(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b,
                  double gamma);

Eigen::MatrixXd rbf_kernel_matrix(const Eigen::MatrixXd& X, double gamma);

/// 1 / (d * mean per-feature population variance); 1 when that is zero.
double scale_gamma(const Eigen::MatrixXd& X);

struct SmoOptions {
    double C = 1.0;
    double tolerance = 1e-3;
    long max_iterations = 1000;
    /// Called with the multipliers after every update.
    std::function<void(const std::vector<double>&)> on_iteration;
};

struct SmoResult {
    std::vector<double> alpha;
    double bias = 0.0;  // decision = sum alpha_i y_i K(x_i, x) + bias
    long iterations = 0;
    bool converged = false;
};

/// y holds +1 / -1.
SmoResult solve_smo(const Eigen::MatrixXd& kernel, const std::vector<int>& y, const SmoOptions& options);

/// Sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij, recomputed from scratch.
double dual_objective(const Eigen::MatrixXd& kernel, const std::vector<int>& y, const std::vector<double>& alpha);

/// Largest KKT violation m(alpha) - M(alpha), recomputed from scratch; <= 0 means optimal.
double kkt_violation(const Eigen::MatrixXd& kernel, const std::vector<int>& y, const std::vector<double>& alpha, double C);

}  // namespace chatml
