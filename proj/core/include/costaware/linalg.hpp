#pragma once

#include <Eigen/Dense>

#include <span>

namespace costaware {

// Reciprocal condition threshold below which a system is treated as singular.
inline constexpr double kSingularRcond = 1e-14;

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m);

// Ratio of extreme eigenvalues of a symmetric matrix; +inf when the smallest
// eigenvalue is not positive.
double condition_number(const Eigen::MatrixXd& sym);

// Eigenvalue clipping at rel_eps * lambda_max. Returns the nearest matrix in
// Frobenius norm whose spectrum is bounded below by that floor.
Eigen::MatrixXd psd_repair(const Eigen::MatrixXd& sym, double rel_eps = 1e-8);

// Solves a*x = b with partial-pivot LU; throws LinAlgError when a is
// numerically singular. `what` names the matrix in the message.
Eigen::MatrixXd solve_checked(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what);

double largest_eigenvalue(const Eigen::MatrixXd& sym);

// Pairwise (cascade) summation.
double pairwise_sum(std::span<const double> x);

double log_sum_exp(std::span<const double> x);

// Log density of N(0, sigma) at x, via Cholesky. Throws PsdError if sigma is
// not positive definite.
double mvn_log_density(const Eigen::VectorXd& x, const Eigen::MatrixXd& sigma);

}  // namespace costaware
