/**
 * @file optimizer.hpp
 * @brief Mean-variance allocation under transaction costs.
 *
 * All allocations are fully invested: every returned weight vector sums to
 * one. Returns and covariances are per period; gamma is the risk aversion.
 */
#pragma once

#include <Eigen/Dense>

#include <vector>

namespace costaware {

enum class CostKind { None, L1, L2, QuadraticMatrix, VolProportional };

/**
 * @brief Cost of moving from pre-trade weights w_plus to w.
 *
 * - L1: beta * |w - w_plus|_1
 * - L2: beta / 2 * |w - w_plus|_2^2
 * - QuadraticMatrix: (w - w_plus)' B (w - w_plus)
 * - VolProportional: beta / 2 * (w - w_plus)' Sigma (w - w_plus)
 */
struct TxCostModel {
    CostKind kind = CostKind::None;
    double beta = 0.0;
    Eigen::MatrixXd b;  ///< Only used by QuadraticMatrix.

    static TxCostModel none() { return {}; }
    static TxCostModel l1(double beta) { return {CostKind::L1, beta, {}}; }
    static TxCostModel l2(double beta) { return {CostKind::L2, beta, {}}; }
    static TxCostModel quadratic(Eigen::MatrixXd b) { return {CostKind::QuadraticMatrix, 0.0, std::move(b)}; }
    static TxCostModel vol_proportional(double beta) { return {CostKind::VolProportional, beta, {}}; }

    /// @param sigma Required for VolProportional, ignored otherwise.
    double cost(const Eigen::VectorXd& w, const Eigen::VectorXd& w_plus, const Eigen::MatrixXd* sigma = nullptr) const;
    void validate(Eigen::Index n) const;
};

/// @brief Single-period allocation problem.
struct AllocationProblem {
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    double gamma = 4.0;
    Eigen::VectorXd omega_plus;
    TxCostModel cost;

    void validate() const;
};

/// @brief A(S) = S^-1 - S^-1 i i' S^-1 / (i' S^-1 i).
Eigen::MatrixXd a_matrix(const Eigen::MatrixXd& sigma);

/// @brief Global minimum-variance weights S^-1 i / (i' S^-1 i).
Eigen::VectorXd gmv_weights(const Eigen::MatrixXd& sigma);

/**
 * @brief Efficient portfolio (1/gamma) A(Sigma) mu + Sigma^-1 i / (i' Sigma^-1 i).
 * @throws LinAlgError when Sigma is singular.
 */
Eigen::VectorXd efficient_weights(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, double gamma);

/// @brief Closed-form optimum under quadratic costs: the efficient portfolio
/// for mu + beta * w_plus and Sigma + (beta / gamma) I.
Eigen::VectorXd solve_l2(const AllocationProblem& p);

/// @brief Optimum under cost (w - w_plus)' B (w - w_plus) from the bordered KKT system.
Eigen::VectorXd solve_quadratic_matrix(const AllocationProblem& p);

/// @brief Optimum under the Sigma-proportional quadratic cost.
Eigen::VectorXd solve_vol_proportional(const AllocationProblem& p);

struct L1Options {
    double tol = 1e-8;
    int max_iter = 50000;
    double ridge = 1e-10;
    int polish_every = 10;  ///< Attempt an exact active-set solve every k iterations.
};

/**
 * @brief Solution of the L1-cost problem with its optimality certificate.
 *
 * Stationarity: gamma Sigma w - mu + beta g - lambda i = 0 with g in the
 * subdifferential of |w - w_plus|_1.
 */
struct L1Solution {
    Eigen::VectorXd weights;
    Eigen::VectorXd subgradient;
    double lagrange_multiplier = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
    bool ridge_applied = false;
    bool polished = false;
};

/**
 * @brief Minimises (gamma/2) w'Sigma w - w'mu + beta |w - w_plus|_1 s.t. i'w = 1.
 *
 * Accelerated proximal gradient on the trade vector with step 1/(gamma
 * lambda_max). The prox operator is exact for the L1 norm restricted to the
 * zero-sum hyperplane: a soft threshold of v - theta i with theta chosen so the
 * result sums to zero. Iterates are periodically polished by solving the
 * equality-constrained system on the current sign pattern.
 *
 * @throws IterationError (carrying the best iterate) if max_iter is reached.
 */
L1Solution solve_l1(const AllocationProblem& p, const L1Options& opt = {});

/**
 * @brief Generic form min 1/2 w'Pw - q'w + kappa |w - w_plus|_1 s.t. i'w = 1.
 *
 * solve_l1 is the case P = gamma Sigma, q = mu, kappa = beta.
 */
L1Solution solve_l1_qp(const Eigen::MatrixXd& p, const Eigen::VectorXd& q, double kappa,
                       const Eigen::VectorXd& omega_plus, const L1Options& opt = {});

/// @brief Sigma + (beta/gamma)(g i' + i g'), whose GMV portfolio equals the L1 optimum when mu = 0.
Eigen::MatrixXd sigma_l1_equivalent(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& g, double beta, double gamma);

/// @brief Dispatches on the cost kind of the problem.
Eigen::VectorXd solve_allocation(const AllocationProblem& p, const L1Options& opt = {});

enum class GmvKind { Unconstrained, NoShort, GrossExposure };

struct GmvConstraint {
    GmvKind kind = GmvKind::Unconstrained;
    double theta = 1.0;  ///< Gross exposure bound |w|_1 <= theta.

    static GmvConstraint unconstrained() { return {}; }
    static GmvConstraint no_short() { return {GmvKind::NoShort, 1.0}; }
    static GmvConstraint gross_exposure(double theta) { return {GmvKind::GrossExposure, theta}; }
};

struct GmvSolution {
    Eigen::VectorXd weights;
    double budget_multiplier = 0.0;    ///< eta in Sigma w = eta i + ...
    double exposure_multiplier = 0.0;  ///< multiplier of the gross-exposure bound
    int iterations = 0;
};

struct GmvOptions {
    double tol = 1e-12;
    int max_iter = 200000;
};

/**
 * @brief Minimum-variance portfolio, optionally long-only or with a gross
 * exposure bound. Constrained cases use accelerated projected gradient.
 */
GmvSolution gmv(const Eigen::MatrixXd& sigma, const GmvConstraint& c = {}, const GmvOptions& opt = {});

/// @brief Euclidean projection onto the probability simplex.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v);

/// @brief Euclidean projection onto {w : i'w = 1, |w|_1 <= theta}.
/// @param tau_out Receives the multiplier of the norm constraint.
Eigen::VectorXd project_gross_exposure(const Eigen::VectorXd& v, double theta, double* tau_out = nullptr);

/**
 * @brief Repeated quadratic-cost rebalancing with fixed (mu, Sigma).
 * @return w_0, ..., w_T where w_{t+1} = solve_l2 with w_plus = w_t.
 */
std::vector<Eigen::VectorXd> long_run_iterate(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, double gamma,
                                              double beta, const Eigen::VectorXd& omega0, int periods);

/// @brief |(beta/gamma) A(Sigma + (beta/gamma) I)|_F.
double l2_contraction_norm(const Eigen::MatrixXd& sigma, double gamma, double beta);

/**
 * @brief Largest beta for which l2_contraction_norm stays below one.
 *
 * Bisection to relative tolerance rel_tol. Returns +infinity when the bound
 * holds for every beta up to cap; for N <= 2 this is always the case because
 * A has rank N - 1 and its scaled eigenvalues stay below one.
 */
double beta_star(const Eigen::MatrixXd& sigma, double gamma, double rel_tol = 1e-10, double cap = 1e12);

}  // namespace costaware
