#pragma once

#include "costaware/optimizer.hpp"

#include <Eigen/Dense>

namespace costaware {

// Power utility of terminal wealth, shifted so that u(1) = 0:
// (W^(1-gamma) - 1) / (1 - gamma), and log W at gamma = 1.
// Returns -inf for W <= 0.
double power_utility(double wealth, double gamma);

struct EuOptions {
    double tol = 1e-8;      // stationarity tolerance in reduced coordinates
    int max_iter = 500;
    bool second_start = true;  // also start from the minimum-variance portfolio of the draws
    L1Options l1;
};

struct EuSolution {
    Eigen::VectorXd weights;
    double objective = 0.0;
    double residual = 0.0;
    int iterations = 0;
};

// Monte Carlo expected utility (1/J) sum_j u(1 + w'r_j - nu(w)) for draws
// stored as rows. `sigma` is only read by the volatility-proportional cost.
double expected_utility(const Eigen::MatrixXd& draws, const Eigen::VectorXd& w, double gamma,
                        const Eigen::VectorXd& omega_plus, const TxCostModel& cost,
                        const Eigen::MatrixXd* sigma = nullptr);

// Fully invested maximiser of expected_utility. Smooth costs use damped
// Newton steps on the budget plane; the L1 cost uses successive quadratic
// models of the utility solved exactly by solve_l1_qp, with backtracking.
// Throws InfeasibleError when every start ruins wealth on some draw, and
// IterationError when max_iter is reached.
EuSolution expected_utility_weights(const Eigen::MatrixXd& draws, double gamma, const Eigen::VectorXd& omega_plus,
                                    const TxCostModel& cost, const EuOptions& opt = {},
                                    const Eigen::MatrixXd* sigma = nullptr);

}  // namespace costaware
