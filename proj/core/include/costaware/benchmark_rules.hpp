#pragma once

#include <Eigen/Dense>

#include <optional>

namespace costaware {

/// Window moments used by the estimated-mean benchmark rules.
struct SampleMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov_mle;       ///< 1/T normalisation
    Eigen::MatrixXd cov_unbiased;  ///< 1/(T-1) normalisation
    Eigen::Index t = 0;
    static SampleMoments of(const Eigen::MatrixXd& window);
};

/// Squared slope of the sample minimum-variance frontier asymptote, mu' A(Sigma) mu.
double asymptote_slope_sq(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma);

/// Bias-adjusted slope estimate; strictly positive for T > N + 1.
double adjusted_slope_sq(double psi2_hat, Eigen::Index n, Eigen::Index t);

/// Combination of 1/N and the plug-in efficient portfolio. `delta` overrides the estimated mixing weight.
Eigen::VectorXd tu_zhou_weights(const Eigen::MatrixXd& window, double gamma, std::optional<double> delta = {});

/// Mixing weight of the efficient portfolio in tu_zhou_weights, clipped to [0, 1].
double tu_zhou_delta(const SampleMoments& m, double gamma);

/// Minimum-variance portfolio plus a shrunk multiple of the plug-in mean-variance tilt.
Eigen::VectorXd kan_zhou_weights(const Eigen::MatrixXd& window, double gamma);

/// Efficient weights at the Bayes-Stein mean with the matching predictive covariance.
Eigen::VectorXd jorion_weights(const Eigen::MatrixXd& window, double gamma);

}  // namespace costaware
