/**
 * @file factor_sv.hpp
 * @brief Factor stochastic-volatility model with a Gibbs sampler.
 *
 * r_t = Lambda f_t + e_t, f_t ~ N(0, diag(exp(h_f,t))), e_t ~ N(0, diag(exp(h_e,t))),
 * and every log-variance follows a stationary AR(1)
 * h_t = mu + phi (h_{t-1} - mu) + sigma eta_t.
 *
 * Loadings are lower triangular with a positive diagonal and the factor
 * log-variance levels are fixed at zero, which pins down rotation and scale.
 * Returns are multiplied by 100 inside the sampler.
 */
#pragma once

#include "costaware/predictive.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace costaware {

struct SvPriors {
    double a0 = 20.0;            ///< (phi + 1) / 2 ~ Beta(a0, b0)
    double b0 = 1.5;
    double b_sigma = 1.0;        ///< sigma^2 ~ b_sigma * chi^2_1
    double mu_mean = 0.0;        ///< mu ~ N(mu_mean, mu_var) for idiosyncratic series
    double mu_var = 100.0;
    double tau_shape = 1.0;      ///< column precision of the loadings ~ Gamma(shape, rate)
    double tau_rate = 1.0;
};

struct SvMcmcConfig {
    int burn_in = 5000;
    int draws = 5000;  ///< iterations after burn-in; every thin-th one is kept
    int thin = 5;
    std::size_t min_window = 250;
    SvPriors priors;
};

struct SvSeriesParams {
    double mu = 0.0;
    double phi = 0.0;
    double sigma = 0.0;
};

/// One retained state of the chain.
struct SvDraw {
    Eigen::MatrixXd loadings;            ///< N x j
    std::vector<SvSeriesParams> params;  ///< N idiosyncratic series, then j factors
    Eigen::VectorXd last_state;          ///< log-variances at the last window day
};

struct SvPosterior {
    Eigen::Index n_assets = 0;
    Eigen::Index n_factors = 0;
    std::vector<SvDraw> draws;

    /// Posterior draws of phi for series i (factors follow the assets).
    std::vector<double> phi_draws(Eigen::Index i) const;
};

/// Lambda diag(exp(state_f)) Lambda' + diag(exp(state_e)), in the sampler's scaled units.
Eigen::MatrixXd sv_implied_covariance(const SvDraw& d, const Eigen::VectorXd& next_state);

/**
 * @brief Gibbs sampler that keeps its state between fits so a rolling window
 * can be refitted from the previous chain.
 */
class FactorSvSampler {
public:
    FactorSvSampler(Eigen::Index n_factors, SvMcmcConfig config, std::uint64_t seed);

    /// Cold start on a T x N window of returns.
    SvPosterior fit(const Eigen::MatrixXd& window);

    /**
     * @brief Warm start after the window moved forward by `shift` rows.
     *
     * The retained states are shifted, the new days are initialised at
     * their AR forecasts, then `burn_in` iterations are discarded before
     * `draws` iterations are sampled with the configured thinning.
     */
    SvPosterior refit(const Eigen::MatrixXd& window, Eigen::Index shift, int burn_in, int draws);

    bool initialised() const { return initialised_; }

private:
    void initialise(const Eigen::MatrixXd& window);
    void sweep(long iteration);
    SvPosterior run(int burn_in, int draws);

    Eigen::Index j_;
    SvMcmcConfig cfg_;
    Engine eng_;
    bool initialised_ = false;
    long iteration_ = 0;

    Eigen::MatrixXd y_;        ///< T x N scaled returns
    Eigen::MatrixXd h_;        ///< (T + 1) x (N + j) log-variances, row 0 is the initial state
    Eigen::MatrixXd f_;        ///< T x j factors
    Eigen::MatrixXd lambda_;   ///< N x j
    Eigen::VectorXd tau_;      ///< j loading precisions
    std::vector<SvSeriesParams> par_;
};

/// Fits from a cold start.
SvPosterior factor_sv_fit(const Eigen::MatrixXd& window, Eigen::Index n_factors, const SvMcmcConfig& config,
                          std::uint64_t seed);

/// One-step-ahead predictive draws (in return units).
PredictiveDraws factor_sv_predict(const SvPosterior& post, Eigen::Index j, std::uint64_t seed);

/// Log of the average over posterior draws of N(r; 0, Sigma(draw)), with
/// one propagated log-variance vector per posterior draw.
double factor_sv_log_score(const SvPosterior& post, const Eigen::VectorXd& r, std::uint64_t seed);

/// The ten-component normal mixture approximating the log chi-square(1) law.
struct LogChi2Mixture {
    static constexpr int kComponents = 10;
    static const double weight[kComponents];
    static const double mean[kComponents];
    static const double variance[kComponents];
};

}  // namespace costaware
