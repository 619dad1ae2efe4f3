#pragma once

#include "costaware/covariance.hpp"
#include "costaware/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace costaware {

enum class ModelTag { WishartBrk, FactorSv, GaussianSample, GaussianLw, Mixture };

std::string to_string(ModelTag m);
ModelTag model_from_string(const std::string& s);

// J x N matrix of simulated next-day returns.
struct PredictiveDraws {
    Eigen::MatrixXd draws;
    ModelTag model = ModelTag::GaussianSample;
    std::string date;
    bool truncated = false;  // some draws were clipped to stay above -1

    Eigen::Index n_draws() const { return draws.rows(); }
    Eigen::Index n_assets() const { return draws.cols(); }
    void validate() const;
};

// Draws are generated in chunks of this many rows, each from its own RNG
// stream, so results do not depend on how the work is scheduled.
inline constexpr Eigen::Index kDrawChunk = 256;

// Inverse-Wishart parameters. `scale` is the inverse-Wishart scale matrix,
// kappa times the smoothed covariance estimate, so E[Sigma] = scale / (kappa - N - 1).
struct WishartParams {
    double kappa = 0.0;
    Eigen::MatrixXd scale;

    static WishartParams from_estimate(double kappa, const Eigen::MatrixXd& sigma_hat);
    void validate() const;
};

// One draw from IW(dof, scale) by the Bartlett decomposition.
Eigen::MatrixXd sample_inverse_wishart(Engine& eng, double dof, const Eigen::MatrixXd& scale);

// Log density of the multivariate t with location 0.
double multivariate_t_log_density(const Eigen::VectorXd& x, double dof, const Eigen::MatrixXd& scale);

// Log density of r under r | Sigma ~ N(0, Sigma), Sigma ~ IW(kappa, kappa sigma_hat):
// multivariate t with dof kappa - N + 1 and scale kappa sigma_hat / (kappa - N + 1).
double wishart_log_density(const Eigen::VectorXd& r, const Eigen::MatrixXd& sigma_hat, double kappa);

struct KappaConfig {
    double prior_rate = 0.01;  // kappa - (N - 1) ~ Exponential(prior_rate)
    int burn_in = 1000;
    int draws = 1000;
    double step = 0.5;   // random-walk step on log(kappa - N + 1)
    double initial = 0.0;  // starting kappa; N + 10 when not positive
    std::size_t min_days = 30;
};

struct KappaPosterior {
    std::vector<double> draws;
    double acceptance_rate = 0.0;

    double mean() const;
};

// Random-walk Metropolis for kappa given paired (return, covariance estimate)
// days. `sigma_hats[t]` is the estimate available before `returns.row(t)` is
// realised. An empty history samples the prior. `dates` (optional) names the
// day in error messages.
KappaPosterior estimate_kappa(std::span<const Eigen::MatrixXd> sigma_hats, const Eigen::MatrixXd& returns,
                              const KappaConfig& config, std::uint64_t seed,
                              std::span<const std::string> dates = {});

// J iid draws from N(0, sigma_hat). Throws PsdError when sigma_hat is not
// positive definite.
PredictiveDraws gaussian_predict(const CovarianceEstimate& sigma_hat, Eigen::Index j, std::uint64_t seed);

// Draws from the inverse-Wishart mixture of normals, one kappa picked
// uniformly from `kappa_draws` per return draw.
PredictiveDraws wishart_brk_predict(const CovarianceEstimate& sigma_hat, std::span<const double> kappa_draws,
                                    Eigen::Index j, std::uint64_t seed);

double gaussian_log_score(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& r);

// Log of the average over kappa draws of the exact multivariate t density.
double wishart_log_score(const Eigen::MatrixXd& sigma_hat, std::span<const double> kappa_draws,
                         const Eigen::VectorXd& r);

// CSV with header "draw_id,asset,value", one row per draw and asset.
void write_draws(const PredictiveDraws& d, std::span<const std::string> assets, std::ostream& out,
                 const std::string& header_comment = "");
PredictiveDraws read_draws(std::istream& in, std::vector<std::string>* assets = nullptr);

}  // namespace costaware
