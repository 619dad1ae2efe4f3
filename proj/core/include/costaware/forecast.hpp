#pragma once

#include "costaware/covariance.hpp"
#include "costaware/factor_sv.hpp"
#include "costaware/market_data.hpp"
#include "costaware/pooling.hpp"
#include "costaware/predictive.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace costaware {

struct ForecastConfig {
    Eigen::Index estimation_window = 500;
    Eigen::Index pooling_window = 250;
    KappaConfig kappa;
    Eigen::Index kappa_window = 500;  // (estimate, next return) pairs used for kappa
    Eigen::Index kappa_refit_every = 21;
    Eigen::Index sv_factors = 1;
    SvMcmcConfig sv;
    int sv_warm_burn_in = 100;
    int sv_warm_draws = 500;
    Eigen::Index sv_refit_every = 1;
    std::vector<ModelTag> mixture_models{ModelTag::WishartBrk, ModelTag::FactorSv, ModelTag::GaussianLw,
                                         ModelTag::GaussianSample};
    std::uint64_t seed = 1;

    void validate() const;
};

/// Everything a forecaster may read. `brk[s]` is the smoothed realised estimate built from day s.
struct ForecastInputs {
    const ReturnPanel* panel = nullptr;
    const std::vector<CovarianceEstimate>* brk = nullptr;
};

/// One-step-ahead predictive distribution for a single model.
///
/// `prepare(t)` builds the forecast of row t of the panel from rows before t.
/// Days must be visited in increasing order.
class Forecaster {
public:
    virtual ~Forecaster() = default;
    virtual ModelTag model() const = 0;
    virtual void prepare(Eigen::Index t) = 0;
    virtual PredictiveDraws draws(Eigen::Index j, std::uint64_t seed) const = 0;
    virtual double log_score(const Eigen::VectorXd& r) const = 0;
};

std::unique_ptr<Forecaster> make_forecaster(ModelTag model, const ForecastInputs& in, const ForecastConfig& cfg);

/// Optimal pool of component forecasters, scored on every day from the first prepared one.
///
/// Components are not owned and must be prepared for day t before `prepare(t)`;
/// `record(t)` appends the scores of row t and must follow `prepare(t)`.
class MixtureForecaster final : public Forecaster {
public:
    MixtureForecaster(std::vector<const Forecaster*> components, const ForecastInputs& in, const ForecastConfig& cfg);
    ModelTag model() const override { return ModelTag::Mixture; }
    void prepare(Eigen::Index t) override;
    void record(Eigen::Index t);
    PredictiveDraws draws(Eigen::Index j, std::uint64_t seed) const override;
    double log_score(const Eigen::VectorXd& r) const override;
    const Eigen::VectorXd& weights() const { return c_; }
    const ScorePanel& scores() const { return scores_; }

private:
    std::vector<const Forecaster*> components_;
    ForecastInputs in_;
    ForecastConfig cfg_;
    ScorePanel scores_;
    Eigen::VectorXd c_;
    Eigen::Index day_ = -1;
};

/// Seed for the draws of a model on a given day; shared by every strategy using that model.
std::uint64_t draw_seed(std::uint64_t seed, ModelTag model, Eigen::Index day);

}  // namespace costaware
