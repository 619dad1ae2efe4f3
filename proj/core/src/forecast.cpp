#include "costaware/forecast.hpp"

#include "costaware/errors.hpp"
#include "costaware/random.hpp"

#include <algorithm>

namespace costaware {

namespace {

const ReturnPanel& panel_of(const ForecastInputs& in) {
    if (!in.panel) throw ConfigError("forecaster: no return panel");
    return *in.panel;
}

void check_day(const ReturnPanel& p, Eigen::Index t, Eigen::Index need, const char* what) {
    if (t < need)
        throw InsufficientDataError(std::string(what) + ": day " + std::to_string(t) + " has fewer than " +
                                    std::to_string(need) + " earlier observations");
    if (t > p.n_days()) throw RangeError(std::string(what) + ": day beyond the panel");
}

class GaussianForecaster final : public Forecaster {
public:
    GaussianForecaster(ModelTag tag, const ForecastInputs& in, const ForecastConfig& cfg)
        : tag_(tag), panel_(panel_of(in)), h_(cfg.estimation_window) {}
    ModelTag model() const override { return tag_; }
    void prepare(Eigen::Index t) override {
        check_day(panel_, t, h_, "Gaussian forecaster");
        est_ = tag_ == ModelTag::GaussianLw ? lw_shrinkage(panel_, t, h_) : sample_cov(panel_, t, h_);
    }
    PredictiveDraws draws(Eigen::Index j, std::uint64_t seed) const override {
        auto d = gaussian_predict(est_, j, seed);
        d.model = tag_;
        return d;
    }
    double log_score(const Eigen::VectorXd& r) const override { return gaussian_log_score(est_.matrix, r); }

private:
    ModelTag tag_;
    const ReturnPanel& panel_;
    Eigen::Index h_;
    CovarianceEstimate est_;
};

class WishartForecaster final : public Forecaster {
public:
    WishartForecaster(const ForecastInputs& in, const ForecastConfig& cfg) : panel_(panel_of(in)), cfg_(cfg) {
        if (!in.brk || static_cast<Eigen::Index>(in.brk->size()) != panel_.n_days())
            throw ConfigError("WishartBRK forecaster needs one realised estimate per panel day");
        brk_ = in.brk;
    }
    ModelTag model() const override { return ModelTag::WishartBrk; }
    void prepare(Eigen::Index t) override {
        check_day(panel_, t, 1 + static_cast<Eigen::Index>(cfg_.kappa.min_days), "WishartBRK forecaster");
        if (last_fit_ < 0 || t - last_fit_ >= cfg_.kappa_refit_every) {
            // Pairs (estimate of day s - 1, return of day s) for s in [first, t).
            const Eigen::Index first = std::max<Eigen::Index>(1, t - cfg_.kappa_window);
            std::vector<Eigen::MatrixXd> hats;
            std::vector<std::string> dates;
            for (Eigen::Index s = first; s < t; ++s) {
                hats.push_back((*brk_)[static_cast<std::size_t>(s - 1)].matrix);
                dates.push_back((*brk_)[static_cast<std::size_t>(s - 1)].date);
            }
            kappa_ = estimate_kappa(hats, panel_.returns.middleRows(first, t - first), cfg_.kappa,
                                    stream_seed(cfg_.seed, 0x6b617070ULL + static_cast<std::uint64_t>(t)), dates)
                         .draws;
            last_fit_ = t;
        }
        est_ = &(*brk_)[static_cast<std::size_t>(t - 1)];
    }
    PredictiveDraws draws(Eigen::Index j, std::uint64_t seed) const override {
        return wishart_brk_predict(*est_, kappa_, j, seed);
    }
    double log_score(const Eigen::VectorXd& r) const override { return wishart_log_score(est_->matrix, kappa_, r); }

private:
    const ReturnPanel& panel_;
    ForecastConfig cfg_;
    const std::vector<CovarianceEstimate>* brk_ = nullptr;
    const CovarianceEstimate* est_ = nullptr;
    std::vector<double> kappa_;
    Eigen::Index last_fit_ = -1;
};

class FactorSvForecaster final : public Forecaster {
public:
    FactorSvForecaster(const ForecastInputs& in, const ForecastConfig& cfg)
        : panel_(panel_of(in)), cfg_(cfg), sampler_(cfg.sv_factors, cfg.sv, stream_seed(cfg.seed, 0x7376ULL)) {}
    ModelTag model() const override { return ModelTag::FactorSv; }
    void prepare(Eigen::Index t) override {
        const Eigen::Index h = cfg_.estimation_window;
        check_day(panel_, t, h, "FactorSV forecaster");
        const Eigen::MatrixXd window = panel_.returns.middleRows(t - h, h);
        if (!sampler_.initialised()) {
            post_ = sampler_.fit(window);
            last_fit_ = t;
        } else if (t - last_fit_ >= cfg_.sv_refit_every) {
            post_ = sampler_.refit(window, t - last_fit_, cfg_.sv_warm_burn_in, cfg_.sv_warm_draws);
            last_fit_ = t;
        }
        day_ = t;
    }
    PredictiveDraws draws(Eigen::Index j, std::uint64_t seed) const override {
        auto d = factor_sv_predict(post_, j, seed);
        d.date = panel_.dates[static_cast<std::size_t>(day_ - 1)];
        return d;
    }
    double log_score(const Eigen::VectorXd& r) const override {
        return factor_sv_log_score(post_, r, stream_seed(cfg_.seed, 0x73636fULL + static_cast<std::uint64_t>(day_)));
    }

private:
    const ReturnPanel& panel_;
    ForecastConfig cfg_;
    FactorSvSampler sampler_;
    SvPosterior post_;
    Eigen::Index last_fit_ = -1;
    Eigen::Index day_ = -1;
};

}  // namespace

void ForecastConfig::validate() const {
    if (estimation_window < 2) throw ConfigError("estimation_window must be at least 2");
    if (pooling_window < 1) throw ConfigError("pooling_window must be positive");
    if (kappa_window < 1 || kappa_refit_every < 1) throw ConfigError("kappa windows must be positive");
    if (sv_factors < 0) throw ConfigError("sv factor count must be non-negative");
    if (sv_refit_every < 1 || sv_warm_draws < 1 || sv_warm_burn_in < 0) throw ConfigError("invalid sv refit settings");
    if (mixture_models.empty()) throw ConfigError("mixture_models must not be empty");
    for (auto m : mixture_models)
        if (m == ModelTag::Mixture) throw ConfigError("mixture_models cannot contain Mixture");
}

std::unique_ptr<Forecaster> make_forecaster(ModelTag model, const ForecastInputs& in, const ForecastConfig& cfg) {
    switch (model) {
        case ModelTag::GaussianSample:
        case ModelTag::GaussianLw: return std::make_unique<GaussianForecaster>(model, in, cfg);
        case ModelTag::WishartBrk: return std::make_unique<WishartForecaster>(in, cfg);
        case ModelTag::FactorSv: return std::make_unique<FactorSvForecaster>(in, cfg);
        case ModelTag::Mixture: break;
    }
    throw ConfigError("make_forecaster: build the mixture with MixtureForecaster");
}

MixtureForecaster::MixtureForecaster(std::vector<const Forecaster*> components, const ForecastInputs& in,
                                     const ForecastConfig& cfg)
    : components_(std::move(components)), in_(in), cfg_(cfg) {
    if (components_.empty()) throw ConfigError("mixture needs at least one component");
    panel_of(in_);
    for (const auto* c : components_) scores_.models.push_back(to_string(c->model()));
    scores_.log_density.resize(0, static_cast<Eigen::Index>(components_.size()));
}

void MixtureForecaster::prepare(Eigen::Index t) {
    const Eigen::Index k = static_cast<Eigen::Index>(components_.size());
    const Eigen::Index rows = scores_.log_density.rows();
    if (rows == 0) {
        c_ = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
    } else {
        const Eigen::Index h = std::min(cfg_.pooling_window, rows - 1);
        c_ = optimal_pool(scores_, rows - 1, h).c;
    }
    day_ = t;
}

void MixtureForecaster::record(Eigen::Index t) {
    if (t != day_) throw ValidationError("mixture: record must follow prepare for the same day");
    const auto& panel = *in_.panel;
    const Eigen::VectorXd r = panel.returns.row(t).transpose();
    const Eigen::Index rows = scores_.log_density.rows();
    scores_.log_density.conservativeResize(rows + 1, Eigen::NoChange);
    for (std::size_t q = 0; q < components_.size(); ++q)
        scores_.log_density(rows, static_cast<Eigen::Index>(q)) = components_[q]->log_score(r);
    scores_.dates.push_back(panel.dates[static_cast<std::size_t>(t)]);
}

PredictiveDraws MixtureForecaster::draws(Eigen::Index j, std::uint64_t seed) const {
    std::vector<PredictiveDraws> parts;
    parts.reserve(components_.size());
    for (std::size_t q = 0; q < components_.size(); ++q) {
        if (c_(static_cast<Eigen::Index>(q)) > 0.0) {
            parts.push_back(components_[q]->draws(j, stream_seed(seed, q)));
        } else {
            // Never sampled; only the shape matters.
            PredictiveDraws unused;
            unused.draws = Eigen::MatrixXd::Zero(1, in_.panel->n_assets());
            unused.model = components_[q]->model();
            parts.push_back(std::move(unused));
        }
    }
    return mixture_predict(parts, c_, j, seed);
}

double MixtureForecaster::log_score(const Eigen::VectorXd& r) const {
    Eigen::VectorXd l(static_cast<Eigen::Index>(components_.size()));
    for (std::size_t q = 0; q < components_.size(); ++q) l(static_cast<Eigen::Index>(q)) = components_[q]->log_score(r);
    return mixture_log_score(c_, l);
}

std::uint64_t draw_seed(std::uint64_t seed, ModelTag model, Eigen::Index day) {
    return stream_seed(seed, (static_cast<std::uint64_t>(day) << 3) | static_cast<std::uint64_t>(model));
}

}  // namespace costaware
