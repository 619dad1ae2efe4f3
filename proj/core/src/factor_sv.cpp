#include "costaware/factor_sv.hpp"

#include "costaware/errors.hpp"
#include "costaware/linalg.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <numbers>

namespace costaware {

const double LogChi2Mixture::weight[10] = {0.00609, 0.04775, 0.13057, 0.20674, 0.22715,
                                           0.18842, 0.12047, 0.05591, 0.01575, 0.00115};
const double LogChi2Mixture::mean[10] = {1.92677,  1.34744,  0.73504,  0.02266,  -0.85173,
                                         -1.97278, -3.46788, -5.55246, -8.68384, -14.65};
const double LogChi2Mixture::variance[10] = {0.11265, 0.17788, 0.26768, 0.40611, 0.62699,
                                             0.98583, 1.57469, 2.54498, 4.16591, 7.33342};

namespace {

constexpr double kScale = 100.0;
constexpr double kLogOffset = 1e-10;

// Truncated standard-normal-based draw of N(m, s^2) restricted to x > 0.
double positive_normal(Engine& eng, double m, double s) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double a = -m / s;
    if (a > 30.0) {
        // Exponential rejection sampler in the far tail.
        std::exponential_distribution<double> ex(a);
        for (;;) {
            const double z = a + ex(eng);
            if (unif(eng) <= std::exp(-0.5 * (z - a) * (z - a))) return m + s * z;
        }
    }
    const boost::math::normal_distribution<double> n01;
    const double tail = boost::math::cdf(boost::math::complement(n01, a));
    double u = unif(eng);
    if (u <= 0.0) u = 1e-300;
    const double z = boost::math::quantile(boost::math::complement(n01, u * tail));
    return std::max(m + s * z, std::numeric_limits<double>::min());
}

double gamma_draw(Engine& eng, double shape, double rate) {
    std::gamma_distribution<double> g(shape, 1.0 / rate);
    return g(eng);
}

double log_phi_prior(double phi, const SvPriors& p) {
    return (p.a0 - 1.0) * std::log1p(phi) + (p.b0 - 1.0) * std::log1p(-phi);
}

// Log density of h0 under the stationary law, up to constants independent of (phi, sigma).
double log_initial(double x0, double phi, double sigma) {
    const double v = sigma * sigma / (1.0 - phi * phi);
    return -0.5 * std::log(v) - 0.5 * x0 * x0 / v;
}

// Draws x_0..x_T from N(Q^-1 b, Q^-1) for a symmetric tridiagonal Q given by
// its diagonal and sub-diagonal.
Eigen::VectorXd tridiagonal_gaussian(Engine& eng, Eigen::VectorXd diag, const Eigen::VectorXd& sub,
                                     const Eigen::VectorXd& b) {
    const Eigen::Index n = diag.size();
    Eigen::VectorXd ld(n), ls(n);  // L diagonal, L sub-diagonal (ls(t) = L(t, t-1))
    ld(0) = std::sqrt(diag(0));
    for (Eigen::Index t = 1; t < n; ++t) {
        ls(t) = sub(t - 1) / ld(t - 1);
        ld(t) = std::sqrt(diag(t) - ls(t) * ls(t));
    }
    Eigen::VectorXd w(n);
    w(0) = b(0) / ld(0);
    for (Eigen::Index t = 1; t < n; ++t) w(t) = (b(t) - ls(t) * w(t - 1)) / ld(t);
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::VectorXd v(n);
    for (Eigen::Index t = 0; t < n; ++t) v(t) = w(t) + nd(eng);
    Eigen::VectorXd x(n);
    x(n - 1) = v(n - 1) / ld(n - 1);
    for (Eigen::Index t = n - 2; t >= 0; --t) x(t) = (v(t) - ls(t + 1) * x(t + 1)) / ld(t);
    return x;
}

}  // namespace

std::vector<double> SvPosterior::phi_draws(Eigen::Index i) const {
    std::vector<double> out;
    out.reserve(draws.size());
    for (const auto& d : draws) out.push_back(d.params.at(static_cast<std::size_t>(i)).phi);
    return out;
}

Eigen::MatrixXd sv_implied_covariance(const SvDraw& d, const Eigen::VectorXd& next_state) {
    const Eigen::Index n = d.loadings.rows();
    const Eigen::Index j = d.loadings.cols();
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(n, n);
    if (j > 0) {
        const Eigen::VectorXd v = next_state.tail(j).array().exp();
        s = d.loadings * v.asDiagonal() * d.loadings.transpose();
    }
    s.diagonal() += next_state.head(n).array().exp().matrix();
    return s;
}

FactorSvSampler::FactorSvSampler(Eigen::Index n_factors, SvMcmcConfig config, std::uint64_t seed)
    : j_(n_factors), cfg_(config), eng_(make_engine(seed, 0)) {
    if (j_ < 0) throw ConfigError("factor SV: number of factors must be non-negative");
    if (cfg_.burn_in < 0 || cfg_.draws < 1 || cfg_.thin < 1) throw ConfigError("factor SV: invalid MCMC configuration");
    const auto& p = cfg_.priors;
    if (!(p.a0 > 0 && p.b0 > 0 && p.b_sigma > 0 && p.mu_var > 0 && p.tau_shape > 0 && p.tau_rate > 0))
        throw ConfigError("factor SV: prior parameters must be positive");
}

void FactorSvSampler::initialise(const Eigen::MatrixXd& window) {
    const Eigen::Index t = window.rows();
    const Eigen::Index n = window.cols();
    if (static_cast<std::size_t>(t) < cfg_.min_window)
        throw InsufficientDataError("factor SV: window has " + std::to_string(t) + " days, need " +
                                    std::to_string(cfg_.min_window));
    if (j_ > n) throw ConfigError("factor SV: more factors than assets");
    if (!window.allFinite()) throw DataError("factor SV: non-finite return in window");
    y_ = kScale * window;

    const Eigen::MatrixXd centred = y_.rowwise() - y_.colwise().mean();
    const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(t - 1);
    lambda_ = Eigen::MatrixXd::Zero(n, j_);
    if (j_ > 0) {
        // Principal components rotated to lower-triangular form with a positive diagonal.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        Eigen::MatrixXd pc(n, j_);
        for (Eigen::Index k = 0; k < j_; ++k)
            pc.col(k) = es.eigenvectors().col(n - 1 - k) * std::sqrt(std::max(es.eigenvalues()(n - 1 - k), 1e-8));
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(pc.topRows(j_).transpose());
        const Eigen::MatrixXd q = qr.householderQ();
        lambda_ = pc * q;
        for (Eigen::Index k = 0; k < j_; ++k)
            if (lambda_(k, k) < 0.0) lambda_.col(k) *= -1.0;
        for (Eigen::Index i = 0; i < j_; ++i)
            for (Eigen::Index k = i + 1; k < j_; ++k) lambda_(i, k) = 0.0;
    }
    tau_ = Eigen::VectorXd::Ones(j_);
    par_.assign(static_cast<std::size_t>(n + j_), SvSeriesParams{0.0, 0.9, 0.2});
    h_.resize(t + 1, n + j_);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double common = j_ > 0 ? lambda_.row(i).squaredNorm() : 0.0;
        const double v = std::max(cov(i, i) - common, 0.1 * cov(i, i));
        par_[static_cast<std::size_t>(i)].mu = std::log(std::max(v, 1e-12));
        h_.col(i).setConstant(par_[static_cast<std::size_t>(i)].mu);
    }
    for (Eigen::Index k = 0; k < j_; ++k) h_.col(n + k).setZero();
    f_ = Eigen::MatrixXd::Zero(t, j_);
    initialised_ = true;
}

void FactorSvSampler::sweep(long iteration) {
    const Eigen::Index t_len = y_.rows();
    const Eigen::Index n = y_.cols();
    const Eigen::Index m_series = n + j_;
    const auto& pri = cfg_.priors;
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // Factors given loadings and log-variances.
    if (j_ > 0) {
        for (Eigen::Index t = 0; t < t_len; ++t) {
            const Eigen::ArrayXd w = (-h_.row(t + 1).head(n)).array().exp();
            Eigen::MatrixXd prec = lambda_.transpose() * (lambda_.array().colwise() * w).matrix();
            prec.diagonal() += (-h_.row(t + 1).tail(j_)).array().exp().matrix();
            const Eigen::VectorXd b = lambda_.transpose() * (y_.row(t).transpose().array() * w).matrix();
            Eigen::LLT<Eigen::MatrixXd> llt(prec);
            if (llt.info() != Eigen::Success)
                throw SamplerError("factor SV: factor precision not positive definite at iteration " +
                                   std::to_string(iteration));
            Eigen::VectorXd z(j_);
            for (Eigen::Index k = 0; k < j_; ++k) z(k) = nd(eng_);
            f_.row(t) = (llt.solve(b) + llt.matrixU().solve(z)).transpose();
        }
    }

    // Log-variances and AR parameters, series by series.
    constexpr int kc = LogChi2Mixture::kComponents;
    double log_norm[kc];
    for (int c = 0; c < kc; ++c)
        log_norm[c] = std::log(LogChi2Mixture::weight[c]) - 0.5 * std::log(LogChi2Mixture::variance[c]);
    Eigen::VectorXd ystar(t_len), obs_mean(t_len), obs_var(t_len);
    for (Eigen::Index s = 0; s < m_series; ++s) {
        auto& par = par_[static_cast<std::size_t>(s)];
        for (Eigen::Index t = 0; t < t_len; ++t) {
            const double e = s < n ? y_(t, s) - (j_ > 0 ? lambda_.row(s).dot(f_.row(t)) : 0.0) : f_(t, s - n);
            ystar(t) = std::log(e * e + kLogOffset);
            // Mixture indicator.
            double lp[kc];
            double mx = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < kc; ++c) {
                const double d = ystar(t) - h_(t + 1, s) - LogChi2Mixture::mean[c];
                lp[c] = log_norm[c] - 0.5 * d * d / LogChi2Mixture::variance[c];
                mx = std::max(mx, lp[c]);
            }
            double total = 0.0;
            for (int c = 0; c < kc; ++c) total += (lp[c] = std::exp(lp[c] - mx));
            double u = unif(eng_) * total;
            int pick = kc - 1;
            for (int c = 0; c < kc; ++c) {
                u -= lp[c];
                if (u <= 0.0) {
                    pick = c;
                    break;
                }
            }
            obs_mean(t) = ystar(t) - LogChi2Mixture::mean[pick];
            obs_var(t) = LogChi2Mixture::variance[pick];
        }

        // States x = h - mu, jointly from the tridiagonal posterior.
        const double phi = par.phi, sig2 = par.sigma * par.sigma;
        Eigen::VectorXd diag(t_len + 1), sub(t_len), b(t_len + 1);
        diag(0) = 1.0 / sig2;
        b(0) = 0.0;
        for (Eigen::Index t = 1; t <= t_len; ++t) {
            diag(t) = (t < t_len ? (1.0 + phi * phi) / sig2 : 1.0 / sig2) + 1.0 / obs_var(t - 1);
            b(t) = (obs_mean(t - 1) - par.mu) / obs_var(t - 1);
        }
        sub.setConstant(-phi / sig2);
        const Eigen::VectorXd x = tridiagonal_gaussian(eng_, diag, sub, b);
        if (!x.allFinite())
            throw SamplerError("factor SV: non-finite log-variance in series " + std::to_string(s) + " at iteration " +
                               std::to_string(iteration));
        h_.col(s) = x.array() + par.mu;

        // mu (idiosyncratic series only; factor levels are fixed at zero).
        const Eigen::VectorXd hs = h_.col(s);
        if (s < n) {
            const double td = static_cast<double>(t_len);
            double acc = 0.0;
            for (Eigen::Index t = 1; t <= t_len; ++t) acc += hs(t) - phi * hs(t - 1);
            const double prec = 1.0 / pri.mu_var + (1.0 - phi * phi) / sig2 + td * (1.0 - phi) * (1.0 - phi) / sig2;
            const double num = pri.mu_mean / pri.mu_var + (1.0 - phi * phi) * hs(0) / sig2 + (1.0 - phi) * acc / sig2;
            par.mu = num / prec + nd(eng_) / std::sqrt(prec);
        }
        const Eigen::VectorXd xs = hs.array() - par.mu;

        // phi: independence proposal from the transition likelihood.
        {
            double sxx = 0.0, sxy = 0.0;
            for (Eigen::Index t = 1; t <= t_len; ++t) {
                sxx += xs(t - 1) * xs(t - 1);
                sxy += xs(t) * xs(t - 1);
            }
            const double prop = sxy / sxx + std::sqrt(sig2 / sxx) * nd(eng_);
            if (std::abs(prop) < 1.0) {
                const double lr = log_phi_prior(prop, pri) + log_initial(xs(0), prop, par.sigma) -
                                  log_phi_prior(par.phi, pri) - log_initial(xs(0), par.phi, par.sigma);
                if (std::log(unif(eng_)) < lr) par.phi = prop;
            }
        }
        // sigma^2: inverse-gamma proposal from the likelihood, corrected by the prior.
        {
            const double ph = par.phi;
            double ss = (1.0 - ph * ph) * xs(0) * xs(0);
            for (Eigen::Index t = 1; t <= t_len; ++t) {
                const double d = xs(t) - ph * xs(t - 1);
                ss += d * d;
            }
            const double shape = 0.5 * static_cast<double>(t_len - 1);
            const double prop = 1.0 / gamma_draw(eng_, shape, 0.5 * ss);
            const double cur = par.sigma * par.sigma;
            auto log_prior = [&](double v) { return -0.5 * std::log(v) - v / (2.0 * pri.b_sigma); };
            if (std::isfinite(prop) && prop > 0.0 && std::log(unif(eng_)) < log_prior(prop) - log_prior(cur))
                par.sigma = std::sqrt(prop);
        }
    }

    // Loadings row by row, then their column precisions.
    if (j_ > 0) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Index k_free = std::min<Eigen::Index>(i + 1, j_);
            const Eigen::ArrayXd w = (-h_.col(i).tail(t_len)).array().exp();
            const Eigen::MatrixXd fk = f_.leftCols(k_free);
            Eigen::MatrixXd prec = fk.transpose() * (fk.array().colwise() * w).matrix();
            prec.diagonal() += tau_.head(k_free);
            const Eigen::VectorXd b = fk.transpose() * (y_.col(i).array() * w).matrix();
            Eigen::VectorXd row = lambda_.row(i).head(k_free).transpose();
            if (i < j_) {
                // Diagonal entry given the others, truncated to be positive.
                const Eigen::Index d = i;
                double rest = b(d);
                for (Eigen::Index k = 0; k < k_free; ++k)
                    if (k != d) rest -= prec(d, k) * row(k);
                row(d) = positive_normal(eng_, rest / prec(d, d), 1.0 / std::sqrt(prec(d, d)));
                if (d > 0) {
                    const Eigen::MatrixXd pr = prec.topLeftCorner(d, d);
                    const Eigen::VectorXd br = b.head(d) - prec.topRightCorner(d, 1).col(0) * row(d);
                    Eigen::LLT<Eigen::MatrixXd> llt(pr);
                    Eigen::VectorXd z(d);
                    for (Eigen::Index k = 0; k < d; ++k) z(k) = nd(eng_);
                    row.head(d) = llt.solve(br) + llt.matrixU().solve(z);
                }
            } else {
                Eigen::LLT<Eigen::MatrixXd> llt(prec);
                Eigen::VectorXd z(k_free);
                for (Eigen::Index k = 0; k < k_free; ++k) z(k) = nd(eng_);
                row = llt.solve(b) + llt.matrixU().solve(z);
            }
            if (!row.allFinite())
                throw SamplerError("factor SV: non-finite loading at iteration " + std::to_string(iteration));
            lambda_.row(i).head(k_free) = row.transpose();
        }
        for (Eigen::Index k = 0; k < j_; ++k) {
            const double cnt = static_cast<double>(n - k);
            const double ss = lambda_.col(k).tail(n - k).squaredNorm();
            tau_(k) = gamma_draw(eng_, pri.tau_shape + 0.5 * cnt, pri.tau_rate + 0.5 * ss);
        }
    }
}

SvPosterior FactorSvSampler::run(int burn_in, int draws) {
    SvPosterior post;
    post.n_assets = y_.cols();
    post.n_factors = j_;
    for (int it = 0; it < burn_in + draws; ++it) {
        sweep(iteration_++);
        if (it >= burn_in && (it - burn_in + 1) % cfg_.thin == 0) {
            SvDraw d;
            d.loadings = lambda_;
            d.params = par_;
            d.last_state = h_.row(h_.rows() - 1).transpose();
            post.draws.push_back(std::move(d));
        }
    }
    if (post.draws.empty()) throw ConfigError("factor SV: no draws retained; draws must be at least thin");
    return post;
}

SvPosterior FactorSvSampler::fit(const Eigen::MatrixXd& window) {
    initialise(window);
    return run(cfg_.burn_in, cfg_.draws);
}

SvPosterior FactorSvSampler::refit(const Eigen::MatrixXd& window, Eigen::Index shift, int burn_in, int draws) {
    if (!initialised_ || window.rows() != y_.rows() || window.cols() != y_.cols() || shift < 0 ||
        shift >= window.rows())
        return fit(window);
    if (!window.allFinite()) throw DataError("factor SV: non-finite return in window");
    const Eigen::Index t_len = window.rows();
    y_ = kScale * window;
    if (shift > 0) {
        const Eigen::MatrixXd old_h = h_;
        h_.topRows(t_len + 1 - shift) = old_h.bottomRows(t_len + 1 - shift);
        for (Eigen::Index t = t_len + 1 - shift; t <= t_len; ++t)
            for (Eigen::Index s = 0; s < h_.cols(); ++s) {
                const auto& p = par_[static_cast<std::size_t>(s)];
                h_(t, s) = p.mu + p.phi * (h_(t - 1, s) - p.mu);
            }
        if (j_ > 0) {
            const Eigen::MatrixXd old_f = f_;
            f_.topRows(t_len - shift) = old_f.bottomRows(t_len - shift);
            f_.bottomRows(shift).setZero();
        }
    }
    return run(burn_in, draws);
}

SvPosterior factor_sv_fit(const Eigen::MatrixXd& window, Eigen::Index n_factors, const SvMcmcConfig& config,
                          std::uint64_t seed) {
    FactorSvSampler s(n_factors, config, seed);
    return s.fit(window);
}

namespace {

Eigen::VectorXd propagate(const SvDraw& d, Engine& eng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::VectorXd next(d.last_state.size());
    for (Eigen::Index s = 0; s < next.size(); ++s) {
        const auto& p = d.params[static_cast<std::size_t>(s)];
        next(s) = p.mu + p.phi * (d.last_state(s) - p.mu) + p.sigma * nd(eng);
    }
    return next;
}

}  // namespace

PredictiveDraws factor_sv_predict(const SvPosterior& post, Eigen::Index j, std::uint64_t seed) {
    if (post.draws.empty()) throw ValidationError("factor_sv_predict: no posterior draws");
    if (j < 1) throw ValidationError("factor_sv_predict: need at least one draw");
    const Eigen::Index n = post.n_assets, k = post.n_factors;
    PredictiveDraws out;
    out.model = ModelTag::FactorSv;
    out.draws.resize(j, n);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, post.draws.size() - 1);
    for (Eigen::Index c0 = 0; c0 < j; c0 += kDrawChunk) {
        Engine eng = make_engine(seed, static_cast<std::uint64_t>(c0 / kDrawChunk));
        const Eigen::Index c1 = std::min(j, c0 + kDrawChunk);
        for (Eigen::Index row = c0; row < c1; ++row) {
            const SvDraw& d = post.draws[pick(eng)];
            const Eigen::VectorXd next = propagate(d, eng);
            Eigen::VectorXd r(n);
            for (Eigen::Index i = 0; i < n; ++i) r(i) = std::exp(0.5 * next(i)) * nd(eng);
            if (k > 0) {
                Eigen::VectorXd f(k);
                for (Eigen::Index q = 0; q < k; ++q) f(q) = std::exp(0.5 * next(n + q)) * nd(eng);
                r += d.loadings * f;
            }
            out.draws.row(row) = r.transpose() / kScale;
        }
    }
    for (Eigen::Index i = 0; i < out.draws.size(); ++i)
        if (out.draws.data()[i] <= -1.0 + 1e-9) {
            out.draws.data()[i] = -1.0 + 1e-9;
            out.truncated = true;
        }
    return out;
}

double factor_sv_log_score(const SvPosterior& post, const Eigen::VectorXd& r, std::uint64_t seed) {
    if (post.draws.empty()) throw ValidationError("factor_sv_log_score: no posterior draws");
    if (r.size() != post.n_assets) throw ShapeError("factor_sv_log_score: dimension mismatch");
    Engine eng = make_engine(seed, 0);
    std::vector<double> terms;
    terms.reserve(post.draws.size());
    for (const auto& d : post.draws) {
        const Eigen::MatrixXd s = sv_implied_covariance(d, propagate(d, eng)) / (kScale * kScale);
        terms.push_back(mvn_log_density(r, s));
    }
    return log_sum_exp(terms) - std::log(static_cast<double>(terms.size()));
}

}  // namespace costaware
