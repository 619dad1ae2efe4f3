#include "costaware/predictive.hpp"

#include "costaware/errors.hpp"
#include "costaware/linalg.hpp"
#include "csv_util.hpp"

#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>

namespace costaware {

namespace {

constexpr double kFloor = -1.0 + 1e-9;

Eigen::MatrixXd lower_cholesky(const Eigen::MatrixXd& s, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(symmetrize(s));
    if (llt.info() != Eigen::Success)
        throw PsdError(std::string(what) + " is not positive definite; apply psd_repair first");
    return llt.matrixL();
}

// Clips draws at just above -1 and reports whether any were clipped.
bool truncate_draws(Eigen::MatrixXd& d) {
    bool hit = false;
    for (Eigen::Index i = 0; i < d.size(); ++i)
        if (d.data()[i] <= kFloor) {
            d.data()[i] = kFloor;
            hit = true;
        }
    return hit;
}

// Bartlett factor A (lower triangular) with A A' ~ Wishart(dof, I).
Eigen::MatrixXd bartlett(Engine& eng, double dof, Eigen::Index n) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        std::chi_squared_distribution<double> chi(dof - static_cast<double>(i));
        a(i, i) = std::sqrt(chi(eng));
        for (Eigen::Index k = 0; k < i; ++k) a(i, k) = nd(eng);
    }
    return a;
}

double kappa_log_prior(double kappa, double n, double rate) {
    const double e = kappa - (n - 1.0);
    return e > 0.0 ? -rate * e : -std::numeric_limits<double>::infinity();
}

}  // namespace

std::string to_string(ModelTag m) {
    switch (m) {
        case ModelTag::WishartBrk: return "WishartBRK";
        case ModelTag::FactorSv: return "FactorSV";
        case ModelTag::GaussianSample: return "GaussianSample";
        case ModelTag::GaussianLw: return "GaussianLW";
        case ModelTag::Mixture: return "Mixture";
    }
    return "?";
}

ModelTag model_from_string(const std::string& s) {
    static const std::map<std::string, ModelTag> tags{{"WishartBRK", ModelTag::WishartBrk},
                                                      {"FactorSV", ModelTag::FactorSv},
                                                      {"GaussianSample", ModelTag::GaussianSample},
                                                      {"GaussianLW", ModelTag::GaussianLw},
                                                      {"Mixture", ModelTag::Mixture}};
    const auto it = tags.find(s);
    if (it == tags.end()) throw ConfigError("unknown model tag '" + s + "'");
    return it->second;
}

void PredictiveDraws::validate() const {
    if (draws.rows() < 1) throw ValidationError("predictive draws: need at least one draw");
    if (!draws.allFinite()) throw ValidationError("predictive draws: non-finite entry");
}

WishartParams WishartParams::from_estimate(double kappa, const Eigen::MatrixXd& sigma_hat) {
    WishartParams p{kappa, kappa * symmetrize(sigma_hat)};
    p.validate();
    return p;
}

void WishartParams::validate() const {
    const auto n = static_cast<double>(scale.rows());
    if (scale.rows() != scale.cols() || scale.rows() == 0) throw ShapeError("Wishart scale must be square");
    if (!(kappa > n - 1.0)) throw ValidationError("Wishart degrees of freedom must exceed N - 1");
    lower_cholesky(scale, "Wishart scale");
}

Eigen::MatrixXd sample_inverse_wishart(Engine& eng, double dof, const Eigen::MatrixXd& scale) {
    const Eigen::Index n = scale.rows();
    if (!(dof > static_cast<double>(n) - 1.0)) throw ValidationError("inverse Wishart: dof must exceed N - 1");
    // Sigma = W^-1 with W ~ Wishart(dof, scale^-1) = (L A)(L A)', L L' = scale^-1.
    const Eigen::MatrixXd inv = solve_checked(symmetrize(scale), Eigen::MatrixXd::Identity(n, n), "IW scale");
    const Eigen::MatrixXd la = lower_cholesky(inv, "inverse Wishart scale") * bartlett(eng, dof, n);
    const Eigen::MatrixXd lainv = la.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
    return lainv.transpose() * lainv;
}

double multivariate_t_log_density(const Eigen::VectorXd& x, double dof, const Eigen::MatrixXd& scale) {
    const Eigen::Index n = x.size();
    if (scale.rows() != n || scale.cols() != n) throw ShapeError("multivariate t: dimension mismatch");
    if (!(dof > 0.0)) throw ValidationError("multivariate t: dof must be positive");
    const Eigen::MatrixXd l = lower_cholesky(scale, "t scale");
    const Eigen::VectorXd z = l.triangularView<Eigen::Lower>().solve(x);
    const double nd = static_cast<double>(n);
    const double logdet = 2.0 * l.diagonal().array().log().sum();
    return std::lgamma(0.5 * (dof + nd)) - std::lgamma(0.5 * dof) - 0.5 * nd * std::log(dof * std::numbers::pi) -
           0.5 * logdet - 0.5 * (dof + nd) * std::log1p(z.squaredNorm() / dof);
}

double wishart_log_density(const Eigen::VectorXd& r, const Eigen::MatrixXd& sigma_hat, double kappa) {
    const double n = static_cast<double>(r.size());
    const double dof = kappa - n + 1.0;
    if (!(dof > 0.0)) throw ValidationError("kappa must exceed N - 1");
    return multivariate_t_log_density(r, dof, (kappa / dof) * sigma_hat);
}

double KappaPosterior::mean() const {
    if (draws.empty()) return std::numeric_limits<double>::quiet_NaN();
    return pairwise_sum(draws) / static_cast<double>(draws.size());
}

KappaPosterior estimate_kappa(std::span<const Eigen::MatrixXd> sigma_hats, const Eigen::MatrixXd& returns,
                              const KappaConfig& config, std::uint64_t seed, std::span<const std::string> dates) {
    const auto t_days = static_cast<std::size_t>(returns.rows());
    if (sigma_hats.size() != t_days) throw ShapeError("estimate_kappa: one covariance estimate per return row");
    if (t_days > 0 && t_days < config.min_days)
        throw InsufficientDataError("estimate_kappa: need at least " + std::to_string(config.min_days) +
                                    " days, got " + std::to_string(t_days));
    if (!(config.prior_rate > 0.0) || config.draws < 1 || config.burn_in < 0 || config.step < 0.0)
        throw ConfigError("estimate_kappa: invalid MCMC configuration");
    const Eigen::Index n = returns.cols() > 0 ? returns.cols() : (sigma_hats.empty() ? 1 : sigma_hats.front().rows());
    const double nd = static_cast<double>(n);

    // The likelihood depends on kappa only through scalars per day:
    // log det(sigma_hat_t) and q_t = r_t' sigma_hat_t^-1 r_t.
    std::vector<double> logdet(t_days), quad(t_days);
    for (std::size_t t = 0; t < t_days; ++t) {
        const auto& s = sigma_hats[t];
        if (s.rows() != n || s.cols() != n) throw ShapeError("estimate_kappa: covariance dimension mismatch");
        Eigen::LLT<Eigen::MatrixXd> llt(symmetrize(s));
        const std::string day = t < dates.size() ? dates[t] : "row " + std::to_string(t);
        if (llt.info() != Eigen::Success) throw DataError("estimate_kappa: covariance not positive definite on " + day);
        const Eigen::MatrixXd l = llt.matrixL();
        logdet[t] = 2.0 * l.diagonal().array().log().sum();
        quad[t] = l.triangularView<Eigen::Lower>().solve(Eigen::VectorXd(returns.row(static_cast<Eigen::Index>(t))
                                                                             .transpose()))
                      .squaredNorm();
        if (!std::isfinite(logdet[t]) || !std::isfinite(quad[t]))
            throw DataError("estimate_kappa: non-finite likelihood term on " + day);
    }
    double sum_logdet = 0.0;
    for (double v : logdet) sum_logdet += v;

    auto log_lik = [&](double kappa) {
        if (t_days == 0) return 0.0;
        const double dof = kappa - nd + 1.0;
        const double c = kappa / dof;
        const double td = static_cast<double>(t_days);
        double acc = td * (std::lgamma(0.5 * (dof + nd)) - std::lgamma(0.5 * dof) -
                           0.5 * nd * std::log(dof * std::numbers::pi) - 0.5 * nd * std::log(c)) -
                     0.5 * sum_logdet;
        double tail = 0.0;
        for (std::size_t t = 0; t < t_days; ++t) tail += std::log1p(quad[t] / kappa);
        return acc - 0.5 * (dof + nd) * tail;
    };
    // Target in u = log(kappa - N + 1), including the Jacobian e^u.
    auto log_target = [&](double u) {
        const double kappa = nd - 1.0 + std::exp(u);
        return log_lik(kappa) + kappa_log_prior(kappa, nd, config.prior_rate) + u;
    };

    Engine eng = make_engine(seed, 0);
    std::normal_distribution<double> step(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double kappa0 = config.initial > nd - 1.0 ? config.initial : nd + 10.0;
    double u = std::log(kappa0 - nd + 1.0);
    double lp = log_target(u);
    if (!std::isfinite(lp)) throw DataError("estimate_kappa: non-finite likelihood at the starting value");

    KappaPosterior post;
    post.draws.reserve(static_cast<std::size_t>(config.draws));
    long accepted = 0;
    const int total = config.burn_in + config.draws;
    for (int it = 0; it < total; ++it) {
        const double prop = u + config.step * step(eng);
        const double lp_prop = log_target(prop);
        if (std::isfinite(lp_prop) && std::log(unif(eng)) < lp_prop - lp) {
            u = prop;
            lp = lp_prop;
            ++accepted;
        }
        if (it >= config.burn_in) post.draws.push_back(nd - 1.0 + std::exp(u));
    }
    post.acceptance_rate = static_cast<double>(accepted) / total;
    return post;
}

PredictiveDraws gaussian_predict(const CovarianceEstimate& sigma_hat, Eigen::Index j, std::uint64_t seed) {
    if (j < 1) throw ValidationError("gaussian_predict: need at least one draw");
    const Eigen::Index n = sigma_hat.matrix.rows();
    const Eigen::MatrixXd l = lower_cholesky(sigma_hat.matrix, "covariance estimate");
    PredictiveDraws out;
    out.model = sigma_hat.estimator == Estimator::LedoitWolf ? ModelTag::GaussianLw : ModelTag::GaussianSample;
    out.date = sigma_hat.date;
    out.draws.resize(j, n);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Eigen::Index c0 = 0; c0 < j; c0 += kDrawChunk) {
        Engine eng = make_engine(seed, static_cast<std::uint64_t>(c0 / kDrawChunk));
        const Eigen::Index c1 = std::min(j, c0 + kDrawChunk);
        Eigen::MatrixXd z(n, c1 - c0);
        for (Eigen::Index c = 0; c < z.cols(); ++c)
            for (Eigen::Index i = 0; i < n; ++i) z(i, c) = nd(eng);
        out.draws.middleRows(c0, c1 - c0) = (l * z).transpose();
    }
    out.truncated = truncate_draws(out.draws);
    return out;
}

PredictiveDraws wishart_brk_predict(const CovarianceEstimate& sigma_hat, std::span<const double> kappa_draws,
                                    Eigen::Index j, std::uint64_t seed) {
    if (j < 1) throw ValidationError("wishart_brk_predict: need at least one draw");
    if (kappa_draws.empty()) throw ValidationError("wishart_brk_predict: no kappa draws");
    const Eigen::Index n = sigma_hat.matrix.rows();
    const double nd = static_cast<double>(n);
    for (double k : kappa_draws)
        if (!(k > nd - 1.0)) throw ValidationError("wishart_brk_predict: kappa draws must exceed N - 1");
    // Cholesky factor of sigma_hat^-1; the Wishart scale is sigma_hat^-1 / kappa.
    const Eigen::MatrixXd inv =
        solve_checked(symmetrize(sigma_hat.matrix), Eigen::MatrixXd::Identity(n, n), "covariance estimate");
    const Eigen::MatrixXd linv = lower_cholesky(inv, "covariance estimate");

    PredictiveDraws out;
    out.model = ModelTag::WishartBrk;
    out.date = sigma_hat.date;
    out.draws.resize(j, n);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, kappa_draws.size() - 1);
    for (Eigen::Index c0 = 0; c0 < j; c0 += kDrawChunk) {
        Engine eng = make_engine(seed, static_cast<std::uint64_t>(c0 / kDrawChunk));
        const Eigen::Index c1 = std::min(j, c0 + kDrawChunk);
        for (Eigen::Index row = c0; row < c1; ++row) {
            const double kappa = kappa_draws[pick(eng)];
            // W = (L A)(L A)' ~ Wishart(kappa, sigma_hat^-1 / kappa); r = (L A)^-T z has covariance W^-1.
            const Eigen::MatrixXd la = (linv / std::sqrt(kappa)) * bartlett(eng, kappa, n);
            Eigen::VectorXd z(n);
            for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(eng);
            out.draws.row(row) = la.transpose().triangularView<Eigen::Upper>().solve(z).transpose();
        }
    }
    out.truncated = truncate_draws(out.draws);
    return out;
}

double gaussian_log_score(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& r) {
    if (sigma.rows() != r.size() || sigma.cols() != r.size()) throw ShapeError("log score: dimension mismatch");
    return mvn_log_density(r, sigma);
}

double wishart_log_score(const Eigen::MatrixXd& sigma_hat, std::span<const double> kappa_draws,
                         const Eigen::VectorXd& r) {
    if (sigma_hat.rows() != r.size() || sigma_hat.cols() != r.size()) throw ShapeError("log score: dimension mismatch");
    if (kappa_draws.empty()) throw ValidationError("log score: no kappa draws");
    const Eigen::MatrixXd l = lower_cholesky(sigma_hat, "covariance estimate");
    const double q = l.triangularView<Eigen::Lower>().solve(r).squaredNorm();
    const double logdet = 2.0 * l.diagonal().array().log().sum();
    const double nd = static_cast<double>(r.size());
    std::vector<double> terms;
    terms.reserve(kappa_draws.size());
    for (double kappa : kappa_draws) {
        const double dof = kappa - nd + 1.0;
        if (!(dof > 0.0)) throw ValidationError("log score: kappa must exceed N - 1");
        const double c = kappa / dof;
        terms.push_back(std::lgamma(0.5 * (dof + nd)) - std::lgamma(0.5 * dof) -
                        0.5 * nd * std::log(dof * std::numbers::pi) - 0.5 * (nd * std::log(c) + logdet) -
                        0.5 * (dof + nd) * std::log1p(q / kappa));
    }
    return log_sum_exp(terms) - std::log(static_cast<double>(terms.size()));
}

void write_draws(const PredictiveDraws& d, std::span<const std::string> assets, std::ostream& out,
                 const std::string& header_comment) {
    if (static_cast<Eigen::Index>(assets.size()) != d.n_assets()) throw ShapeError("write_draws: asset names mismatch");
    if (!header_comment.empty()) out << "# " << header_comment << '\n';
    out << "# model=" << to_string(d.model) << ",date=" << d.date << ",truncated=" << (d.truncated ? 1 : 0) << '\n';
    out << "draw_id,asset,value\n";
    for (Eigen::Index j = 0; j < d.n_draws(); ++j)
        for (Eigen::Index i = 0; i < d.n_assets(); ++i)
            out << j << ',' << assets[static_cast<std::size_t>(i)] << ',' << detail::format_double(d.draws(j, i))
                << '\n';
}

PredictiveDraws read_draws(std::istream& in, std::vector<std::string>* assets) {
    PredictiveDraws d;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    std::vector<std::string> names;
    std::map<std::string, Eigen::Index> col;
    std::vector<std::tuple<long, Eigen::Index, double>> cells;
    long max_id = -1;
    while (std::getline(in, line)) {
        ++lineno;
        const auto sv = detail::trim(line);
        if (sv.empty()) continue;
        if (sv.front() == '#') {
            for (auto f : detail::split(sv.substr(1))) {
                const auto eq = f.find('=');
                if (eq == std::string_view::npos) continue;
                const std::string key(detail::trim(f.substr(0, eq)));
                const std::string val(f.substr(eq + 1));
                if (key == "model") d.model = model_from_string(val);
                else if (key == "date") d.date = val;
                else if (key == "truncated") d.truncated = val == "1";
            }
            continue;
        }
        auto f = detail::split(sv);
        if (!header) {
            if (f.size() != 3 || f[0] != "draw_id" || f[1] != "asset" || f[2] != "value")
                throw ParseError("expected header draw_id,asset,value", lineno);
            header = true;
            continue;
        }
        if (f.size() != 3) throw ParseError("expected 3 fields", lineno);
        const auto id = detail::parse_int<long>(f[0]);
        const auto v = detail::parse_double(f[2]);
        if (!id || *id < 0 || !v) throw ParseError("malformed draw row", lineno);
        const std::string asset(f[1]);
        auto it = col.find(asset);
        if (it == col.end()) {
            it = col.emplace(asset, static_cast<Eigen::Index>(names.size())).first;
            names.push_back(asset);
        }
        cells.emplace_back(*id, it->second, *v);
        max_id = std::max(max_id, *id);
    }
    if (!header || cells.empty()) throw DataError("draws file: no data");
    const Eigen::Index n = static_cast<Eigen::Index>(names.size());
    d.draws = Eigen::MatrixXd::Constant(max_id + 1, n, std::numeric_limits<double>::quiet_NaN());
    for (const auto& [id, i, v] : cells) d.draws(id, i) = v;
    if (!d.draws.allFinite()) throw ValidationError("draws file: missing draw/asset cells");
    if (static_cast<Eigen::Index>(cells.size()) != d.draws.size())
        throw ValidationError("draws file: duplicate draw/asset cells");
    if (assets) *assets = names;
    return d;
}

}  // namespace costaware
