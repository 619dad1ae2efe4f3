#include "costaware/benchmark_rules.hpp"

#include "costaware/errors.hpp"
#include "costaware/linalg.hpp"
#include "costaware/optimizer.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace costaware {

namespace {

void require_rows(Eigen::Index t, Eigen::Index need, const char* rule) {
    if (t < need)
        throw InsufficientDataError(std::string(rule) + ": needs at least " + std::to_string(need) +
                                    " observations, got " + std::to_string(t));
}

}  // namespace

SampleMoments SampleMoments::of(const Eigen::MatrixXd& window) {
    if (window.rows() < 2) throw InsufficientDataError("sample moments need at least 2 observations");
    SampleMoments m;
    m.t = window.rows();
    m.mean = window.colwise().mean().transpose();
    const Eigen::MatrixXd x = window.rowwise() - m.mean.transpose();
    const Eigen::MatrixXd ss = symmetrize(x.transpose() * x);
    m.cov_mle = ss / static_cast<double>(m.t);
    m.cov_unbiased = ss / static_cast<double>(m.t - 1);
    return m;
}

double asymptote_slope_sq(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
    return std::max(0.0, mu.dot(a_matrix(sigma) * mu));
}

double adjusted_slope_sq(double psi2_hat, Eigen::Index n, Eigen::Index t) {
    if (n < 2 || !(psi2_hat > 0.0)) return 0.0;
    const double nn = static_cast<double>(n), tt = static_cast<double>(t);
    if (tt <= nn + 1.0) throw InsufficientDataError("adjusted slope needs T > N + 1");
    const double a = 0.5 * (nn - 1.0), b = 0.5 * (tt - nn + 1.0);
    const double x = psi2_hat / (1.0 + psi2_hat);
    const double head = ((tt - nn - 1.0) * psi2_hat - (nn - 1.0)) / tt;
    const double reg = boost::math::ibeta(a, b, x);
    if (!(reg > 0.0) || !std::isfinite(reg)) return std::max(0.0, head);
    const double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    const double log_tail = std::log(2.0) + a * std::log(psi2_hat) - 0.5 * (tt - 2.0) * std::log1p(psi2_hat) -
                            std::log(tt) - std::log(reg) - log_beta;
    return std::max(0.0, head + std::exp(log_tail));
}

double tu_zhou_delta(const SampleMoments& m, double gamma) {
    const Eigen::Index n = m.mean.size();
    const double nn = static_cast<double>(n), tt = static_cast<double>(m.t);
    require_rows(m.t, n + 5, "Tu-Zhou rule");
    const Eigen::VectorXd d = Eigen::VectorXd::Constant(n, 1.0 / nn) - gmv_weights(m.cov_mle);
    const double psi2 = adjusted_slope_sq(asymptote_slope_sq(m.mean, m.cov_mle), n, m.t);
    const double pi1 = d.dot(m.cov_mle * d) - 2.0 / gamma * d.dot(m.mean) + psi2 / (gamma * gamma);
    const double c1 = (tt - 2.0) * (tt - nn - 2.0) / ((tt - nn - 1.0) * (tt - nn - 4.0));
    const double pi2 = ((c1 - 1.0) * psi2 + c1 * (nn - 1.0) / tt) / (gamma * gamma);
    if (!(pi1 + pi2 > 0.0)) return 0.0;
    return std::clamp(pi1 / (pi1 + pi2), 0.0, 1.0);
}

Eigen::VectorXd tu_zhou_weights(const Eigen::MatrixXd& window, double gamma, std::optional<double> delta) {
    const SampleMoments m = SampleMoments::of(window);
    const Eigen::Index n = m.mean.size();
    const double d = delta ? *delta : tu_zhou_delta(m, gamma);
    const Eigen::VectorXd naive = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    if (d == 0.0) return naive;
    return (1.0 - d) * naive + d * efficient_weights(m.mean, m.cov_mle, gamma);
}

Eigen::VectorXd kan_zhou_weights(const Eigen::MatrixXd& window, double gamma) {
    const SampleMoments m = SampleMoments::of(window);
    const Eigen::Index n = m.mean.size();
    const double nn = static_cast<double>(n), tt = static_cast<double>(m.t);
    require_rows(m.t, n + 5, "Kan-Zhou rule");
    const double psi2 = adjusted_slope_sq(asymptote_slope_sq(m.mean, m.cov_mle), n, m.t);
    const double c3 = (tt - nn - 1.0) * (tt - nn - 4.0) / (tt * (tt - 2.0));
    const double eta = n > 1 ? psi2 / (psi2 + (nn - 1.0) / tt) : 0.0;
    return gmv_weights(m.cov_mle) + c3 * eta / gamma * (a_matrix(m.cov_mle) * m.mean);
}

Eigen::VectorXd jorion_weights(const Eigen::MatrixXd& window, double gamma) {
    const SampleMoments m = SampleMoments::of(window);
    const Eigen::Index n = m.mean.size();
    const double nn = static_cast<double>(n), tt = static_cast<double>(m.t);
    require_rows(m.t, n + 3, "Jorion rule");
    const Eigen::MatrixXd s = m.cov_unbiased * (tt - 1.0) / (tt - nn - 2.0);
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    const Eigen::VectorXd si = solve_checked(s, ones, "Jorion covariance");
    const double mu_g = si.dot(m.mean) / si.sum();
    const Eigen::VectorXd dev = m.mean - mu_g * ones;
    const double q = dev.dot(solve_checked(s, dev, "Jorion covariance").col(0));
    if (!(q > 0.0)) return gmv_weights(s);
    const double phi = (nn + 2.0) / ((nn + 2.0) + tt * q);
    const double lambda = (nn + 2.0) / q;
    const Eigen::VectorXd mu_bs = (1.0 - phi) * m.mean + phi * mu_g * ones;
    const Eigen::MatrixXd sigma_bs =
        s * (1.0 + 1.0 / (tt + lambda)) + lambda / (tt * (tt + 1.0 + lambda)) * ones * ones.transpose() / si.sum();
    return efficient_weights(mu_bs, symmetrize(sigma_bs), gamma);
}

}  // namespace costaware
