#include "costaware/optimizer.hpp"

#include "costaware/errors.hpp"
#include "costaware/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace costaware {

namespace {

Eigen::VectorXd ones(Eigen::Index n) { return Eigen::VectorXd::Ones(n); }

double soft(double x, double tau) {
    const double a = std::abs(x) - tau;
    return a > 0.0 ? std::copysign(a, x) : 0.0;
}

Eigen::VectorXd soft(const Eigen::VectorXd& x, double tau) {
    return x.unaryExpr([tau](double v) { return soft(v, tau); });
}

// Solves sum_i soft(v_i - theta, tau) = target for theta. The left side is
// continuous, piecewise linear and non-increasing in theta, so the root is
// found exactly by locating the bracketing breakpoints.
double shift_for_sum(const Eigen::VectorXd& v, double tau, double target) {
    const Eigen::Index n = v.size();
    auto s = [&](double theta) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) acc += soft(v(i) - theta, tau);
        return acc;
    };
    std::vector<double> bp;
    bp.reserve(static_cast<std::size_t>(2 * n));
    for (Eigen::Index i = 0; i < n; ++i) {
        bp.push_back(v(i) - tau);
        bp.push_back(v(i) + tau);
    }
    std::sort(bp.begin(), bp.end());
    const double nd = static_cast<double>(n);
    double prev_theta = bp.front();
    double prev_s = s(prev_theta);
    if (prev_s <= target) return prev_theta - (target - prev_s) / nd;
    for (std::size_t k = 1; k < bp.size(); ++k) {
        const double th = bp[k];
        const double sv = s(th);
        if (sv <= target) {
            if (prev_s == sv) return th;
            return prev_theta + (prev_s - target) * (th - prev_theta) / (prev_s - sv);
        }
        prev_theta = th;
        prev_s = sv;
    }
    return prev_theta + (prev_s - target) / nd;
}

struct Certificate {
    Eigen::VectorXd g;
    double lambda;
    double residual;
};

// Optimality certificate for min 1/2 w'Pw - q'w + kappa |w - w_plus|_1, i'w = 1.
Certificate certify(const Eigen::MatrixXd& p, const Eigen::VectorXd& q, double kappa, const Eigen::VectorXd& w_plus,
                    const Eigen::VectorXd& w, double tol) {
    const Eigen::Index n = w.size();
    const Eigen::VectorXd grad = p * w - q;
    const Eigen::VectorXd delta = w - w_plus;
    Certificate c{Eigen::VectorXd::Zero(n), 0.0, 0.0};
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < n; ++i)
        if (std::abs(delta(i)) > tol) active.push_back(i);

    if (kappa <= 0.0) {
        for (Eigen::Index i : active) c.g(i) = delta(i) > 0.0 ? 1.0 : -1.0;
        c.lambda = grad.mean();
        c.residual = (grad.array() - c.lambda).abs().maxCoeff();
        return c;
    }
    if (!active.empty()) {
        double acc = 0.0;
        for (Eigen::Index i : active) acc += grad(i) + kappa * (delta(i) > 0.0 ? 1.0 : -1.0);
        c.lambda = acc / static_cast<double>(active.size());
    } else {
        c.lambda = 0.5 * (grad.maxCoeff() + grad.minCoeff());
    }
    for (Eigen::Index i = 0; i < n; ++i) c.g(i) = std::clamp((c.lambda - grad(i)) / kappa, -1.0, 1.0);
    for (Eigen::Index i : active) c.g(i) = delta(i) > 0.0 ? 1.0 : -1.0;
    c.residual = (grad + kappa * c.g - c.lambda * ones(n)).cwiseAbs().maxCoeff();
    return c;
}

// Exact solve on a fixed sign pattern: coordinates outside the support keep
// w_i = w_plus_i. Returns false when the pattern is inconsistent.
bool polish_l1(const Eigen::MatrixXd& p, const Eigen::VectorXd& q, double kappa, const Eigen::VectorXd& w_plus,
               const Eigen::VectorXd& delta, Eigen::VectorXd& out) {
    const Eigen::Index n = delta.size();
    std::vector<Eigen::Index> s;
    for (Eigen::Index i = 0; i < n; ++i)
        if (delta(i) != 0.0) s.push_back(i);
    Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
    double lambda = 0.0;
    const Eigen::VectorXd base_grad = p * w_plus - q;
    if (!s.empty()) {
        const auto m = static_cast<Eigen::Index>(s.size());
        Eigen::MatrixXd k = Eigen::MatrixXd::Zero(m + 1, m + 1);
        Eigen::VectorXd rhs(m + 1);
        for (Eigen::Index a = 0; a < m; ++a) {
            for (Eigen::Index b = 0; b < m; ++b) k(a, b) = p(s[a], s[b]);
            k(a, m) = -1.0;
            k(m, a) = 1.0;
            rhs(a) = -base_grad(s[a]) - kappa * (delta(s[a]) > 0.0 ? 1.0 : -1.0);
        }
        rhs(m) = 0.0;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(k);
        if (!(lu.rcond() > kSingularRcond)) return false;
        const Eigen::VectorXd sol = lu.solve(rhs);
        for (Eigen::Index a = 0; a < m; ++a) {
            const double v = sol(a);
            if (kappa > 0.0 && (v == 0.0 || (v > 0.0) != (delta(s[a]) > 0.0))) return false;
            d(s[a]) = v;
        }
        lambda = sol(m);
    }
    if (kappa > 0.0) {
        const Eigen::VectorXd grad = base_grad + p * d;
        if (s.empty()) lambda = 0.5 * (grad.maxCoeff() + grad.minCoeff());
        for (Eigen::Index i = 0; i < n; ++i) {
            if (d(i) != 0.0) continue;
            if (std::abs((lambda - grad(i)) / kappa) > 1.0 + 1e-9) return false;
        }
    }
    out = w_plus + d;
    return true;
}

void check_square(const Eigen::MatrixXd& m, Eigen::Index n, const char* what) {
    if (m.rows() != n || m.cols() != n) throw ShapeError(std::string(what) + " has the wrong shape");
}

}  // namespace

double TxCostModel::cost(const Eigen::VectorXd& w, const Eigen::VectorXd& w_plus, const Eigen::MatrixXd* sigma) const {
    const Eigen::VectorXd d = w - w_plus;
    switch (kind) {
        case CostKind::None: return 0.0;
        case CostKind::L1: return beta * d.lpNorm<1>();
        case CostKind::L2: return 0.5 * beta * d.squaredNorm();
        case CostKind::QuadraticMatrix: return d.dot(b * d);
        case CostKind::VolProportional:
            if (!sigma) throw ConfigError("vol-proportional cost needs the covariance matrix");
            return 0.5 * beta * d.dot(*sigma * d);
    }
    return 0.0;
}

void TxCostModel::validate(Eigen::Index n) const {
    if (!(beta >= 0.0)) throw ValidationError("transaction cost beta must be non-negative");
    if (kind == CostKind::QuadraticMatrix) {
        check_square(b, n, "cost matrix B");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(b), Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()))
            throw ValidationError("cost matrix B must be positive semi-definite");
    }
}

void AllocationProblem::validate() const {
    const Eigen::Index n = mu.size();
    if (n < 1) throw ValidationError("allocation problem has no assets");
    check_square(sigma, n, "Sigma");
    if (!(gamma > 0.0)) throw ValidationError("risk aversion gamma must be positive");
    if (omega_plus.size() != n) throw ShapeError("omega_plus has the wrong length");
    if (std::abs(omega_plus.sum() - 1.0) > 1e-10) throw ValidationError("omega_plus must sum to 1");
    cost.validate(n);
}

Eigen::MatrixXd a_matrix(const Eigen::MatrixXd& sigma) {
    const Eigen::Index n = sigma.rows();
    const Eigen::MatrixXd inv = solve_checked(sigma, Eigen::MatrixXd::Identity(n, n), "Sigma");
    const Eigen::VectorXd si = inv * ones(n);
    return inv - si * si.transpose() / si.sum();
}

Eigen::VectorXd gmv_weights(const Eigen::MatrixXd& sigma) {
    const Eigen::VectorXd si = solve_checked(sigma, ones(sigma.rows()), "Sigma");
    return si / si.sum();
}

Eigen::VectorXd efficient_weights(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, double gamma) {
    const Eigen::Index n = mu.size();
    check_square(sigma, n, "Sigma");
    if (!(gamma > 0.0)) throw ValidationError("risk aversion gamma must be positive");
    Eigen::MatrixXd rhs(n, 2);
    rhs.col(0) = ones(n);
    rhs.col(1) = mu;
    const Eigen::MatrixXd x = solve_checked(sigma, rhs, "Sigma");
    const double a = x.col(0).sum();
    const Eigen::VectorXd mvp = x.col(0) / a;
    const Eigen::VectorXd tilt = x.col(1) - x.col(0) * (x.col(1).sum() / a);
    return tilt / gamma + mvp;
}

Eigen::VectorXd solve_l2(const AllocationProblem& p) {
    p.validate();
    const double beta = p.cost.beta;
    const Eigen::Index n = p.mu.size();
    Eigen::MatrixXd s = p.sigma;
    s.diagonal().array() += beta / p.gamma;
    (void)n;
    return efficient_weights(p.mu + beta * p.omega_plus, s, p.gamma);
}

Eigen::VectorXd solve_quadratic_matrix(const AllocationProblem& p) {
    p.validate();
    const Eigen::Index n = p.mu.size();
    const Eigen::MatrixXd& b = p.cost.b;
    check_square(b, n, "cost matrix B");
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n + 1, n + 1);
    k.topLeftCorner(n, n) = p.gamma * p.sigma + 2.0 * b;
    k.topRightCorner(n, 1) = -ones(n);
    k.bottomLeftCorner(1, n) = ones(n).transpose();
    Eigen::VectorXd rhs(n + 1);
    rhs.head(n) = p.mu + 2.0 * b * p.omega_plus;
    rhs(n) = 1.0;
    (void)solve_checked(k.topLeftCorner(n, n), ones(n), "gamma Sigma + 2B");
    const Eigen::MatrixXd sol = solve_checked(k, rhs, "bordered KKT matrix");
    return sol.col(0).head(n);
}

Eigen::VectorXd solve_vol_proportional(const AllocationProblem& p) {
    p.validate();
    const double beta = p.cost.beta;
    const Eigen::VectorXd eff = efficient_weights(p.mu, p.sigma, p.gamma + beta);
    const Eigen::VectorXd mvp = gmv_weights(p.sigma);
    return eff + (beta / (beta + p.gamma)) * (p.omega_plus - mvp);
}

L1Solution solve_l1_qp(const Eigen::MatrixXd& p_in, const Eigen::VectorXd& q, double kappa,
                       const Eigen::VectorXd& omega_plus, const L1Options& opt) {
    const Eigen::Index n = q.size();
    check_square(p_in, n, "P");
    if (omega_plus.size() != n) throw ShapeError("omega_plus has the wrong length");
    if (!(kappa >= 0.0)) throw ValidationError("L1 cost weight must be non-negative");

    L1Solution sol;
    Eigen::MatrixXd p = symmetrize(p_in);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p, Eigen::EigenvaluesOnly);
    double lmax = es.eigenvalues().maxCoeff();
    const double lmin = es.eigenvalues().minCoeff();
    if (lmin <= 1e-14 * std::max(lmax, 0.0)) {
        p.diagonal().array() += opt.ridge;
        lmax += opt.ridge;
        sol.ridge_applied = true;
    }
    const double alpha = 1.0 / lmax;
    const double tau = alpha * kappa;

    Eigen::VectorXd delta = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd y = delta;
    double t = 1.0;
    Eigen::VectorXd best = omega_plus;
    double best_res = std::numeric_limits<double>::infinity();

    auto finish = [&](const Eigen::VectorXd& w, int it, bool polished) {
        const Certificate c = certify(p, q, kappa, omega_plus, w, opt.tol);
        sol.weights = w;
        sol.subgradient = c.g;
        sol.lagrange_multiplier = c.lambda;
        sol.kkt_residual = c.residual;
        sol.iterations = it;
        sol.polished = polished;
        return sol;
    };

    // Not trading is optimal whenever it already satisfies the optimality conditions.
    if (kappa > 0.0 && certify(p, q, kappa, omega_plus, omega_plus, opt.tol).residual <= opt.tol)
        return finish(omega_plus, 0, false);

    for (int it = 1; it <= opt.max_iter; ++it) {
        const Eigen::VectorXd grad = p * (omega_plus + y) - q;
        const Eigen::VectorXd v = y - alpha * grad;
        const Eigen::VectorXd d_new = soft(v - Eigen::VectorXd::Constant(n, shift_for_sum(v, tau, 0.0)), tau);

        if ((y - d_new).dot(d_new - delta) > 0.0) {
            t = 1.0;
            y = d_new;
        } else {
            const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            y = d_new + ((t - 1.0) / t_new) * (d_new - delta);
            t = t_new;
        }
        delta = d_new;

        const Eigen::VectorXd w = omega_plus + delta;
        const Certificate c = certify(p, q, kappa, omega_plus, w, opt.tol);
        if (c.residual < best_res) {
            best_res = c.residual;
            best = w;
        }
        const bool try_polish = opt.polish_every > 0 && (it == 1 || it % opt.polish_every == 0);
        if (try_polish || c.residual <= opt.tol) {
            Eigen::VectorXd wp;
            if (polish_l1(p, q, kappa, omega_plus, delta, wp)) {
                const Certificate cp = certify(p, q, kappa, omega_plus, wp, opt.tol);
                if (cp.residual <= opt.tol && cp.residual <= c.residual) return finish(wp, it, true);
            }
        }
        if (c.residual <= opt.tol) return finish(w, it, false);
    }
    throw IterationError("solve_l1: no convergence within " + std::to_string(opt.max_iter) + " iterations", best,
                         best_res);
}

L1Solution solve_l1(const AllocationProblem& p, const L1Options& opt) {
    p.validate();
    return solve_l1_qp(p.gamma * p.sigma, p.mu, p.cost.beta, p.omega_plus, opt);
}

Eigen::MatrixXd sigma_l1_equivalent(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& g, double beta, double gamma) {
    const Eigen::Index n = g.size();
    check_square(sigma, n, "Sigma");
    const Eigen::VectorXd i = ones(n);
    return sigma + (beta / gamma) * (g * i.transpose() + i * g.transpose());
}

Eigen::VectorXd solve_allocation(const AllocationProblem& p, const L1Options& opt) {
    switch (p.cost.kind) {
        case CostKind::None:
            p.validate();
            return efficient_weights(p.mu, p.sigma, p.gamma);
        case CostKind::L1: return solve_l1(p, opt).weights;
        case CostKind::L2: return solve_l2(p);
        case CostKind::QuadraticMatrix: return solve_quadratic_matrix(p);
        case CostKind::VolProportional: return solve_vol_proportional(p);
    }
    throw ConfigError("unknown cost kind");
}

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
    const Eigen::Index n = v.size();
    std::vector<double> u(v.data(), v.data() + n);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cum = 0.0, theta = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        cum += u[static_cast<std::size_t>(k)];
        const double cand = (cum - 1.0) / static_cast<double>(k + 1);
        if (u[static_cast<std::size_t>(k)] - cand > 0.0) theta = cand;
    }
    return (v.array() - theta).cwiseMax(0.0).matrix();
}

Eigen::VectorXd project_gross_exposure(const Eigen::VectorXd& v, double theta, double* tau_out) {
    if (!(theta >= 1.0)) throw InfeasibleError("gross exposure bound must be at least 1");
    const Eigen::Index n = v.size();
    Eigen::VectorXd w0 = v.array() + (1.0 - v.sum()) / static_cast<double>(n);
    if (tau_out) *tau_out = 0.0;
    if (w0.lpNorm<1>() <= theta) return w0;

    auto at = [&](double tau) {
        const double sh = shift_for_sum(v, tau, 1.0);
        return soft(v - Eigen::VectorXd::Constant(n, sh), tau);
    };
    double lo = 0.0;
    double hi = v.maxCoeff() - v.minCoeff() + 1e-12;
    while (at(hi).lpNorm<1>() > theta) hi *= 2.0;
    for (int k = 0; k < 200 && hi - lo > 1e-16 * (1.0 + hi); ++k) {
        const double mid = 0.5 * (lo + hi);
        if (at(mid).lpNorm<1>() > theta) lo = mid;
        else hi = mid;
    }
    if (tau_out) *tau_out = hi;
    return at(hi);
}

namespace {

template <typename Project>
GmvSolution projected_gmv(const Eigen::MatrixXd& sigma, Project project, const GmvOptions& opt,
                          const std::function<bool(Eigen::VectorXd&, GmvSolution&)>& polish, double* last_tau) {
    const Eigen::Index n = sigma.rows();
    const double lmax = largest_eigenvalue(sigma);
    if (!(lmax > 0.0)) throw PsdError("gmv: covariance has no positive eigenvalue");
    const double alpha = 1.0 / lmax;
    Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    Eigen::VectorXd y = w;
    double t = 1.0;
    GmvSolution sol;
    for (int it = 1; it <= opt.max_iter; ++it) {
        const Eigen::VectorXd w_new = project(y - alpha * (sigma * y));
        const double step = (w_new - w).cwiseAbs().maxCoeff();
        if ((y - w_new).dot(w_new - w) > 0.0) {
            t = 1.0;
            y = w_new;
        } else {
            const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            y = w_new + ((t - 1.0) / t_new) * (w_new - w);
            t = t_new;
        }
        w = w_new;
        sol.iterations = it;
        if (polish && (it % 10 == 0 || step <= opt.tol)) {
            Eigen::VectorXd wp = w;
            if (polish(wp, sol)) {
                sol.weights = wp;
                return sol;
            }
        }
        if (step <= opt.tol) {
            sol.weights = w;
            if (last_tau) sol.exposure_multiplier = *last_tau / alpha;
            const Eigen::VectorXd g = sigma * w;
            sol.budget_multiplier = g.dot(w);
            return sol;
        }
    }
    throw IterationError("gmv: no convergence within " + std::to_string(opt.max_iter) + " iterations", w,
                         std::numeric_limits<double>::quiet_NaN());
}

}  // namespace

GmvSolution gmv(const Eigen::MatrixXd& sigma, const GmvConstraint& c, const GmvOptions& opt) {
    const Eigen::Index n = sigma.rows();
    check_square(sigma, n, "Sigma");
    if (n < 1) throw ValidationError("gmv: no assets");
    switch (c.kind) {
        case GmvKind::Unconstrained: {
            const Eigen::VectorXd si = solve_checked(sigma, ones(n), "Sigma");
            GmvSolution sol;
            sol.weights = si / si.sum();
            sol.budget_multiplier = 1.0 / si.sum();
            return sol;
        }
        case GmvKind::NoShort: {
            auto polish = [&](Eigen::VectorXd& w, GmvSolution& sol) {
                std::vector<Eigen::Index> s;
                for (Eigen::Index i = 0; i < n; ++i)
                    if (w(i) > 0.0) s.push_back(i);
                const auto m = static_cast<Eigen::Index>(s.size());
                Eigen::MatrixXd sub(m, m);
                for (Eigen::Index a = 0; a < m; ++a)
                    for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = sigma(s[a], s[b]);
                Eigen::PartialPivLU<Eigen::MatrixXd> lu(sub);
                if (!(lu.rcond() > kSingularRcond)) return false;
                const Eigen::VectorXd x = lu.solve(Eigen::VectorXd::Ones(m));
                const double total = x.sum();
                if (!(total > 0.0)) return false;
                Eigen::VectorXd cand = Eigen::VectorXd::Zero(n);
                for (Eigen::Index a = 0; a < m; ++a) {
                    if (!(x(a) > 0.0)) return false;
                    cand(s[a]) = x(a) / total;
                }
                const double eta = 1.0 / total;
                const Eigen::VectorXd g = sigma * cand;
                for (Eigen::Index i = 0; i < n; ++i)
                    if (cand(i) == 0.0 && g(i) < eta - 1e-12 * std::abs(eta)) return false;
                w = cand;
                sol.budget_multiplier = eta;
                return true;
            };
            return projected_gmv(sigma, project_simplex, opt, polish, nullptr);
        }
        case GmvKind::GrossExposure: {
            double tau = 0.0;
            auto proj = [&](const Eigen::VectorXd& v) { return project_gross_exposure(v, c.theta, &tau); };
            return projected_gmv(sigma, proj, opt, nullptr, &tau);
        }
    }
    throw ConfigError("unknown gmv constraint");
}

std::vector<Eigen::VectorXd> long_run_iterate(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, double gamma,
                                              double beta, const Eigen::VectorXd& omega0, int periods) {
    const Eigen::Index n = mu.size();
    check_square(sigma, n, "Sigma");
    if (!(gamma > 0.0) || !(beta >= 0.0)) throw ValidationError("long_run_iterate: need gamma > 0 and beta >= 0");
    if (periods < 0) throw ValidationError("long_run_iterate: periods must be non-negative");
    Eigen::MatrixXd s = sigma;
    s.diagonal().array() += beta / gamma;
    const Eigen::MatrixXd a = a_matrix(s);
    const Eigen::VectorXd c = a * mu / gamma + gmv_weights(s);
    const Eigen::MatrixXd b = (beta / gamma) * a;
    std::vector<Eigen::VectorXd> path;
    path.reserve(static_cast<std::size_t>(periods) + 1);
    path.push_back(omega0);
    for (int k = 0; k < periods; ++k) path.push_back(c + b * path.back());
    return path;
}

double l2_contraction_norm(const Eigen::MatrixXd& sigma, double gamma, double beta) {
    Eigen::MatrixXd s = sigma;
    s.diagonal().array() += beta / gamma;
    return ((beta / gamma) * a_matrix(s)).norm();
}

double beta_star(const Eigen::MatrixXd& sigma, double gamma, double rel_tol, double cap) {
    const Eigen::Index n = sigma.rows();
    check_square(sigma, n, "Sigma");
    if (!(gamma > 0.0)) throw ValidationError("beta_star: gamma must be positive");
    if (n <= 2) return std::numeric_limits<double>::infinity();
    if (l2_contraction_norm(sigma, gamma, cap) < 1.0) return std::numeric_limits<double>::infinity();
    double lo = 0.0, hi = cap;
    for (int k = 0; k < 400 && hi - lo > rel_tol * hi; ++k) {
        const double mid = 0.5 * (lo + hi);
        if (l2_contraction_norm(sigma, gamma, mid) < 1.0) lo = mid;
        else hi = mid;
    }
    return lo;
}

}  // namespace costaware
