#include "costaware/expected_utility.hpp"

#include "costaware/errors.hpp"
#include "costaware/linalg.hpp"

#include <cmath>
#include <limits>
#include <optional>

namespace costaware {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool is_log_utility(double gamma) { return std::abs(1.0 - gamma) < 1e-12; }

// Gradient and Hessian of a smooth cost nu(w) with respect to w.
void smooth_cost_derivatives(const TxCostModel& cost, const Eigen::VectorXd& w, const Eigen::VectorXd& w_plus,
                             const Eigen::MatrixXd* sigma, Eigen::VectorXd& grad, Eigen::MatrixXd& hess) {
    const Eigen::Index n = w.size();
    const Eigen::VectorXd d = w - w_plus;
    switch (cost.kind) {
        case CostKind::None:
            grad = Eigen::VectorXd::Zero(n);
            hess = Eigen::MatrixXd::Zero(n, n);
            return;
        case CostKind::L2:
            grad = cost.beta * d;
            hess = cost.beta * Eigen::MatrixXd::Identity(n, n);
            return;
        case CostKind::QuadraticMatrix:
            hess = cost.b + cost.b.transpose();
            grad = hess * d;
            return;
        case CostKind::VolProportional:
            if (!sigma) throw ConfigError("vol-proportional cost needs the covariance matrix");
            hess = cost.beta * *sigma;
            grad = hess * d;
            return;
        case CostKind::L1: break;
    }
    throw ValidationError("smooth_cost_derivatives: L1 cost is not smooth");
}

// Projection of a full gradient onto the budget plane, in the coordinates
// w = e_N + Z x with Z = [I; -1'].
Eigen::VectorXd reduce(const Eigen::VectorXd& g) {
    const Eigen::Index n = g.size();
    return g.head(n - 1).array() - g(n - 1);
}

Eigen::MatrixXd reduce(const Eigen::MatrixXd& h) {
    const Eigen::Index n = h.rows();
    const Eigen::Index m = n - 1;
    Eigen::MatrixXd r = h.topLeftCorner(m, m);
    r.colwise() -= h.topRightCorner(m, 1).col(0);
    r.rowwise() -= h.bottomLeftCorner(1, m).row(0);
    r.array() += h(n - 1, n - 1);
    return r;
}

Eigen::VectorXd expand(const Eigen::VectorXd& x) {
    const Eigen::Index m = x.size();
    Eigen::VectorXd d(m + 1);
    d.head(m) = x;
    d(m) = -x.sum();
    return d;
}

struct Evaluation {
    double value = kNegInf;
    Eigen::VectorXd wealth;
};

Evaluation evaluate(const Eigen::MatrixXd& draws, const Eigen::VectorXd& w, double gamma,
                    const Eigen::VectorXd& w_plus, const TxCostModel& cost, const Eigen::MatrixXd* sigma) {
    Evaluation e;
    e.wealth = (draws * w).array() + (1.0 - cost.cost(w, w_plus, sigma));
    if ((e.wealth.array() <= 0.0).any()) return e;
    std::vector<double> u(static_cast<std::size_t>(e.wealth.size()));
    for (Eigen::Index j = 0; j < e.wealth.size(); ++j) u[static_cast<std::size_t>(j)] = power_utility(e.wealth(j), gamma);
    e.value = pairwise_sum(u) / static_cast<double>(u.size());
    return e;
}

EuSolution newton(const Eigen::MatrixXd& draws, double gamma, const Eigen::VectorXd& w_plus, const TxCostModel& cost,
                  const Eigen::VectorXd& start, const EuOptions& opt, const Eigen::MatrixXd* sigma) {
    const double jd = static_cast<double>(draws.rows());
    EuSolution sol;
    sol.weights = start;
    Evaluation cur = evaluate(draws, start, gamma, w_plus, cost, sigma);
    sol.objective = cur.value;
    for (int it = 0; it < opt.max_iter; ++it) {
        Eigen::VectorXd cg;
        Eigen::MatrixXd ch;
        smooth_cost_derivatives(cost, sol.weights, w_plus, sigma, cg, ch);
        const Eigen::ArrayXd up = cur.wealth.array().pow(-gamma);
        const Eigen::ArrayXd upp = -gamma * up / cur.wealth.array();
        const Eigen::MatrixXd x = draws.rowwise() - cg.transpose();  // dW/dw per draw
        const Eigen::VectorXd grad = x.transpose() * up.matrix() / jd;
        Eigen::MatrixXd hess = x.transpose() * (x.array().colwise() * upp).matrix() / jd - (up.sum() / jd) * ch;
        const Eigen::VectorXd gx = reduce(grad);
        sol.residual = gx.size() ? gx.cwiseAbs().maxCoeff() : 0.0;
        sol.iterations = it;
        if (sol.residual <= opt.tol) return sol;

        Eigen::MatrixXd negh = -reduce(hess);
        const double scale = std::max(negh.diagonal().cwiseAbs().maxCoeff(), 1e-300);
        double damp = 0.0;
        Eigen::VectorXd step;
        for (int k = 0; k < 40; ++k) {
            Eigen::MatrixXd m = negh;
            m.diagonal().array() += damp;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
            if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0.0).all()) {
                step = ldlt.solve(gx);
                if (step.allFinite()) break;
            }
            damp = damp == 0.0 ? 1e-12 * scale : damp * 10.0;
            step.resize(0);
        }
        if (step.size() == 0) step = gx / scale;

        const Eigen::VectorXd d = expand(step);
        const double slope = gx.dot(step);
        double s = 1.0;
        bool moved = false;
        for (int k = 0; k < 60; ++k, s *= 0.5) {
            const Eigen::VectorXd trial = sol.weights + s * d;
            Evaluation e = evaluate(draws, trial, gamma, w_plus, cost, sigma);
            if (e.value >= cur.value + 1e-4 * s * slope) {
                sol.weights = trial;
                cur = std::move(e);
                moved = true;
                break;
            }
        }
        sol.objective = cur.value;
        // No ascent along the Newton direction: stop at the current point.
        if (!moved) {
            sol.iterations = it + 1;
            return sol;
        }
    }
    throw IterationError("expected_utility_weights: Newton iteration limit reached", sol.weights, sol.residual);
}

EuSolution successive_l1(const Eigen::MatrixXd& draws, double gamma, const Eigen::VectorXd& w_plus,
                         const TxCostModel& cost, const Eigen::VectorXd& start, const EuOptions& opt) {
    const Eigen::Index n = start.size();
    const double jd = static_cast<double>(draws.rows());
    EuSolution sol;
    sol.weights = start;
    Evaluation cur = evaluate(draws, start, gamma, w_plus, cost, nullptr);
    sol.objective = cur.value;
    double prox = 0.0;
    for (int it = 0; it < opt.max_iter; ++it) {
        const Eigen::ArrayXd up = cur.wealth.array().pow(-gamma);
        const Eigen::ArrayXd upp = -gamma * up / cur.wealth.array();
        const Eigen::VectorXd m = draws.transpose() * up.matrix() / jd;
        Eigen::MatrixXd p = -(draws.transpose() * (draws.array().colwise() * upp).matrix()) / jd;
        const double a = up.sum() / jd;
        const double floor = 1e-10 * std::max(p.trace() / static_cast<double>(n), 1e-12);
        p.diagonal().array() += std::max(prox, floor);
        const Eigen::VectorXd q = m + p * sol.weights;
        const L1Solution sub = solve_l1_qp(p, q, a * cost.beta, w_plus, opt.l1);
        const Eigen::VectorXd d = sub.weights - sol.weights;
        sol.residual = d.cwiseAbs().maxCoeff();
        sol.iterations = it;
        if (sol.residual <= opt.tol) return sol;

        bool moved = false;
        double s = 1.0;
        for (int k = 0; k < 40; ++k, s *= 0.5) {
            const Eigen::VectorXd trial = sol.weights + s * d;
            Evaluation e = evaluate(draws, trial, gamma, w_plus, cost, nullptr);
            if (e.value > cur.value) {
                sol.weights = trial;
                cur = std::move(e);
                moved = true;
                break;
            }
        }
        sol.objective = cur.value;
        if (moved) {
            prox = 0.0;
        } else {
            // The quadratic model overshoots: shrink its trust region.
            prox = prox == 0.0 ? std::max(p.trace() / static_cast<double>(n), 1e-12) : prox * 10.0;
            if (prox > 1e12) return sol;
        }
    }
    throw IterationError("expected_utility_weights: iteration limit reached", sol.weights, sol.residual);
}

}  // namespace

double power_utility(double wealth, double gamma) {
    if (!(wealth > 0.0)) return kNegInf;
    const double lw = std::log(wealth);
    if (is_log_utility(gamma)) return lw;
    return std::expm1((1.0 - gamma) * lw) / (1.0 - gamma);
}

double expected_utility(const Eigen::MatrixXd& draws, const Eigen::VectorXd& w, double gamma,
                        const Eigen::VectorXd& omega_plus, const TxCostModel& cost, const Eigen::MatrixXd* sigma) {
    if (draws.cols() != w.size() || omega_plus.size() != w.size())
        throw ShapeError("expected_utility: draws, weights and omega_plus disagree in dimension");
    return evaluate(draws, w, gamma, omega_plus, cost, sigma).value;
}

EuSolution expected_utility_weights(const Eigen::MatrixXd& draws, double gamma, const Eigen::VectorXd& omega_plus,
                                    const TxCostModel& cost, const EuOptions& opt, const Eigen::MatrixXd* sigma) {
    const Eigen::Index n = omega_plus.size();
    if (draws.cols() != n) throw ShapeError("expected_utility_weights: draws have the wrong number of assets");
    if (draws.rows() < 1) throw ValidationError("expected_utility_weights: no draws");
    if (!(gamma > 0.0)) throw ValidationError("expected_utility_weights: gamma must be positive");
    if (std::abs(omega_plus.sum() - 1.0) > 1e-10) throw ValidationError("omega_plus must sum to 1");
    cost.validate(n);
    if (n == 1) {
        EuSolution one;
        one.weights = Eigen::VectorXd::Ones(1);
        one.objective = expected_utility(draws, one.weights, gamma, omega_plus, cost, sigma);
        if (!std::isfinite(one.objective)) throw InfeasibleError("expected_utility_weights: ruin on some draw");
        return one;
    }

    std::vector<Eigen::VectorXd> starts{omega_plus};
    if (opt.second_start && draws.rows() > n) {
        const Eigen::MatrixXd centred = draws.rowwise() - draws.colwise().mean();
        const Eigen::MatrixXd s = centred.transpose() * centred / static_cast<double>(draws.rows() - 1);
        try {
            starts.push_back(gmv_weights(s));
        } catch (const LinAlgError&) {
        }
    }

    std::optional<EuSolution> best;
    std::optional<IterationError> last_failure;
    for (const auto& s : starts) {
        if (!std::isfinite(evaluate(draws, s, gamma, omega_plus, cost, sigma).value)) continue;
        try {
            EuSolution sol = cost.kind == CostKind::L1 ? successive_l1(draws, gamma, omega_plus, cost, s, opt)
                                                       : newton(draws, gamma, omega_plus, cost, s, opt, sigma);
            if (!best || sol.objective > best->objective) best = std::move(sol);
        } catch (const IterationError& e) {
            last_failure = e;
        }
    }
    if (best) return *best;
    if (last_failure) throw *last_failure;
    throw InfeasibleError("expected_utility_weights: every start ruins wealth on some draw");
}

}  // namespace costaware
