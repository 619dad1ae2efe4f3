#include "costaware/pooling.hpp"

#include "costaware/errors.hpp"
#include "costaware/linalg.hpp"
#include "csv_util.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>

namespace costaware {

namespace {

void check_window(const Eigen::MatrixXd& w) {
    if (w.rows() < 1 || w.cols() < 1) throw ValidationError("pooling: empty score window");
    for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index k = 0; k < w.cols(); ++k)
            if (!std::isfinite(w(i, k)))
                throw DataError("pooling: non-positive or non-finite density in window row " + std::to_string(i) +
                                ", model " + std::to_string(k));
}

// Gradient of the objective: g_k = sum_i p_ik / sum_l c_l p_il.
Eigen::VectorXd pool_gradient(const Eigen::MatrixXd& lw, const Eigen::VectorXd& c) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(c.size());
    for (Eigen::Index i = 0; i < lw.rows(); ++i) {
        const double lm = mixture_log_score(c, lw.row(i).transpose());
        g += (lw.row(i).array() - lm).exp().matrix().transpose();
    }
    return g;
}

// Simplex KKT residual. At an optimum g_k <= n for all k with equality on
// the support (n = number of rows, since c'g = n for every c).
double kkt_residual(const Eigen::VectorXd& g, const Eigen::VectorXd& c, double n) {
    double r = 0.0;
    for (Eigen::Index k = 0; k < c.size(); ++k) {
        const double rel = g(k) / n - 1.0;
        r = std::max(r, std::max(rel, 0.0));
        r = std::max(r, c(k) * std::abs(rel));
    }
    return r;
}

// Objective differences below this are indistinguishable from summation error.
double roundoff(double f) { return 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f)); }

// Newton steps on the face of the simplex spanned by the current support.
// Coordinates that would turn negative are dropped from the support.
Eigen::VectorXd newton_polish(const Eigen::MatrixXd& lw, Eigen::VectorXd c, double n, double tol) {
    const Eigen::Index k = c.size();
    for (int it = 0; it < 100; ++it) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(k);
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(k, k);
        for (Eigen::Index i = 0; i < lw.rows(); ++i) {
            const double lm = mixture_log_score(c, lw.row(i).transpose());
            const Eigen::VectorXd q = (lw.row(i).array() - lm).exp().matrix().transpose();
            g += q;
            h.noalias() -= q * q.transpose();
        }
        if (kkt_residual(g, c, n) <= tol) break;
        std::vector<Eigen::Index> s;
        for (Eigen::Index q = 0; q < k; ++q)
            if (c(q) > 0.0) s.push_back(q);
        const Eigen::Index m = static_cast<Eigen::Index>(s.size());
        if (m < 2) break;
        // Maximise g'd + d'Hd/2 subject to sum(d) = 0 over the support.
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(m + 1, m + 1);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + 1);
        for (Eigen::Index a = 0; a < m; ++a) {
            for (Eigen::Index b = 0; b < m; ++b) kkt(a, b) = h(s[a], s[b]);
            kkt(a, m) = kkt(m, a) = 1.0;
            rhs(a) = -g(s[a]);
        }
        const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
        if (!sol.allFinite()) break;
        double step = 1.0;
        Eigen::Index blocking = -1;
        for (Eigen::Index a = 0; a < m; ++a)
            if (sol(a) < 0.0 && c(s[a]) + step * sol(a) < 0.0) {
                step = -c(s[a]) / sol(a);
                blocking = a;
            }
        const double f0 = pool_objective(lw, c);
        Eigen::VectorXd cn = c;
        for (Eigen::Index a = 0; a < m; ++a) cn(s[a]) = std::max(0.0, c(s[a]) + step * sol(a));
        if (blocking >= 0) cn(s[blocking]) = 0.0;
        cn /= cn.sum();
        if (!(pool_objective(lw, cn) >= f0 - roundoff(f0))) break;
        c = cn;
    }
    return c;
}

}  // namespace

void ScorePanel::validate() const {
    if (log_density.rows() != static_cast<Eigen::Index>(dates.size()) ||
        log_density.cols() != static_cast<Eigen::Index>(models.size()))
        throw ShapeError("score panel: dimensions do not match dates and models");
}

double mixture_log_score(const Eigen::VectorXd& c, const Eigen::VectorXd& log_density) {
    if (c.size() != log_density.size()) throw ShapeError("mixture_log_score: dimension mismatch");
    std::vector<double> terms;
    terms.reserve(static_cast<std::size_t>(c.size()));
    for (Eigen::Index k = 0; k < c.size(); ++k) {
        if (c(k) < 0.0) throw ValidationError("mixture_log_score: negative weight");
        if (c(k) > 0.0) {
            if (!std::isfinite(log_density(k))) throw DataError("mixture_log_score: non-positive density");
            terms.push_back(std::log(c(k)) + log_density(k));
        }
    }
    if (terms.empty()) throw ValidationError("mixture_log_score: all weights are zero");
    if (terms.size() == 1) return terms.front();
    return log_sum_exp(terms);
}

double pool_objective(const Eigen::MatrixXd& log_window, const Eigen::VectorXd& c) {
    std::vector<double> s(static_cast<std::size_t>(log_window.rows()));
    for (Eigen::Index i = 0; i < log_window.rows(); ++i)
        s[static_cast<std::size_t>(i)] = mixture_log_score(c, log_window.row(i).transpose());
    return pairwise_sum(s);
}

PoolWeights optimal_pool(const Eigen::MatrixXd& lw, const PoolOptions& opt) {
    check_window(lw);
    const Eigen::Index k = lw.cols();
    const double n = static_cast<double>(lw.rows());
    PoolWeights out;
    if (k == 1) {
        out.c = Eigen::VectorXd::Ones(1);
        out.objective = pool_objective(lw, out.c);
        return out;
    }
    Eigen::VectorXd c = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
    double f = pool_objective(lw, c);
    double eta = 1.0;
    int it = 0;
    Eigen::VectorXd g = pool_gradient(lw, c);
    for (; it < opt.max_iter; ++it) {
        // The Newton polish below finishes once the support has settled.
        if (kkt_residual(g, c, n) <= std::max(opt.tol, 1e-5)) break;
        const Eigen::VectorXd gs = g / n;  // scale-free step
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            Eigen::ArrayXd e = eta * (gs.array() - gs.maxCoeff());
            Eigen::VectorXd cn = (c.array() * e.exp()).matrix();
            cn /= cn.sum();
            const double fn = pool_objective(lw, cn);
            if (fn >= f + 1e-4 * g.dot(cn - c)) {
                accepted = fn >= f;
                if (accepted) {
                    c = cn;
                    f = fn;
                }
                break;
            }
            eta *= 0.5;
        }
        if (!accepted) break;
        eta *= 2.0;
        g = pool_gradient(lw, c);
    }

    // Exponentiated gradient only approaches corners asymptotically; compare
    // against the support-trimmed point and every vertex.
    std::vector<Eigen::VectorXd> candidates{c};
    {
        Eigen::VectorXd support = c;
        for (Eigen::Index q = 0; q < k; ++q)
            if (support(q) < 1e-9 && g(q) < n) support(q) = 0.0;
        candidates.push_back(newton_polish(lw, support / support.sum(), n, opt.tol));
    }
    Eigen::VectorXd trimmed = c;
    for (Eigen::Index q = 0; q < k; ++q)
        if (trimmed(q) < 1e-9 && g(q) < n) trimmed(q) = 0.0;
    if (trimmed.sum() > 0.0) candidates.push_back(trimmed / trimmed.sum());
    for (Eigen::Index q = 0; q < k; ++q) candidates.push_back(Eigen::VectorXd::Unit(k, q));
    // Highest objective wins; ties within round-off go to the smaller KKT residual.
    std::vector<double> obj, res;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& cand : candidates) {
        obj.push_back(pool_objective(lw, cand));
        res.push_back(kkt_residual(pool_gradient(lw, cand), cand, n));
        best = std::max(best, obj.back());
    }
    std::size_t pick = candidates.size();
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (obj[i] >= best - roundoff(best) && (pick == candidates.size() || res[i] < res[pick])) pick = i;
    out.c = candidates[pick];
    out.objective = obj[pick];
    out.kkt_residual = res[pick];
    out.iterations = it;
    return out;
}

PoolWeights optimal_pool(const ScorePanel& panel, Eigen::Index t, Eigen::Index h_c, const PoolOptions& opt) {
    panel.validate();
    if (h_c < 0 || t < h_c) throw RangeError("optimal_pool: need t >= h_c");
    if (t >= panel.log_density.rows()) throw RangeError("optimal_pool: t beyond the score panel");
    return optimal_pool(panel.log_density.middleRows(t - h_c, h_c + 1), opt);
}

PredictiveDraws mixture_predict(std::span<const PredictiveDraws> components, const Eigen::VectorXd& c, Eigen::Index j,
                                std::uint64_t seed) {
    if (components.empty() || static_cast<Eigen::Index>(components.size()) != c.size())
        throw ShapeError("mixture_predict: one weight per component required");
    if (j < 1) throw ValidationError("mixture_predict: need at least one draw");
    if ((c.array() < 0.0).any() || std::abs(c.sum() - 1.0) > 1e-10)
        throw ValidationError("mixture_predict: weights must lie on the simplex");
    const Eigen::Index n = components.front().n_assets();
    for (const auto& comp : components) {
        if (comp.n_assets() != n) throw ShapeError("mixture_predict: components disagree on N");
        if (comp.n_draws() < 1) throw ValidationError("mixture_predict: empty component");
    }
    PredictiveDraws out;
    out.model = ModelTag::Mixture;
    out.date = components.front().date;
    out.draws.resize(j, n);
    std::discrete_distribution<std::size_t> pick_model(c.data(), c.data() + c.size());
    for (Eigen::Index c0 = 0; c0 < j; c0 += kDrawChunk) {
        Engine eng = make_engine(seed, static_cast<std::uint64_t>(c0 / kDrawChunk));
        const Eigen::Index c1 = std::min(j, c0 + kDrawChunk);
        for (Eigen::Index row = c0; row < c1; ++row) {
            const auto& comp = components[pick_model(eng)];
            std::uniform_int_distribution<Eigen::Index> pick_row(0, comp.n_draws() - 1);
            out.draws.row(row) = comp.draws.row(pick_row(eng));
        }
    }
    for (const auto& comp : components) out.truncated = out.truncated || comp.truncated;
    return out;
}

void write_score_panel(const ScorePanel& p, std::ostream& out, const std::string& header_comment) {
    p.validate();
    if (!header_comment.empty()) out << "# " << header_comment << '\n';
    out << "date,model,log_density\n";
    for (std::size_t t = 0; t < p.dates.size(); ++t)
        for (std::size_t k = 0; k < p.models.size(); ++k)
            out << p.dates[t] << ',' << p.models[k] << ','
                << detail::format_double(p.log_density(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)))
                << '\n';
}

ScorePanel read_score_panel(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    std::map<std::string, std::map<std::string, double>> cells;
    std::vector<std::string> models;
    std::map<std::string, bool> seen_model;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::is_comment_or_blank(line)) continue;
        auto f = detail::split(line);
        if (!header) {
            if (f.size() != 3 || f[0] != "date" || f[1] != "model" || f[2] != "log_density")
                throw ParseError("expected header date,model,log_density", lineno);
            header = true;
            continue;
        }
        if (f.size() != 3) throw ParseError("expected 3 fields", lineno);
        const auto v = detail::parse_double(f[2]);
        if (!v) throw ParseError("malformed log density", lineno);
        const std::string date(f[0]), model(f[1]);
        if (!seen_model[model]) {
            seen_model[model] = true;
            models.push_back(model);
        }
        if (!cells[date].emplace(model, *v).second) throw ValidationError("duplicate score at line " + std::to_string(lineno));
    }
    if (cells.empty()) throw DataError("score panel: no data");
    ScorePanel p;
    p.models = models;
    p.log_density.resize(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(models.size()));
    Eigen::Index t = 0;
    for (const auto& [date, row] : cells) {
        p.dates.push_back(date);
        for (std::size_t k = 0; k < models.size(); ++k) {
            const auto it = row.find(models[k]);
            if (it == row.end()) throw ValidationError("score panel: missing " + models[k] + " on " + date);
            p.log_density(t, static_cast<Eigen::Index>(k)) = it->second;
        }
        ++t;
    }
    return p;
}

void write_pool_weights(std::span<const std::string> dates, std::span<const std::string> models,
                        std::span<const Eigen::VectorXd> weights, std::ostream& out, const std::string& header_comment) {
    if (dates.size() != weights.size()) throw ShapeError("write_pool_weights: one weight vector per date");
    if (!header_comment.empty()) out << "# " << header_comment << '\n';
    out << "date,model,weight\n";
    for (std::size_t t = 0; t < dates.size(); ++t) {
        if (static_cast<std::size_t>(weights[t].size()) != models.size())
            throw ShapeError("write_pool_weights: weight vector length differs from model count");
        for (std::size_t k = 0; k < models.size(); ++k)
            out << dates[t] << ',' << models[k] << ','
                << detail::format_double(weights[t](static_cast<Eigen::Index>(k))) << '\n';
    }
}

}  // namespace costaware
