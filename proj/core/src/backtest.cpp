#include "costaware/backtest.hpp"

#include "costaware/benchmark_rules.hpp"
#include "costaware/errors.hpp"
#include "costaware/linalg.hpp"
#include "costaware/random.hpp"
#include "csv_util.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <thread>

namespace costaware {

namespace {

constexpr double kTradingDays = 252.0;

std::string lower(std::string s) {
    for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

std::vector<std::string> split_colon(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(':', start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

double parse_number(const std::string& s, const std::string& context) {
    const auto v = detail::parse_double(s);
    if (!v) throw ConfigError("strategy '" + context + "': malformed number '" + s + "'");
    return *v;
}

Eigen::VectorXd equal_weights(Eigen::Index n) { return Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)); }

// Lazily computed inputs shared by every strategy on one day.
class DayInputs {
public:
    DayInputs(const BacktestData& data, const BacktestConfig& cfg, Eigen::Index t) : data_(data), cfg_(cfg), t_(t) {}

    const Eigen::MatrixXd& window() {
        if (!window_) window_ = data_.panel.returns.middleRows(t_ - cfg_.estimation_window, cfg_.estimation_window);
        return *window_;
    }
    const CovarianceEstimate& estimate(Estimator e) {
        auto& slot = e == Estimator::LedoitWolf ? lw_ : sample_;
        if (!slot)
            slot = e == Estimator::LedoitWolf ? lw_shrinkage(data_.panel, t_, cfg_.estimation_window)
                                              : sample_cov(data_.panel, t_, cfg_.estimation_window);
        return *slot;
    }
    const PredictiveDraws& draws(const Forecaster& f) {
        auto it = draws_.find(f.model());
        if (it == draws_.end())
            it = draws_.emplace(f.model(), f.draws(cfg_.draws, draw_seed(cfg_.seed, f.model(), t_))).first;
        return it->second;
    }

private:
    const BacktestData& data_;
    const BacktestConfig& cfg_;
    Eigen::Index t_;
    std::optional<Eigen::MatrixXd> window_;
    std::optional<CovarianceEstimate> sample_, lw_;
    std::map<ModelTag, PredictiveDraws> draws_;
};

Eigen::VectorXd market_weights(const BacktestData& data) {
    const Eigen::Index n = data.panel.n_assets();
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& a = data.panel.assets[static_cast<std::size_t>(i)];
        const auto it = data.caps.find(a);
        if (it == data.caps.end()) throw DataError("market strategy: no market cap for asset " + a);
        if (!(it->second > 0.0)) throw DataError("market strategy: non-positive market cap for asset " + a);
        w(i) = it->second;
    }
    return w / w.sum();
}

struct StrategyState {
    Eigen::VectorXd omega;  // weights traded on the previous evaluation day
    BacktestReport report;
};

Eigen::VectorXd target_weights(const Strategy& s, const Eigen::VectorXd& omega_plus, Eigen::Index e,
                               DayInputs& day, const std::map<ModelTag, Forecaster*>& forecasters,
                               const BacktestData& data, const BacktestConfig& cfg) {
    const Eigen::Index n = omega_plus.size();
    // The budget constraint leaves a single asset nothing to decide.
    if (n == 1) return Eigen::VectorXd::Ones(1);
    switch (s.kind) {
        case StrategyKind::Model: {
            const auto& draws = day.draws(*forecasters.at(s.model));
            TxCostModel cost = s.cost_aware ? cfg.ex_ante_cost() : TxCostModel::none();
            if (cost.beta == 0.0) cost = TxCostModel::none();
            return expected_utility_weights(draws.draws, cfg.gamma, omega_plus, cost, cfg.eu).weights;
        }
        case StrategyKind::Naive:
            return e % s.rebalance_every == 0 ? equal_weights(n) : omega_plus;
        case StrategyKind::Market:
            return e == 0 ? market_weights(data) : omega_plus;
        case StrategyKind::Mvp: return gmv(day.estimate(Estimator::LedoitWolf).matrix).weights;
        case StrategyKind::MvpNoShort:
            return gmv(day.estimate(Estimator::LedoitWolf).matrix, GmvConstraint::no_short()).weights;
        case StrategyKind::GrossExposure:
            return gmv(day.estimate(Estimator::LedoitWolf).matrix, GmvConstraint::gross_exposure(s.theta)).weights;
        case StrategyKind::TuZhou: return tu_zhou_weights(day.window(), cfg.gamma);
        case StrategyKind::KanZhou: return kan_zhou_weights(day.window(), cfg.gamma);
        case StrategyKind::Jorion: return jorion_weights(day.window(), cfg.gamma);
        case StrategyKind::PlugIn: {
            AllocationProblem p;
            p.mu = Eigen::VectorXd::Zero(n);
            p.sigma = day.estimate(s.estimator).matrix;
            p.gamma = cfg.gamma;
            p.omega_plus = omega_plus;
            p.cost = s.cost_aware ? cfg.ex_ante_cost() : TxCostModel::none();
            if (p.cost.beta == 0.0) p.cost = TxCostModel::none();
            return solve_allocation(p);
        }
    }
    throw ConfigError("unknown strategy kind");
}

}  // namespace

// ---------------------------------------------------------------------------
// Strategy

Strategy Strategy::parse(const std::string& text) {
    const auto parts = split_colon(std::string(detail::trim(text)));
    const std::string head = lower(parts[0]);
    Strategy s;
    auto arity = [&](std::size_t lo, std::size_t hi) {
        if (parts.size() < lo || parts.size() > hi) throw ConfigError("strategy '" + text + "': wrong number of fields");
    };
    auto nocost = [&](std::size_t i) {
        if (parts.size() > i) {
            if (lower(parts[i]) != "nocost") throw ConfigError("strategy '" + text + "': expected 'nocost'");
            s.cost_aware = false;
        }
    };
    if (head == "model") {
        arity(2, 3);
        s.kind = StrategyKind::Model;
        s.model = model_from_string(parts[1]);
        nocost(2);
    } else if (head == "naive") {
        arity(1, 2);
        s.kind = StrategyKind::Naive;
        if (parts.size() == 2) {
            if (lower(parts[1]) == "2m") {
                s.rebalance_every = kBimonthlyDays;
            } else {
                const auto d = detail::parse_int<long>(parts[1]);
                if (!d || *d < 1) throw ConfigError("strategy '" + text + "': rebalance interval must be a positive integer");
                s.rebalance_every = *d;
            }
        }
    } else if (head == "mvp") {
        arity(1, 1);
        s.kind = StrategyKind::Mvp;
    } else if (head == "mvp-noshort") {
        arity(1, 1);
        s.kind = StrategyKind::MvpNoShort;
    } else if (head == "gross") {
        arity(2, 2);
        s.kind = StrategyKind::GrossExposure;
        s.theta = parse_number(parts[1], text);
    } else if (head == "tuzhou") {
        arity(1, 1);
        s.kind = StrategyKind::TuZhou;
    } else if (head == "kanzhou") {
        arity(1, 1);
        s.kind = StrategyKind::KanZhou;
    } else if (head == "jorion") {
        arity(1, 1);
        s.kind = StrategyKind::Jorion;
    } else if (head == "market") {
        arity(1, 1);
        s.kind = StrategyKind::Market;
    } else if (head == "plugin") {
        arity(2, 3);
        s.kind = StrategyKind::PlugIn;
        const std::string e = lower(parts[1]);
        if (e == "sample") s.estimator = Estimator::Sample;
        else if (e == "lw") s.estimator = Estimator::LedoitWolf;
        else throw ConfigError("strategy '" + text + "': plug-in estimator must be Sample or LW");
        nocost(2);
    } else {
        throw ConfigError("unknown strategy '" + text + "'");
    }
    s.validate();
    return s;
}

std::string Strategy::name() const {
    switch (kind) {
        case StrategyKind::Model: return to_string(model) + (cost_aware ? "" : ":nocost");
        case StrategyKind::Naive:
            if (rebalance_every == 1) return "Naive";
            if (rebalance_every == kBimonthlyDays) return "Naive:2m";
            return "Naive:" + std::to_string(rebalance_every);
        case StrategyKind::Mvp: return "MVP";
        case StrategyKind::MvpNoShort: return "MVP-NoShort";
        case StrategyKind::GrossExposure: return "Gross:" + detail::format_double(theta);
        case StrategyKind::TuZhou: return "TuZhou";
        case StrategyKind::KanZhou: return "KanZhou";
        case StrategyKind::Jorion: return "Jorion";
        case StrategyKind::Market: return "Market";
        case StrategyKind::PlugIn:
            return std::string("PlugIn:") + (estimator == Estimator::LedoitWolf ? "LW" : "Sample") +
                   (cost_aware ? "" : ":nocost");
    }
    return "?";
}

void Strategy::validate() const {
    if (kind == StrategyKind::Naive && rebalance_every < 1) throw ConfigError("naive: rebalance interval must be positive");
    if (kind == StrategyKind::GrossExposure && !(theta >= 1.0))
        throw ConfigError("gross exposure bound must be at least 1");
    if (kind == StrategyKind::PlugIn && estimator != Estimator::Sample && estimator != Estimator::LedoitWolf)
        throw ConfigError("plug-in strategy supports the sample and Ledoit-Wolf estimators only");
}

std::vector<Strategy> parse_strategies(const std::string& comma_list) {
    std::vector<Strategy> out;
    for (auto f : detail::split(comma_list)) {
        const std::string s(detail::trim(f));
        if (!s.empty()) out.push_back(Strategy::parse(s));
    }
    if (out.empty()) throw ConfigError("no strategies given");
    return out;
}

// ---------------------------------------------------------------------------
// Config

TxCostModel BacktestConfig::ex_ante_cost() const { return TxCostModel{cost_kind, beta, {}}; }

TxCostModel BacktestConfig::ex_post_cost() const { return TxCostModel{cost_kind, beta_ex_post.value_or(beta), {}}; }

ForecastConfig BacktestConfig::forecast_config() const {
    ForecastConfig f = forecast;
    f.estimation_window = estimation_window;
    f.pooling_window = pooling_window;
    f.seed = seed;
    return f;
}

void BacktestConfig::validate() const {
    if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
    if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
    if (beta_ex_post && !(*beta_ex_post >= 0.0)) throw ConfigError("beta_ex_post must be non-negative");
    if (cost_kind != CostKind::L1 && cost_kind != CostKind::L2) throw ConfigError("cost_kind must be L1 or L2");
    if (estimation_window < 2) throw ConfigError("estimation_window must be at least 2");
    if (pooling_window < 1) throw ConfigError("pooling_window must be positive");
    if (warmup_days() < estimation_window) throw ConfigError("warmup must be at least estimation_window");
    if (!(trade_threshold >= 0.0)) throw ConfigError("trade_threshold must be non-negative");
    if (draws < 1) throw ConfigError("draws must be positive");
    if (!(max_flagged_fraction >= 0.0)) throw ConfigError("max_flagged_fraction must be non-negative");
    forecast_config().validate();
}

BacktestData BacktestData::subset(std::span<const Eigen::Index> columns) const {
    BacktestData out;
    out.panel = panel.select_assets(columns);
    for (const auto& e : brk) {
        CovarianceEstimate s = e;
        s.matrix.resize(static_cast<Eigen::Index>(columns.size()), static_cast<Eigen::Index>(columns.size()));
        for (std::size_t a = 0; a < columns.size(); ++a)
            for (std::size_t b = 0; b < columns.size(); ++b)
                s.matrix(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = e.matrix(columns[a], columns[b]);
        s.condition_number = condition_number(s.matrix);
        out.brk.push_back(std::move(s));
    }
    for (const auto& a : out.panel.assets) {
        const auto it = caps.find(a);
        if (it != caps.end()) out.caps.emplace(a, it->second);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metrics

std::vector<std::pair<std::string, double>> metric_fields(const MetricBlock& m) {
    return {{"mu", 100.0 * m.mu}, {"sigma", 100.0 * m.sigma}, {"sr", m.sr},  {"ce", m.ce},
            {"to", m.to},         {"pc", m.pc},               {"sp", m.sp},  {"pct_trade", m.pct_trade}};
}

double certainty_equivalent(const Eigen::VectorXd& r, double gamma) {
    if (r.size() < 1) throw MetricError("certainty equivalent of an empty series");
    if (!(gamma > 0.0)) throw MetricError("certainty equivalent needs gamma > 0");
    if ((r.array() <= -1.0).any()) throw MetricError("certainty equivalent: wealth ruined");
    std::vector<double> terms(static_cast<std::size_t>(r.size()));
    const double n = static_cast<double>(r.size());
    if (std::abs(1.0 - gamma) < 1e-12) {
        for (Eigen::Index t = 0; t < r.size(); ++t) terms[static_cast<std::size_t>(t)] = std::log1p(r(t));
        return 100.0 * std::expm1(pairwise_sum(terms) / n);
    }
    // Power mean computed in logs: M = (mean (1+r)^(1-g))^(1/(1-g)).
    const double a = 1.0 - gamma;
    for (Eigen::Index t = 0; t < r.size(); ++t) terms[static_cast<std::size_t>(t)] = a * std::log1p(r(t));
    const double lm = log_sum_exp(terms) - std::log(n);
    return 100.0 * std::expm1(lm / a);
}

MetricBlock compute_metrics(const Eigen::VectorXd& net, const Eigen::MatrixXd& weights, const Eigen::MatrixXd& drifted,
                            double gamma, double trade_threshold, MetricPolicy policy) {
    const Eigen::Index t = net.size();
    if (t < 2) throw MetricError("metrics need at least two days");
    if (weights.rows() != t || drifted.rows() != t || weights.cols() != drifted.cols())
        throw ShapeError("metrics: weight paths do not match the return series");
    MetricBlock m;
    const double n = static_cast<double>(t);
    std::vector<double> buf(net.data(), net.data() + t);
    m.mu_daily = pairwise_sum(buf) / n;
    for (Eigen::Index i = 0; i < t; ++i) buf[static_cast<std::size_t>(i)] = std::pow(net(i) - m.mu_daily, 2);
    // A constant series has zero spread even when the rounded mean differs from its terms.
    m.sigma_daily = net.maxCoeff() == net.minCoeff() ? 0.0 : std::sqrt(pairwise_sum(buf) / (n - 1.0));
    m.mu = kTradingDays * m.mu_daily;
    m.sigma = std::sqrt(kTradingDays) * m.sigma_daily;
    if (m.sigma_daily > 0.0) {
        m.sr = m.mu / m.sigma;
    } else {
        if (policy == MetricPolicy::Strict) throw MetricError("Sharpe ratio undefined: zero return volatility");
        m.sr = std::numeric_limits<double>::quiet_NaN();
        m.sr_defined = false;
    }
    m.ce_daily = certainty_equivalent(net, gamma);
    m.ce = kTradingDays * m.ce_daily;

    double to = 0.0, trades = 0.0, pc = 0.0, sp = 0.0;
    for (Eigen::Index i = 0; i < t; ++i) {
        pc += weights.row(i).squaredNorm();
        sp += (-weights.row(i).array()).cwiseMax(0.0).sum();
        if (i == 0) continue;
        const double d = (weights.row(i) - drifted.row(i)).lpNorm<1>();
        to += d;
        if (d > trade_threshold) trades += 1.0;
    }
    m.to = to / (n - 1.0);
    m.pct_trade = 100.0 * trades / (n - 1.0);
    m.pc = pc / n;
    m.sp = sp / n;
    return m;
}

// ---------------------------------------------------------------------------
// Engine

std::vector<BacktestReport> run_backtests(std::span<const Strategy> strategies, const BacktestData& data,
                                          const BacktestConfig& cfg) {
    cfg.validate();
    data.panel.validate();
    if (strategies.empty()) throw ConfigError("run_backtests: no strategies");
    for (const auto& s : strategies) {
        s.validate();
        if (s.kind == StrategyKind::Market) market_weights(data);
    }
    const auto& panel = data.panel;
    const Eigen::Index days = panel.n_days(), n = panel.n_assets();
    const Eigen::Index warm = cfg.warmup_days();
    if (days <= cfg.estimation_window + cfg.pooling_window || days <= warm)
        throw InsufficientDataError("backtest: " + std::to_string(days) + " days do not exceed the warm-up of " +
                                    std::to_string(std::max(warm, cfg.estimation_window + cfg.pooling_window)));

    // Forecasters for every model in use, plus the pool components when a mixture is requested.
    const ForecastConfig fcfg = cfg.forecast_config();
    ForecastInputs in{&panel, data.brk.empty() ? nullptr : &data.brk};
    std::set<ModelTag> base;
    bool want_mixture = false;
    for (const auto& s : strategies)
        if (s.kind == StrategyKind::Model) {
            if (s.model == ModelTag::Mixture) {
                want_mixture = true;
                base.insert(fcfg.mixture_models.begin(), fcfg.mixture_models.end());
            } else {
                base.insert(s.model);
            }
        }
    std::map<ModelTag, std::unique_ptr<Forecaster>> owned;
    std::map<ModelTag, Forecaster*> forecasters;
    for (auto m : base) {
        owned[m] = make_forecaster(m, in, fcfg);
        forecasters[m] = owned[m].get();
    }
    std::unique_ptr<MixtureForecaster> mixture;
    if (want_mixture) {
        std::vector<const Forecaster*> comps;
        for (auto m : fcfg.mixture_models) comps.push_back(forecasters.at(m));
        mixture = std::make_unique<MixtureForecaster>(comps, in, fcfg);
        forecasters[ModelTag::Mixture] = mixture.get();
    }
    const Eigen::Index start = want_mixture ? cfg.estimation_window : warm;
    const Eigen::Index eval = days - warm;

    std::vector<StrategyState> state(strategies.size());
    for (std::size_t k = 0; k < strategies.size(); ++k) {
        auto& r = state[k].report;
        r.strategy = strategies[k].name();
        r.assets = panel.assets;
        r.weights.resize(eval, n);
        r.drifted.resize(eval, n);
        r.gross.resize(eval);
        r.costs.resize(eval);
        r.net.resize(eval);
        state[k].omega = equal_weights(n);
    }
    const TxCostModel charge = cfg.ex_post_cost();

    for (Eigen::Index t = start; t < days; ++t) {
        for (auto& [m, f] : owned) f->prepare(t);
        if (mixture) mixture->prepare(t);
        if (t >= warm) {
            const Eigen::Index e = t - warm;
            const Eigen::VectorXd r = panel.returns.row(t).transpose();
            DayInputs day(data, cfg, t);
            for (std::size_t k = 0; k < strategies.size(); ++k) {
                auto& st = state[k];
                const Eigen::VectorXd omega_plus =
                    e == 0 ? equal_weights(n)
                           : drifted_weights(Weights(st.omega), panel.returns.row(t - 1).transpose()).values();
                Eigen::VectorXd w;
                try {
                    w = target_weights(strategies[k], omega_plus, e, day, forecasters, data, cfg);
                    Weights check(w);
                } catch (const Error&) {
                    w = omega_plus;
                    st.report.flagged.push_back(panel.dates[static_cast<std::size_t>(t)]);
                }
                auto& rep = st.report;
                rep.dates.push_back(panel.dates[static_cast<std::size_t>(t)]);
                rep.weights.row(e) = w.transpose();
                rep.drifted.row(e) = omega_plus.transpose();
                rep.gross(e) = w.dot(r);
                rep.costs(e) = charge.cost(w, omega_plus);
                rep.net(e) = rep.gross(e) - rep.costs(e);
                st.omega = w;
            }
        }
        if (mixture) mixture->record(t);
    }

    std::vector<BacktestReport> out;
    out.reserve(strategies.size());
    for (auto& st : state) {
        auto& rep = st.report;
        const double flagged = static_cast<double>(rep.flagged.size());
        if (flagged > cfg.max_flagged_fraction * static_cast<double>(eval))
            throw BacktestError("strategy " + rep.strategy + ": solver failed on " + std::to_string(rep.flagged.size()) +
                                " of " + std::to_string(eval) + " days (first " + rep.flagged.front() + ")");
        rep.metrics = compute_metrics(rep.net, rep.weights, rep.drifted, cfg.gamma, cfg.trade_threshold,
                                      MetricPolicy::NanOnUndefined);
        out.push_back(std::move(rep));
    }
    return out;
}

BacktestReport run_backtest(const Strategy& strategy, const BacktestData& data, const BacktestConfig& config) {
    return run_backtests(std::span<const Strategy>(&strategy, 1), data, config).front();
}

// ---------------------------------------------------------------------------
// Fees

double performance_fee(const Eigen::VectorXd& r1, const Eigen::VectorXd& r2, double gamma) {
    if (r1.size() != r2.size() || r1.size() == 0) throw ShapeError("performance_fee: series must share a positive length");
    if (!(gamma > 0.0)) throw ValidationError("performance_fee: gamma must be positive");
    if ((r1.array() <= -1.0).any() || (r2.array() <= -1.0).any())
        throw DomainError("performance_fee: gross returns must be positive");
    const std::size_t t = static_cast<std::size_t>(r1.size());
    std::vector<double> buf(t);
    for (std::size_t i = 0; i < t; ++i) buf[i] = power_utility(1.0 + r1(static_cast<Eigen::Index>(i)), gamma);
    const double base = pairwise_sum(buf);
    auto gap = [&](double delta) {
        for (std::size_t i = 0; i < t; ++i)
            buf[i] = power_utility(1.0 + r2(static_cast<Eigen::Index>(i)) - delta, gamma);
        return pairwise_sum(buf) - base;
    };
    double lo = -0.5, hi = 0.5;
    const double glo = gap(lo), ghi = gap(hi);
    if (!(glo >= 0.0) || !(ghi <= 0.0))
        throw BracketError("performance_fee: no root in [-0.5, 0.5] (gap " + detail::format_double(glo) + ", " +
                           detail::format_double(ghi) + ")");
    if (glo == 0.0) return lo;
    if (ghi == 0.0) return hi;
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        const double g = gap(mid);
        if (g == 0.0) return mid;
        (g > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

Eigen::MatrixXd fee_matrix(std::span<const BacktestReport> reports, double gamma) {
    const Eigen::Index k = static_cast<Eigen::Index>(reports.size());
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j)
            if (i != j)
                f(i, j) = kTradingDays * 1e4 *
                          performance_fee(reports[static_cast<std::size_t>(i)].net,
                                          reports[static_cast<std::size_t>(j)].net, gamma);
    return f;
}

// ---------------------------------------------------------------------------
// Bootstrap

double quantile(std::vector<double> x, double p) {
    if (x.empty()) throw MetricError("quantile of an empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw RangeError("quantile level must lie in [0, 1]");
    std::sort(x.begin(), x.end());
    const double h = (static_cast<double>(x.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    if (x[lo] == x[hi]) return x[lo];
    return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

std::vector<std::pair<std::string, double>> BootstrapResult::metric_quantile(std::size_t strategy, double p) const {
    if (runs.empty()) throw MetricError("bootstrap: no runs");
    auto names = metric_fields(runs.front().at(strategy));
    for (std::size_t f = 0; f < names.size(); ++f) {
        std::vector<double> v;
        for (const auto& run : runs) {
            const double x = metric_fields(run.at(strategy))[f].second;
            if (!std::isnan(x)) v.push_back(x);
        }
        names[f].second = v.empty() ? std::numeric_limits<double>::quiet_NaN() : quantile(v, p);
    }
    return names;
}

BootstrapResult bootstrap_run(const BacktestData& universe, std::span<const Strategy> strategies,
                              const BacktestConfig& config, Eigen::Index subset_size, int n_subsets,
                              std::uint64_t seed, int workers) {
    const Eigen::Index n = universe.panel.n_assets();
    if (subset_size < 1 || subset_size > n)
        throw ConfigError("bootstrap: subset size " + std::to_string(subset_size) + " must lie in [1, " +
                          std::to_string(n) + "]");
    if (n_subsets < 1) throw ConfigError("bootstrap: need at least one subset");
    BootstrapResult out;
    for (const auto& s : strategies) out.strategies.push_back(s.name());
    out.subsets.resize(static_cast<std::size_t>(n_subsets));
    out.runs.resize(static_cast<std::size_t>(n_subsets));
    std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    for (int s = 0; s < n_subsets; ++s) {
        Engine eng = make_engine(seed, static_cast<std::uint64_t>(s));
        auto& cols = out.subsets[static_cast<std::size_t>(s)];
        std::sample(all.begin(), all.end(), std::back_inserter(cols), subset_size, eng);
    }

    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        while (true) {
            const int s = next.fetch_add(1);
            if (s >= n_subsets) return;
            try {
                const auto sub = universe.subset(out.subsets[static_cast<std::size_t>(s)]);
                auto reports = run_backtests(strategies, sub, config);
                auto& row = out.runs[static_cast<std::size_t>(s)];
                for (auto& r : reports) row.push_back(r.metrics);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(n_subsets);
            }
        }
    };
    const int threads = std::max(1, std::min(workers, n_subsets));
    std::vector<std::thread> pool;
    for (int i = 1; i < threads; ++i) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
    return out;
}

// ---------------------------------------------------------------------------
// Output

void write_report(std::span<const BacktestReport> reports, const BootstrapResult* bootstrap, std::ostream& out,
                  const std::string& header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << '\n';
    const auto names = metric_fields(MetricBlock{});
    out << "strategy";
    for (const auto& [name, v] : names) out << ',' << name;
    if (bootstrap)
        for (const auto& [name, v] : names) out << ',' << name << "_q025," << name << "_q975";
    out << ",flagged_days\n";
    for (std::size_t k = 0; k < reports.size(); ++k) {
        out << reports[k].strategy;
        for (const auto& [name, v] : metric_fields(reports[k].metrics)) out << ',' << detail::format_double(v);
        if (bootstrap) {
            const auto lo = bootstrap->metric_quantile(k, 0.025), hi = bootstrap->metric_quantile(k, 0.975);
            for (std::size_t f = 0; f < lo.size(); ++f)
                out << ',' << detail::format_double(lo[f].second) << ',' << detail::format_double(hi[f].second);
        }
        out << ',' << reports[k].flagged.size() << '\n';
    }
}

void write_fee_matrix(std::span<const BacktestReport> reports, const Eigen::MatrixXd& fees, std::ostream& out,
                      const std::string& header_comment) {
    if (fees.rows() != static_cast<Eigen::Index>(reports.size()) || fees.cols() != fees.rows())
        throw ShapeError("write_fee_matrix: matrix does not match the strategies");
    if (!header_comment.empty()) out << "# " << header_comment << '\n';
    out << "from";
    for (const auto& r : reports) out << ',' << r.strategy;
    out << '\n';
    for (std::size_t i = 0; i < reports.size(); ++i) {
        out << reports[i].strategy;
        for (std::size_t j = 0; j < reports.size(); ++j)
            out << ',' << detail::format_double(fees(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        out << '\n';
    }
}

void write_weights(const BacktestReport& report, std::ostream& out, const std::string& header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << '\n';
    out << "date,asset,weight\n";
    for (std::size_t t = 0; t < report.dates.size(); ++t)
        for (std::size_t i = 0; i < report.assets.size(); ++i)
            out << report.dates[t] << ',' << report.assets[i] << ','
                << detail::format_double(report.weights(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)))
                << '\n';
}

void write_net_returns(std::span<const BacktestReport> reports, std::ostream& out, const std::string& header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << '\n';
    out << "date,strategy,gross,cost,net\n";
    for (const auto& r : reports)
        for (std::size_t t = 0; t < r.dates.size(); ++t) {
            const auto e = static_cast<Eigen::Index>(t);
            out << r.dates[t] << ',' << r.strategy << ',' << detail::format_double(r.gross(e)) << ','
                << detail::format_double(r.costs(e)) << ',' << detail::format_double(r.net(e)) << '\n';
        }
}

}  // namespace costaware
