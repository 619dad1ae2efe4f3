#include "costaware/backtest.hpp"
#include "costaware/benchmark_rules.hpp"
#include "costaware/errors.hpp"
#include "costaware/simulator.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <sstream>

using namespace costaware;

namespace {

BacktestData simulated(std::size_t n, std::size_t days, std::uint64_t seed) {
    MarketConfig mc;
    mc.n_assets = n;
    mc.n_days = days;
    mc.emit_ticks = false;
    mc.seed = seed;
    const auto m = simulate_market(mc);
    return BacktestData{m.panel, {}, m.caps};
}

BacktestConfig small_config() {
    BacktestConfig c;
    c.estimation_window = 60;
    c.pooling_window = 20;
    c.draws = 1000;
    c.beta = 0.005;
    return c;
}

Eigen::MatrixXd moments_window(Eigen::Index t, Eigen::Index n, std::uint64_t seed) {
    auto eng = make_engine(seed, 11);
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::MatrixXd x(t, n);
    for (Eigen::Index i = 0; i < t; ++i)
        for (Eigen::Index k = 0; k < n; ++k) x(i, k) = 0.001 * (k + 1) + 0.01 * nd(eng) + (k > 0 ? 0.3 * x(i, 0) : 0.0);
    return x;
}

// Root of sum U(1 + r1) = sum U(1 + r2 - d) by Newton's method on the unshifted utility.
double fee_oracle(const Eigen::VectorXd& r1, const Eigen::VectorXd& r2, double gamma) {
    long double target = 0.0L;
    for (Eigen::Index t = 0; t < r1.size(); ++t) target += std::pow(1.0L + r1(t), 1.0L - gamma);
    long double d = 0.0L;
    for (int it = 0; it < 100; ++it) {
        long double f = -target, df = 0.0L;
        for (Eigen::Index t = 0; t < r2.size(); ++t) {
            f += std::pow(1.0L + r2(t) - d, 1.0L - gamma);
            df -= (1.0L - gamma) * std::pow(1.0L + r2(t) - d, -gamma);
        }
        d -= f / df;
    }
    return static_cast<double>(d);
}

}  // namespace

TEST_CASE("strategy strings") {
    CHECK(Strategy::parse("model:WishartBRK").name() == "WishartBRK");
    CHECK_FALSE(Strategy::parse("model:FactorSV:nocost").cost_aware);
    CHECK(Strategy::parse("naive:2m").rebalance_every == kBimonthlyDays);
    CHECK(Strategy::parse("naive:5").name() == "Naive:5");
    CHECK(Strategy::parse("gross:1.5").theta == 1.5);
    CHECK(Strategy::parse("plugin:LW:nocost").name() == "PlugIn:LW:nocost");
    for (const char* s : {"mvp", "mvp-noshort", "tuzhou", "kanzhou", "jorion", "market", "naive"})
        CHECK(Strategy::parse(Strategy::parse(s).name()).kind == Strategy::parse(s).kind);
    for (const char* bad : {"model", "model:Nope", "naive:0", "gross:0.5", "plugin:BRK", "foo", "model:FactorSV:cost"})
        CHECK_THROWS_AS(Strategy::parse(bad), ConfigError);
    CHECK(parse_strategies("naive, mvp ,market").size() == 3);
}

TEST_CASE("metric examples") {
    const Eigen::Vector2d r(0.01, 0.03);
    const Eigen::MatrixXd w = Eigen::MatrixXd::Constant(2, 3, 1.0 / 3.0);
    const auto m = compute_metrics(r, w, w, 4.0, 1e-5);
    CHECK(std::abs(m.mu_daily - 0.02) < 1e-12);
    CHECK(std::abs(m.sigma_daily - std::sqrt(2.0) * 0.01) < 1e-12);
    CHECK(std::abs(m.mu - 252 * 0.02) < 1e-10);
    CHECK(std::abs(m.sr - 252 * 0.02 / (std::sqrt(252.0) * std::sqrt(2.0) * 0.01)) < 1e-10);

    const Eigen::VectorXd flat = Eigen::VectorXd::Constant(10, 0.004);
    const Eigen::MatrixXd ew = Eigen::MatrixXd::Constant(10, 4, 0.25);
    CHECK(std::abs(certainty_equivalent(flat, 4.0) - 0.4) < 1e-10);
    CHECK(std::abs(certainty_equivalent(flat, 1.0) - 0.4) < 1e-10);
    CHECK_THROWS_AS(compute_metrics(flat, ew, ew, 4.0, 1e-5), MetricError);
    const auto lenient = compute_metrics(Eigen::VectorXd::Zero(10), ew, ew, 4.0, 1e-5, MetricPolicy::NanOnUndefined);
    CHECK(std::isnan(lenient.sr));
    CHECK_FALSE(lenient.sr_defined);
    CHECK(lenient.to == 0.0);
    CHECK(std::abs(lenient.pc - 0.25) < 1e-15);
    CHECK(lenient.sp == 0.0);
    CHECK(lenient.pct_trade == 0.0);
    CHECK_THROWS_AS(compute_metrics(Eigen::VectorXd::Zero(1), ew.topRows(1), ew.topRows(1), 4.0, 0.0), MetricError);
}

TEST_CASE("metrics agree with direct loops") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Eigen::Index t = 30, n = 4;
        const Eigen::VectorXd r = testing::random_normal(t, seed, 0.01);
        Eigen::MatrixXd w(t, n), d(t, n);
        for (Eigen::Index i = 0; i < t; ++i) {
            w.row(i) = (testing::random_normal(n, seed * 100 + i, 0.3).array() + 0.25).matrix().transpose();
            w.row(i) /= w.row(i).sum();
            d.row(i) = (i % 3 == 0) ? w.row(i) : Eigen::RowVectorXd(testing::random_simplex(n, seed * 7 + i).transpose());
        }
        const auto m = compute_metrics(r, w, d, 4.0, 1e-5);
        double ce = 0.0, to = 0.0, pc = 0.0, sp = 0.0, trades = 0.0;
        for (Eigen::Index i = 0; i < t; ++i) {
            ce += std::pow(1.0 + r(i), -3.0) / t;
            for (Eigen::Index k = 0; k < n; ++k) {
                pc += w(i, k) * w(i, k) / t;
                if (w(i, k) < 0.0) sp -= w(i, k) / t;
            }
            if (i > 0) {
                double dd = 0.0;
                for (Eigen::Index k = 0; k < n; ++k) dd += std::abs(w(i, k) - d(i, k));
                to += dd / (t - 1);
                trades += dd > 1e-5 ? 100.0 / (t - 1) : 0.0;
            }
        }
        CHECK(m.ce_daily == doctest::Approx(100.0 * (std::pow(ce, -1.0 / 3.0) - 1.0)).epsilon(1e-12));
        CHECK(m.to == doctest::Approx(to).epsilon(1e-12));
        CHECK(m.pc == doctest::Approx(pc).epsilon(1e-12));
        CHECK(m.sp == doctest::Approx(sp).epsilon(1e-12));
        CHECK(m.pct_trade == doctest::Approx(trades).epsilon(1e-12));
    }
}

TEST_CASE("performance fee") {
    const Eigen::VectorXd a = Eigen::VectorXd::Constant(1, 0.01), b = Eigen::VectorXd::Constant(1, 0.02);
    for (double g : {1.0, 2.0, 4.0, 10.0}) {
        CHECK(std::abs(performance_fee(a, b, g) - 0.01) <= 1e-10);
        CHECK(performance_fee(a, b, g) == -performance_fee(b, a, g));
    }
    const Eigen::VectorXd r = testing::random_normal(50, 3, 0.01);
    CHECK(std::abs(performance_fee(r, r, 4.0)) <= 1e-10);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Eigen::VectorXd r1 = testing::random_normal(40, seed, 0.01);
        const Eigen::VectorXd r2 = testing::random_normal(40, seed + 50, 0.012).array() + 0.0005;
        CHECK(std::abs(performance_fee(r1, r2, 4.0) - fee_oracle(r1, r2, 4.0)) <= 1e-10);
    }
    CHECK_THROWS_AS(performance_fee(a, Eigen::VectorXd::Constant(1, 0.9), 4.0), BracketError);
    CHECK_THROWS_AS(performance_fee(a, Eigen::VectorXd::Zero(2), 4.0), ShapeError);
}

TEST_CASE("quantile interpolates between order statistics") {
    CHECK(quantile({3.0, 1.0, 2.0, 4.0}, 0.5) == 2.5);
    CHECK(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.025) == doctest::Approx(1.1).epsilon(1e-14));
    CHECK(quantile({7.0}, 0.975) == 7.0);
    CHECK_THROWS_AS(quantile({}, 0.5), MetricError);
}

TEST_CASE("Tu-Zhou endpoints") {
    const Eigen::MatrixXd x = moments_window(120, 4, 1);
    CHECK((tu_zhou_weights(x, 4.0, 0.0) - Eigen::VectorXd::Constant(4, 0.25)).cwiseAbs().maxCoeff() < 1e-15);
    const auto m = SampleMoments::of(x);
    CHECK((tu_zhou_weights(x, 4.0, 1.0) - efficient_weights(m.mean, m.cov_mle, 4.0)).cwiseAbs().maxCoeff() < 1e-12);
    const double d = tu_zhou_delta(m, 4.0);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
    CHECK(std::abs(tu_zhou_weights(x, 4.0).sum() - 1.0) < 1e-12);
}

TEST_CASE("Kan-Zhou and Jorion rules match an independent transcription") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Eigen::MatrixXd x = moments_window(150, 3, seed);
        const double t = 150.0, n = 3.0, gamma = 4.0;
        const Eigen::Vector3d m = x.colwise().mean();
        Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
        for (Eigen::Index i = 0; i < x.rows(); ++i) s += (x.row(i).transpose() - m) * (x.row(i).transpose() - m).transpose();
        const Eigen::Matrix3d s_mle = s / t;
        const Eigen::Matrix3d inv = s_mle.inverse();
        const Eigen::Vector3d one = Eigen::Vector3d::Ones();
        const double a1 = one.dot(inv * one), b1 = one.dot(inv * m), c1 = m.dot(inv * m);
        const double psi2 = c1 - b1 * b1 / a1;
        // With N = 3 the incomplete beta B_x(1, b) is (1 - (1 - x)^b) / b.
        const double bb = (t - n + 1.0) / 2.0, xx = psi2 / (1.0 + psi2);
        const double inc_beta = (1.0 - std::pow(1.0 - xx, bb)) / bb;
        const double psi2_a = ((t - n - 1.0) * psi2 - (n - 1.0)) / t +
                              2.0 * psi2 * std::pow(1.0 + psi2, -(t - 2.0) / 2.0) / (t * inc_beta);
        const double c3 = (t - n - 1.0) * (t - n - 4.0) / (t * (t - 2.0));
        const double eta = psi2_a / (psi2_a + (n - 1.0) / t);
        const Eigen::Vector3d kz = inv * one / a1 + c3 * eta / gamma * (inv * m - inv * one * b1 / a1);
        CHECK((kan_zhou_weights(x, gamma) - kz).cwiseAbs().maxCoeff() < 1e-10);

        const Eigen::Matrix3d st = s / (t - n - 2.0);
        const Eigen::Matrix3d sti = st.inverse();
        const double mg = one.dot(sti * m) / one.dot(sti * one);
        const Eigen::Vector3d dev = m - mg * one;
        const double q = dev.dot(sti * dev);
        const double phi = (n + 2.0) / ((n + 2.0) + t * q);
        const double lam = (n + 2.0) / q;
        const Eigen::Vector3d mbs = (1.0 - phi) * m + phi * mg * one;
        const Eigen::Matrix3d sbs =
            st * (1.0 + 1.0 / (t + lam)) + lam / (t * (t + 1.0 + lam)) * one * one.transpose() / one.dot(sti * one);
        const Eigen::Matrix3d bi = sbs.inverse();
        const Eigen::Vector3d gmv = bi * one / one.dot(bi * one);
        const Eigen::Vector3d jor = gmv + (bi * mbs - bi * one * one.dot(bi * mbs) / one.dot(bi * one)) / gamma;
        CHECK((jorion_weights(x, gamma) - jor).cwiseAbs().maxCoeff() < 1e-10);
    }
    CHECK_THROWS_AS(kan_zhou_weights(moments_window(7, 3, 1), 4.0), InsufficientDataError);
}

TEST_CASE("single asset: fully invested, no turnover, net equals asset return") {
    const auto data = simulated(1, 140, 2);
    auto cfg = small_config();
    const std::vector<Strategy> s{Strategy::parse("naive"), Strategy::parse("plugin:Sample"),
                                  Strategy::parse("model:GaussianSample")};
    for (const auto& rep : run_backtests(s, data, cfg)) {
        CHECK((rep.weights.array() == 1.0).all());
        CHECK(rep.metrics.to == 0.0);
        CHECK((rep.net - data.panel.returns.col(0).tail(rep.net.size())).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("zero returns: a cost-aware strategy never trades") {
    auto data = simulated(3, 120, 3);
    data.panel.returns.setZero();
    const auto rep = run_backtest(Strategy::parse("plugin:Sample"), data, small_config());
    CHECK(rep.flagged.empty());
    CHECK(rep.net.cwiseAbs().maxCoeff() == 0.0);
    for (Eigen::Index e = 0; e < rep.weights.rows(); ++e)
        CHECK((rep.weights.row(e) - rep.drifted.row(e)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("accounting identity and cost-aware turnover") {
    const auto data = simulated(4, 200, 4);
    auto cfg = small_config();
    const std::vector<Strategy> s{Strategy::parse("model:GaussianLW"), Strategy::parse("model:GaussianLW:nocost"),
                                  Strategy::parse("plugin:Sample"), Strategy::parse("plugin:Sample:nocost")};
    const auto reps = run_backtests(s, data, cfg);
    for (const auto& rep : reps) {
        double w_net = 1.0, w_chk = 1.0;
        const Eigen::Index first = data.panel.n_days() - rep.net.size();
        for (Eigen::Index e = 0; e < rep.net.size(); ++e) {
            const double gross = rep.weights.row(e).dot(data.panel.returns.row(first + e));
            const double cost = 0.005 * (rep.weights.row(e) - rep.drifted.row(e)).lpNorm<1>();
            w_net *= 1.0 + rep.net(e);
            w_chk *= 1.0 + gross - cost;
        }
        CHECK(std::abs(w_net - w_chk) < 1e-12);
    }
    CHECK(reps[0].metrics.to < reps[1].metrics.to);
    CHECK(reps[2].metrics.to < reps[3].metrics.to);
}

TEST_CASE("zero cost level makes cost-aware and cost-unaware twins identical") {
    const auto data = simulated(3, 150, 5);
    auto cfg = small_config();
    cfg.beta = 0.0;
    const std::vector<Strategy> s{Strategy::parse("plugin:LW"), Strategy::parse("plugin:LW:nocost"),
                                  Strategy::parse("model:GaussianSample"), Strategy::parse("model:GaussianSample:nocost")};
    const auto reps = run_backtests(s, data, cfg);
    CHECK(reps[0].weights == reps[1].weights);
    CHECK(reps[2].weights == reps[3].weights);
}

TEST_CASE("no look-ahead: truncating the future leaves past decisions unchanged") {
    const auto full = simulated(4, 180, 6);
    auto cut = full;
    cut.panel = full.panel.head(150);
    const auto strategies = parse_strategies("model:GaussianSample,mvp,tuzhou,kanzhou,jorion,gross:1.3,naive:2m");
    const auto cfg = small_config();
    const auto a = run_backtests(strategies, full, cfg);
    const auto b = run_backtests(strategies, cut, cfg);
    for (std::size_t k = 0; k < a.size(); ++k) {
        const Eigen::Index m = b[k].weights.rows();
        CHECK(a[k].weights.topRows(m) == b[k].weights);
    }
}

TEST_CASE("bi-monthly naive trades less than daily naive") {
    const auto reps = run_backtests(parse_strategies("naive,naive:2m"), simulated(5, 250, 7), small_config());
    CHECK(reps[1].metrics.to < reps[0].metrics.to);
    CHECK(reps[0].metrics.pct_trade > reps[1].metrics.pct_trade);
}

TEST_CASE("market strategy holds cap weights and needs caps") {
    auto data = simulated(3, 120, 8);
    const auto rep = run_backtest(Strategy::parse("market"), data, small_config());
    double total = 0.0;
    for (const auto& [a, c] : data.caps) total += c;
    CHECK(std::abs(rep.weights(0, 0) - data.caps.at(data.panel.assets[0]) / total) < 1e-15);
    CHECK(rep.metrics.pct_trade == 0.0);
    data.caps.clear();
    CHECK_THROWS_AS(run_backtest(Strategy::parse("market"), data, small_config()), DataError);
}

TEST_CASE("persistent solver failure fails the run") {
    auto cfg = small_config();
    cfg.estimation_window = 6;
    cfg.warmup = 80;
    CHECK_THROWS_AS(run_backtest(Strategy::parse("kanzhou"), simulated(4, 120, 9), cfg), BacktestError);
    CHECK_THROWS_AS(run_backtest(Strategy::parse("naive"), simulated(4, 70, 9), small_config()), InsufficientDataError);
}

TEST_CASE("mixture strategy pools its components") {
    auto cfg = small_config();
    cfg.forecast.mixture_models = {ModelTag::GaussianSample, ModelTag::GaussianLw};
    const auto rep = run_backtest(Strategy::parse("model:Mixture"), simulated(3, 140, 10), cfg);
    CHECK(rep.flagged.empty());
    CHECK(rep.weights.allFinite());
    CHECK(rep.metrics.to >= 0.0);
}

TEST_CASE("bootstrap") {
    const auto data = simulated(5, 130, 11);
    const auto strategies = parse_strategies("naive,mvp");
    const auto cfg = small_config();
    const auto full = bootstrap_run(data, strategies, cfg, 5, 3, 1, 2);
    for (std::size_t k = 0; k < 2; ++k) {
        const auto lo = full.metric_quantile(k, 0.025), hi = full.metric_quantile(k, 0.975);
        for (std::size_t f = 0; f < lo.size(); ++f) CHECK(lo[f].second == hi[f].second);
    }
    const auto one = bootstrap_run(data, strategies, cfg, 3, 1, 1);
    CHECK(one.runs.size() == 1);
    const auto a = bootstrap_run(data, strategies, cfg, 3, 6, 42, 1);
    const auto b = bootstrap_run(data, strategies, cfg, 3, 6, 42, 4);
    CHECK(a.subsets == b.subsets);
    for (std::size_t s = 0; s < a.runs.size(); ++s)
        for (std::size_t k = 0; k < 2; ++k) CHECK(metric_fields(a.runs[s][k]) == metric_fields(b.runs[s][k]));
    CHECK_THROWS_AS(bootstrap_run(data, strategies, cfg, 6, 2, 1), ConfigError);
}

TEST_CASE("report, fee and weight files") {
    const auto data = simulated(2, 100, 12);
    const auto reps = run_backtests(parse_strategies("naive,mvp"), data, small_config());
    std::ostringstream rep, fee, w;
    write_report(reps, nullptr, rep, "config_hash=ab");
    CHECK(rep.str().rfind("# config_hash=ab\nstrategy,mu,sigma,sr,ce,to,pc,sp,pct_trade,flagged_days\nNaive,", 0) == 0);
    const auto f = fee_matrix(reps, 4.0);
    CHECK(f(0, 0) == 0.0);
    CHECK(std::abs(f(0, 1) + f(1, 0)) < 0.05 * std::max(1.0, std::abs(f(0, 1))));
    write_fee_matrix(reps, f, fee);
    CHECK(fee.str().rfind("from,Naive,MVP\n", 0) == 0);
    write_weights(reps[0], w);
    CHECK(w.str().rfind("date,asset,weight\n" + reps[0].dates[0] + ",A", 0) == 0);
}
