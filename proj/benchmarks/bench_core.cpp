#include "costaware/covariance.hpp"
#include "costaware/expected_utility.hpp"
#include "costaware/optimizer.hpp"
#include "costaware/pooling.hpp"
#include "costaware/predictive.hpp"
#include "costaware/simulator.hpp"

#include <benchmark/benchmark.h>

using namespace costaware;

namespace {

Eigen::MatrixXd factor_cov(Eigen::Index n) {
    MarketConfig mc;
    mc.n_assets = static_cast<std::size_t>(n);
    mc.n_days = 2;
    mc.emit_ticks = false;
    return MarketSimulator(mc).base_covariance();
}

AllocationProblem l1_problem(Eigen::Index n, double beta) {
    AllocationProblem p;
    p.sigma = factor_cov(n);
    p.mu = Eigen::VectorXd::Constant(n, 0.0004);
    p.omega_plus = Eigen::VectorXd::LinSpaced(n, 1.0, 2.0);
    p.omega_plus /= p.omega_plus.sum();
    p.cost = TxCostModel::l1(beta);
    return p;
}

void BM_SolveL1(benchmark::State& state) {
    const auto p = l1_problem(state.range(0), 1e-4);
    for (auto _ : state) benchmark::DoNotOptimize(solve_l1(p));
}
BENCHMARK(BM_SolveL1)->Arg(5)->Arg(20)->Arg(100);

void BM_Gmv(benchmark::State& state) {
    const Eigen::MatrixXd s = factor_cov(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(gmv(s));
}
BENCHMARK(BM_Gmv)->Arg(20)->Arg(100)->Arg(300);

void BM_ExpectedUtility(benchmark::State& state) {
    const Eigen::Index n = state.range(0);
    const auto draws = gaussian_predict(make_estimate(factor_cov(n), Estimator::Sample, "2000-01-03"), 10000, 1).draws;
    const Eigen::VectorXd w_plus = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    for (auto _ : state)
        benchmark::DoNotOptimize(expected_utility_weights(draws, 4.0, w_plus, TxCostModel::l1(1e-4)));
}
BENCHMARK(BM_ExpectedUtility)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_LedoitWolf(benchmark::State& state) {
    MarketConfig mc;
    mc.n_assets = static_cast<std::size_t>(state.range(0));
    mc.n_days = 500;
    mc.emit_ticks = false;
    const auto panel = simulate_market(mc).panel;
    for (auto _ : state) benchmark::DoNotOptimize(lw_shrinkage(panel, 500, 500));
}
BENCHMARK(BM_LedoitWolf)->Arg(20)->Arg(100);

void BM_BrkDay(benchmark::State& state) {
    MarketConfig mc;
    mc.n_assets = static_cast<std::size_t>(state.range(0));
    mc.n_days = 2;
    mc.tick_intensity = 0.2;
    mc.noise.variance = 1e-8;
    const auto day = MarketSimulator(mc).ticks(0);
    const KernelConfig kc;
    const auto part = BlockPartition::by_liquidity(day, kc.n_groups);
    for (auto _ : state) benchmark::DoNotOptimize(brk_covariance(day, part, kc));
}
BENCHMARK(BM_BrkDay)->Arg(4)->Arg(12)->Unit(benchmark::kMillisecond);

void BM_OptimalPool(benchmark::State& state) {
    const Eigen::Index k = state.range(0);
    Eigen::MatrixXd scores(250, k);
    for (Eigen::Index t = 0; t < 250; ++t)
        for (Eigen::Index q = 0; q < k; ++q) scores(t, q) = std::sin(0.37 * static_cast<double>(t * (q + 1))) + 0.1 * q;
    for (auto _ : state) benchmark::DoNotOptimize(optimal_pool(scores));
}
BENCHMARK(BM_OptimalPool)->Arg(2)->Arg(4);

}  // namespace

BENCHMARK_MAIN();
