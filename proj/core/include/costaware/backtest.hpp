#pragma once

#include "costaware/covariance.hpp"
#include "costaware/expected_utility.hpp"
#include "costaware/forecast.hpp"
#include "costaware/market_data.hpp"
#include "costaware/optimizer.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace costaware {

enum class StrategyKind { Model, Naive, Mvp, MvpNoShort, GrossExposure, TuZhou, KanZhou, Jorion, Market, PlugIn };

/// Bi-monthly rebalancing: two 21-day months.
inline constexpr Eigen::Index kBimonthlyDays = 42;

/// A trading rule. Textual forms:
/// `model:<Tag>[:nocost]`, `naive`, `naive:<days>`, `naive:2m`, `mvp`, `mvp-noshort`, `gross:<theta>`,
/// `tuzhou`, `kanzhou`, `jorion`, `market`, `plugin:<Sample|LW>[:nocost]`.
struct Strategy {
    StrategyKind kind = StrategyKind::Naive;
    ModelTag model = ModelTag::GaussianSample;
    Estimator estimator = Estimator::Sample;  // PlugIn only
    bool cost_aware = true;
    Eigen::Index rebalance_every = 1;  // Naive only
    double theta = 1.0;                // GrossExposure only

    static Strategy parse(const std::string& text);
    std::string name() const;
    void validate() const;
};

std::vector<Strategy> parse_strategies(const std::string& comma_list);

struct BacktestConfig {
    double gamma = 4.0;
    double beta = 0.005;
    CostKind cost_kind = CostKind::L1;
    std::optional<double> beta_ex_post;  // cost level charged on realised trades; beta when empty
    Eigen::Index estimation_window = 500;
    Eigen::Index pooling_window = 250;
    std::optional<Eigen::Index> warmup;  // estimation_window + pooling_window when empty
    double trade_threshold = 1e-5;
    Eigen::Index draws = 10000;
    double max_flagged_fraction = 0.01;
    ForecastConfig forecast;
    EuOptions eu;
    std::uint64_t seed = 1;

    Eigen::Index warmup_days() const { return warmup.value_or(estimation_window + pooling_window); }
    TxCostModel ex_ante_cost() const;
    TxCostModel ex_post_cost() const;
    ForecastConfig forecast_config() const;
    void validate() const;
};

struct BacktestData {
    ReturnPanel panel;
    std::vector<CovarianceEstimate> brk;  // smoothed realised estimate per panel day; may be empty
    std::map<std::string, double> caps;   // market capitalisation per asset; may be empty

    /// Same data restricted to the given asset columns.
    BacktestData subset(std::span<const Eigen::Index> columns) const;
};

struct MetricBlock {
    double mu_daily = 0.0;
    double sigma_daily = 0.0;
    double mu = 0.0;     // 252 * mu_daily
    double sigma = 0.0;  // sqrt(252) * sigma_daily
    double sr = 0.0;
    double ce_daily = 0.0;  // percent
    double ce = 0.0;        // 252 * ce_daily
    double to = 0.0;
    double pc = 0.0;
    double sp = 0.0;
    double pct_trade = 0.0;
    bool sr_defined = true;
};

/// Named metric values in report column order.
std::vector<std::pair<std::string, double>> metric_fields(const MetricBlock& m);

enum class MetricPolicy { Strict, NanOnUndefined };

/// Certainty equivalent of a daily return stream in percent, for power utility.
double certainty_equivalent(const Eigen::VectorXd& r, double gamma);

/// `weights` row t is the traded portfolio on day t and `drifted` row t the holdings just before the trade.
MetricBlock compute_metrics(const Eigen::VectorXd& net_returns, const Eigen::MatrixXd& weights,
                            const Eigen::MatrixXd& drifted, double gamma, double trade_threshold,
                            MetricPolicy policy = MetricPolicy::Strict);

struct BacktestReport {
    std::string strategy;
    std::vector<std::string> dates;  // evaluation days
    std::vector<std::string> assets;
    Eigen::MatrixXd weights;  // evaluation days x N
    Eigen::MatrixXd drifted;  // evaluation days x N
    Eigen::VectorXd gross;
    Eigen::VectorXd costs;
    Eigen::VectorXd net;
    std::vector<std::string> flagged;  // dates where the solver failed and the drifted portfolio was held
    MetricBlock metrics;
};

/// Runs all strategies over one panel. Strategies that share a model share its daily predictive draws.
std::vector<BacktestReport> run_backtests(std::span<const Strategy> strategies, const BacktestData& data,
                                          const BacktestConfig& config);
BacktestReport run_backtest(const Strategy& strategy, const BacktestData& data, const BacktestConfig& config);

/// Daily fee delta with sum U(1 + r1) = sum U(1 + r2 - delta); positive when stream 2 is preferred.
double performance_fee(const Eigen::VectorXd& returns_1, const Eigen::VectorXd& returns_2, double gamma);

/// Entry (i, j) is the annualised fee in basis points for switching from strategy i to strategy j.
Eigen::MatrixXd fee_matrix(std::span<const BacktestReport> reports, double gamma);

/// Sample quantile with linear interpolation between order statistics.
double quantile(std::vector<double> x, double p);

struct BootstrapResult {
    std::vector<std::string> strategies;
    std::vector<std::vector<Eigen::Index>> subsets;
    std::vector<std::vector<MetricBlock>> runs;  // [subset][strategy]

    /// Per-metric quantile across subsets for one strategy.
    std::vector<std::pair<std::string, double>> metric_quantile(std::size_t strategy, double p) const;
};

BootstrapResult bootstrap_run(const BacktestData& universe, std::span<const Strategy> strategies,
                              const BacktestConfig& config, Eigen::Index subset_size, int n_subsets,
                              std::uint64_t seed, int workers = 1);

void write_report(std::span<const BacktestReport> reports, const BootstrapResult* bootstrap, std::ostream& out,
                  const std::string& header_comment = "");
void write_fee_matrix(std::span<const BacktestReport> reports, const Eigen::MatrixXd& fees, std::ostream& out,
                      const std::string& header_comment = "");
void write_weights(const BacktestReport& report, std::ostream& out, const std::string& header_comment = "");
void write_net_returns(std::span<const BacktestReport> reports, std::ostream& out,
                       const std::string& header_comment = "");

}  // namespace costaware
