#pragma once

#include "costaware/backtest.hpp"
#include "costaware/experiment_config.hpp"

#include <string>
#include <vector>

namespace costaware {

struct ExperimentData {
    BacktestData data;            // brk filled when tick data exists
    std::vector<DayTicks> ticks;  // empty without tick data
    std::vector<Eigen::MatrixXd> sigma_true;  // simulator only
};

/// Reads the configured files or runs the simulator.
ExperimentData load_experiment_data(const ExperimentConfig& config);

struct SweepRow {
    Estimator estimator = Estimator::Sample;
    double beta_bp = 0.0;
    double beta_ex_post_bp = 0.0;
    MetricBlock metrics;
    double l1_to_hold = 0.0;  // mean L1 distance to the untraded buy-and-hold portfolio
};

/// Zero-mean plug-in allocations over the ex-ante by ex-post cost grid.
/// Without an ex-post grid each ex-ante level is also the level charged.
std::vector<SweepRow> sweep_beta(const ExperimentConfig& config, const BacktestData& data);

struct PoolRun {
    ScorePanel scores;
    std::vector<std::string> dates;  // days with pooling weights
    std::vector<Eigen::VectorXd> weights;
};

/// Component log scores and daily optimal pooling weights.
PoolRun pool_run(const ExperimentConfig& config, const ExperimentData& data);

// Subcommands. Each writes CSV files carrying the config hash into `config.out_dir`
// and returns the paths written.
std::vector<std::string> cmd_simulate(const ExperimentConfig& config);
std::vector<std::string> cmd_estimate(const ExperimentConfig& config);
std::vector<std::string> cmd_backtest(const ExperimentConfig& config);
std::vector<std::string> cmd_sweep_beta(const ExperimentConfig& config);
std::vector<std::string> cmd_pool(const ExperimentConfig& config);
std::vector<std::string> cmd_report(const ExperimentConfig& config);
/// Every stage in order on one data load.
std::vector<std::string> cmd_run(const ExperimentConfig& config);

}  // namespace costaware
