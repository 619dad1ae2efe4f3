#pragma once

#include "costaware/market_data.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace costaware {

enum class Estimator { Sample, LedoitWolf, Brk, BrkSmoothed };

std::string to_string(Estimator e);
Estimator estimator_from_string(const std::string& s);

struct CovarianceEstimate {
    Eigen::MatrixXd matrix;
    Estimator estimator = Estimator::Sample;
    std::string date;
    double condition_number = 0.0;
    std::optional<double> shrinkage;  // Ledoit-Wolf intensity, when applicable
};

CovarianceEstimate make_estimate(Eigen::MatrixXd matrix, Estimator estimator, std::string date);

// Unbiased covariance of the rows of `window` (observations x assets).
Eigen::MatrixXd sample_cov_window(const Eigen::MatrixXd& window);

// Sample covariance of the h returns in rows [t-h, t) of the panel. t is an
// exclusive end index, so the estimate uses information up to row t-1.
CovarianceEstimate sample_cov(const ReturnPanel& panel, Eigen::Index t, Eigen::Index h);

struct ShrinkageIntensity {
    double raw;      // kappa_hat / T
    double clamped;  // clamped into [0, 1]
};

// Constant-correlation target built from a covariance matrix.
Eigen::MatrixXd constant_correlation_target(const Eigen::MatrixXd& s);

// Ledoit-Wolf intensity for the constant-correlation target, computed from a
// window of observations.
ShrinkageIntensity lw_intensity(const Eigen::MatrixXd& window);

Eigen::MatrixXd lw_shrink_window(const Eigen::MatrixXd& window, double* intensity = nullptr);

CovarianceEstimate lw_shrinkage(const ReturnPanel& panel, Eigen::Index t, Eigen::Index h);

// Parzen weight function.
double parzen(double x);

struct KernelConfig {
    std::optional<int> bandwidth;  // fixed L; automatic when empty
    int min_obs_margin = 2;        // a block needs at least L + margin returns
    int smoothing_window = 5;
    std::size_t n_groups = 4;
};

struct BandwidthDiagnostics {
    int bandwidth;
    double noise_variance;  // half the mean squared high-frequency return
    double integrated_variance;  // sparse-sampled realised variance
};

// Automatic bandwidth for one return series.
BandwidthDiagnostics automatic_bandwidth(const Eigen::VectorXd& returns);

// Realised kernel with Parzen weights and bandwidth L on a matrix of
// synchronised returns (rows are intervals).
Eigen::MatrixXd realized_kernel(const Eigen::MatrixXd& returns, int bandwidth);

Eigen::MatrixXd realized_kernel_block(const SyncedReturns& sync, const KernelConfig& config);

struct Block {
    std::string id;
    std::vector<Eigen::Index> assets;
};

struct BlockPartition {
    std::vector<std::vector<Eigen::Index>> groups;
    std::vector<Block> blocks;  // within-group blocks first, then cross-group pairs

    // Groups assets by quote count (most liquid first) into n_groups groups
    // whose sizes differ by at most one.
    static BlockPartition by_liquidity(const DayTicks& day, std::size_t n_groups);
    static BlockPartition from_groups(std::vector<std::vector<Eigen::Index>> groups);
};

CovarianceEstimate brk_covariance(const DayTicks& day, const BlockPartition& partition, const KernelConfig& config);

// Refresh-time realised covariance of all assets with no kernel weights.
Eigen::MatrixXd naive_realized_covariance(const DayTicks& day);

// Elementwise mean of the given estimates followed by eigenvalue clipping.
CovarianceEstimate smooth_and_repair(std::span<const CovarianceEstimate> estimates, double rel_eps = 1e-8);

/// Smoothed, repaired BRK estimate for every day: the raw estimates of the
/// trailing `config.smoothing_window` days (fewer at the start) are averaged.
std::vector<CovarianceEstimate> brk_series(std::span<const DayTicks> days, const KernelConfig& config);

// Header line "# estimator=<tag>,date=<date>,N=<n>" followed by N rows.
// `extra_meta` is appended to the header line as ",<extra_meta>".
void write_covariance(const CovarianceEstimate& est, std::ostream& out, const std::string& extra_meta = "");
CovarianceEstimate read_covariance(std::istream& in);

}  // namespace costaware
