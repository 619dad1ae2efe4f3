#pragma once

#include "costaware/market_data.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace costaware {

// One-factor structure of the base daily covariance plus an optional
// stochastic-volatility overlay that scales it day by day.
struct FactorConfig {
    double market_vol = 0.01;     // daily factor volatility
    double loading_mean = 1.0;
    double loading_sd = 0.3;
    double idio_vol_low = 0.01;   // daily idiosyncratic volatility range
    double idio_vol_high = 0.02;
    double drift = 0.0004;        // daily log drift, common to all assets
    double sv_persistence = 0.97;
    double sv_vol = 0.0;          // 0 disables the overlay
};

struct NoiseConfig {
    double variance = 0.0;  // variance of the iid log-midquote noise
};

struct MarketConfig {
    std::size_t n_assets = 4;
    std::size_t n_days = 10;
    FactorConfig factor;
    NoiseConfig noise;
    double tick_intensity = 1.0;      // Poisson quotes per second per asset
    double session_seconds = 23400.0;
    bool synchronous = false;         // all assets quote at the same times
    bool emit_ticks = true;
    std::uint64_t seed = 1;
    std::string start_date = "2000-01-03";
};

// Deterministic synthetic market. Daily log returns are Gaussian with the
// day's covariance; intraday latent log prices follow a Brownian bridge that
// ends at the day's return, so the integrated covariance of the latent path
// is exactly the day's covariance matrix. Ticks for a day are regenerated on
// demand from a per-day stream, so they need not be stored.
class MarketSimulator {
public:
    explicit MarketSimulator(MarketConfig config);

    const MarketConfig& config() const noexcept { return config_; }
    const ReturnPanel& returns() const noexcept { return panel_; }
    const std::vector<Eigen::MatrixXd>& integrated_covariances() const noexcept { return sigma_true_; }
    const std::map<std::string, double>& caps() const noexcept { return caps_; }
    const Eigen::MatrixXd& base_covariance() const noexcept { return base_; }

    DayTicks ticks(std::size_t day) const;

private:
    MarketConfig config_;
    ReturnPanel panel_;
    std::vector<Eigen::MatrixXd> sigma_true_;
    Eigen::MatrixXd day_log_returns_;  // T x N
    Eigen::MatrixXd open_levels_;      // T x N log price at each day's open
    Eigen::MatrixXd base_;
    Eigen::MatrixXd base_chol_;
    std::vector<double> day_scale_;
    std::map<std::string, double> caps_;
};

struct SimulatedMarket {
    ReturnPanel panel;
    std::vector<Eigen::MatrixXd> sigma_true;
    std::vector<DayTicks> ticks;  // empty unless config.emit_ticks
    std::map<std::string, double> caps;
};

SimulatedMarket simulate_market(const MarketConfig& config);

// Business-day calendar starting at an ISO date, skipping weekends.
std::vector<std::string> business_days(const std::string& start, std::size_t n);

// Writes ground_truth_cov_<date>.csv (row-major N x N, one row per line).
void write_ground_truth(const SimulatedMarket& market, const std::string& directory, const std::string& header_line);

}  // namespace costaware
