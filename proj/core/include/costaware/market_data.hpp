#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace costaware {

// Quotes of one asset within one trading day. Timestamps are nanoseconds
// since the session open and strictly increasing.
struct TickSeries {
    std::string asset;
    std::vector<std::int64_t> timestamps_ns;
    std::vector<double> midquotes;

    std::size_t size() const noexcept { return timestamps_ns.size(); }
    void validate() const;
};

struct DayTicks {
    std::string date;
    std::vector<TickSeries> assets;
};

// Daily simple returns, T x N, assets sorted lexicographically.
struct ReturnPanel {
    std::vector<std::string> dates;
    std::vector<std::string> assets;
    Eigen::MatrixXd returns;

    Eigen::Index n_days() const noexcept { return returns.rows(); }
    Eigen::Index n_assets() const noexcept { return returns.cols(); }
    void validate() const;
    ReturnPanel select_assets(std::span<const Eigen::Index> columns) const;
    ReturnPanel head(Eigen::Index n_rows) const;
};

struct SyncedReturns {
    std::string block_id;
    std::vector<std::string> assets;
    std::vector<std::int64_t> refresh_times;
    Eigen::MatrixXd log_returns;  // (refresh_times.size() - 1) x assets
};

// Portfolio weights; construction checks the budget constraint.
class Weights {
public:
    static constexpr double kSumTolerance = 1e-10;

    explicit Weights(Eigen::VectorXd values);
    static Weights equal(Eigen::Index n);

    const Eigen::VectorXd& values() const noexcept { return values_; }
    Eigen::Index size() const noexcept { return values_.size(); }
    double operator()(Eigen::Index i) const { return values_(i); }

private:
    Eigen::VectorXd values_;
};

ReturnPanel load_return_panel(const std::string& path);
ReturnPanel read_return_panel(std::istream& in);
void write_return_panel(const ReturnPanel& panel, std::ostream& out);

std::vector<DayTicks> load_ticks(const std::string& path);
std::vector<DayTicks> read_ticks(std::istream& in);
void write_ticks(std::span<const DayTicks> days, std::ostream& out);

std::map<std::string, double> read_caps(std::istream& in);
void write_caps(const std::map<std::string, double>& caps, std::ostream& out);

// Refresh-time synchronisation of several assets' quotes within a day.
// Prices at each refresh time are the last quote at or before it.
SyncedReturns refresh_time_sample(std::span<const TickSeries> ticks, const std::string& block_id = "");

// Pre-trade weights after one period of returns r: w o (1+r) / (1 + w'r).
Weights drifted_weights(const Weights& w, const Eigen::VectorXd& r);

}  // namespace costaware
