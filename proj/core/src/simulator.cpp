#include "costaware/simulator.hpp"

#include "costaware/errors.hpp"
#include "costaware/random.hpp"
#include "csv_util.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace costaware {

namespace {

constexpr std::uint64_t kStaticStream = 0;
constexpr std::uint64_t kVolStream = 1;
constexpr std::uint64_t kReturnStream = 2;
constexpr std::uint64_t kDayStreamBase = 1000;

std::vector<std::string> asset_names(std::size_t n) {
    std::size_t width = 2;
    for (std::size_t m = n > 0 ? n - 1 : 0; m >= 100; m /= 10) ++width;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::string digits = std::to_string(i);
        out.push_back("A" + std::string(width - std::min(width, digits.size()), '0') + digits);
    }
    return out;
}

void check_config(const MarketConfig& c) {
    if (c.n_assets < 1) throw ConfigError("simulator: n_assets must be at least 1");
    if (c.n_days < 2) throw ConfigError("simulator: n_days must be at least 2");
    if (!(c.tick_intensity > 0.0)) throw ConfigError("simulator: tick_intensity must be positive");
    if (!(c.session_seconds > 0.0)) throw ConfigError("simulator: session_seconds must be positive");
    if (!(c.noise.variance >= 0.0)) throw ConfigError("simulator: noise variance must be non-negative");
    const auto& f = c.factor;
    if (!(f.market_vol >= 0.0) || !(f.loading_sd >= 0.0) || !(f.idio_vol_low > 0.0) ||
        !(f.idio_vol_high >= f.idio_vol_low))
        throw ConfigError("simulator: invalid volatility settings");
    if (!(std::abs(f.sv_persistence) < 1.0) || !(f.sv_vol >= 0.0))
        throw ConfigError("simulator: sv_persistence must lie in (-1, 1) and sv_vol be non-negative");
}

}  // namespace

std::vector<std::string> business_days(const std::string& start, std::size_t n) {
    using namespace std::chrono;
    if (!detail::is_iso_date(start)) throw ConfigError("start_date must be an ISO date, got '" + start + "'");
    const year_month_day ymd{year{std::stoi(start.substr(0, 4))}, month{static_cast<unsigned>(std::stoi(start.substr(5, 2)))},
                             day{static_cast<unsigned>(std::stoi(start.substr(8, 2)))}};
    if (!ymd.ok()) throw ConfigError("start_date is not a valid calendar date: " + start);
    sys_days d{ymd};
    std::vector<std::string> out;
    out.reserve(n);
    while (out.size() < n) {
        const weekday wd{d};
        if (wd != Saturday && wd != Sunday) {
            const year_month_day cur{d};
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(cur.year()),
                          static_cast<unsigned>(cur.month()), static_cast<unsigned>(cur.day()));
            out.emplace_back(buf);
        }
        d += days{1};
    }
    return out;
}

MarketSimulator::MarketSimulator(MarketConfig config) : config_(std::move(config)) {
    check_config(config_);
    const auto n = static_cast<Eigen::Index>(config_.n_assets);
    const auto t = static_cast<Eigen::Index>(config_.n_days);
    const auto& f = config_.factor;

    Engine eng = make_engine(config_.seed, kStaticStream);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> ud(f.idio_vol_low, f.idio_vol_high);
    Eigen::VectorXd loadings(n), idio(n);
    for (Eigen::Index i = 0; i < n; ++i) loadings(i) = f.loading_mean + f.loading_sd * nd(eng);
    for (Eigen::Index i = 0; i < n; ++i) idio(i) = ud(eng);
    base_ = f.market_vol * f.market_vol * loadings * loadings.transpose();
    base_.diagonal() += idio.cwiseAbs2();
    base_chol_ = Eigen::LLT<Eigen::MatrixXd>(base_).matrixL();

    const auto names = asset_names(config_.n_assets);
    for (Eigen::Index i = 0; i < n; ++i) caps_[names[i]] = std::exp(std::log(1e10) + nd(eng));

    Engine vol_eng = make_engine(config_.seed, kVolStream);
    const double phi = f.sv_persistence;
    const double stat_var = f.sv_vol * f.sv_vol / (1.0 - phi * phi);
    double h = std::sqrt(stat_var) * nd(vol_eng);
    day_scale_.resize(config_.n_days);
    for (std::size_t d = 0; d < config_.n_days; ++d) {
        if (d > 0) h = phi * h + f.sv_vol * nd(vol_eng);
        day_scale_[d] = std::exp(h - 0.5 * stat_var);
    }

    Engine ret_eng = make_engine(config_.seed, kReturnStream);
    day_log_returns_.resize(t, n);
    open_levels_.resize(t, n);
    sigma_true_.reserve(config_.n_days);
    Eigen::VectorXd level = Eigen::VectorXd::Constant(n, std::log(100.0));
    for (Eigen::Index d = 0; d < t; ++d) {
        const double scale = day_scale_[static_cast<std::size_t>(d)];
        sigma_true_.push_back(scale * base_);
        Eigen::VectorXd x = Eigen::VectorXd::Constant(n, f.drift) + std::sqrt(scale) * (base_chol_ * standard_normal(ret_eng, n));
        day_log_returns_.row(d) = x.transpose();
        open_levels_.row(d) = level.transpose();
        level += x;
    }

    panel_.dates = business_days(config_.start_date, config_.n_days);
    panel_.assets = names;
    panel_.returns = day_log_returns_.array().expm1().matrix();
    panel_.validate();
}

DayTicks MarketSimulator::ticks(std::size_t day) const {
    if (day >= config_.n_days) throw RangeError("simulator: day " + std::to_string(day) + " out of range");
    const std::size_t n = config_.n_assets;
    const double session = config_.session_seconds;
    Engine eng = make_engine(config_.seed, kDayStreamBase + day);
    std::exponential_distribution<double> gap(config_.tick_intensity);

    auto draw_times = [&]() {
        std::vector<std::int64_t> ts;
        double clock = gap(eng);
        while (clock < session) {
            const auto ns = static_cast<std::int64_t>(std::floor(clock * 1e9));
            if (ts.empty() || ns > ts.back()) ts.push_back(ns);
            clock += gap(eng);
        }
        return ts;
    };

    std::vector<std::vector<std::int64_t>> times(n);
    if (config_.synchronous) {
        auto common = draw_times();
        for (auto& v : times) v = common;
    } else {
        for (auto& v : times) v = draw_times();
    }

    std::vector<std::int64_t> grid;
    for (const auto& v : times) grid.insert(grid.end(), v.begin(), v.end());
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    const auto ni = static_cast<Eigen::Index>(n);
    const Eigen::VectorXd target = day_log_returns_.row(static_cast<Eigen::Index>(day)).transpose();
    const Eigen::MatrixXd chol = std::sqrt(day_scale_[day]) * base_chol_;
    Eigen::MatrixXd path(static_cast<Eigen::Index>(grid.size()), ni);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(ni);
    double prev = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double u = static_cast<double>(grid[k]) * 1e-9;
        const double dt = u - prev;
        const double remaining = session - prev;
        if (dt > 0.0) {
            const double w = dt / remaining;
            const double var = dt * (remaining - dt) / (remaining * session);
            x += w * (target - x) + std::sqrt(std::max(var, 0.0)) * (chol * standard_normal(eng, ni));
        }
        path.row(static_cast<Eigen::Index>(k)) = x.transpose();
        prev = u;
    }

    const double noise_sd = std::sqrt(config_.noise.variance);
    std::normal_distribution<double> nd(0.0, 1.0);
    DayTicks out;
    out.date = panel_.dates[day];
    out.assets.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& s = out.assets[i];
        s.asset = panel_.assets[i];
        s.timestamps_ns = times[i];
        s.midquotes.reserve(times[i].size());
        const double open = open_levels_(static_cast<Eigen::Index>(day), static_cast<Eigen::Index>(i));
        for (std::int64_t ts : times[i]) {
            const auto k = static_cast<Eigen::Index>(std::lower_bound(grid.begin(), grid.end(), ts) - grid.begin());
            const double eps = noise_sd > 0.0 ? noise_sd * nd(eng) : 0.0;
            s.midquotes.push_back(std::exp(open + path(k, static_cast<Eigen::Index>(i)) + eps));
        }
        if (s.size() < 2)
            throw InsufficientDataError("simulator: asset " + s.asset + " drew fewer than 2 quotes on " + out.date +
                                        "; raise tick_intensity");
    }
    return out;
}

SimulatedMarket simulate_market(const MarketConfig& config) {
    MarketSimulator sim(config);
    SimulatedMarket out;
    out.panel = sim.returns();
    out.sigma_true = sim.integrated_covariances();
    out.caps = sim.caps();
    if (config.emit_ticks) {
        out.ticks.reserve(config.n_days);
        for (std::size_t d = 0; d < config.n_days; ++d) out.ticks.push_back(sim.ticks(d));
    }
    return out;
}

void write_ground_truth(const SimulatedMarket& market, const std::string& directory, const std::string& header_line) {
    std::filesystem::create_directories(directory);
    for (std::size_t d = 0; d < market.sigma_true.size(); ++d) {
        const auto path = std::filesystem::path(directory) / ("ground_truth_cov_" + market.panel.dates[d] + ".csv");
        std::ofstream out(path);
        if (!out) throw DataError("cannot write " + path.string());
        if (!header_line.empty()) out << header_line << '\n';
        const auto& m = market.sigma_true[d];
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << detail::format_double(m(i, j));
            out << '\n';
        }
    }
}

}  // namespace costaware
