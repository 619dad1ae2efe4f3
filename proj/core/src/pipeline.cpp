#include "costaware/pipeline.hpp"

#include "costaware/errors.hpp"
#include "costaware/simulator.hpp"
#include "csv_util.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

namespace costaware {

namespace {

namespace fs = std::filesystem;

bool uses_model(const ExperimentConfig& c, ModelTag m) {
    for (const auto& s : c.strategies) {
        if (s.kind != StrategyKind::Model) continue;
        if (s.model == m) return true;
        if (s.model == ModelTag::Mixture) {
            const auto& mm = c.backtest.forecast.mixture_models;
            if (std::find(mm.begin(), mm.end(), m) != mm.end()) return true;
        }
    }
    return false;
}

std::vector<ModelTag> pool_models(const ExperimentConfig& c) {
    return c.pool_models.empty() ? c.backtest.forecast.mixture_models : c.pool_models;
}

bool needs_brk(const ExperimentConfig& c) { return uses_model(c, ModelTag::WishartBrk); }

class OutputDir {
public:
    explicit OutputDir(const ExperimentConfig& c)
        : dir_(c.out_dir), header_(c.header_line()), meta_("config_hash=" + c.hash_hex()) {
        fs::create_directories(dir_);
    }
    const std::string& header() const { return header_; }
    // Header text without the leading "# ".
    const std::string& hash_meta() const { return meta_; }

    // Opens `name`, writes the header line unless `raw`, and records the path.
    std::ofstream open(const std::string& name, bool raw = false) {
        const auto path = (fs::path(dir_) / name).string();
        fs::create_directories(fs::path(path).parent_path());
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write " + path);
        if (!raw) out << header_ << '\n';
        written_.push_back(path);
        return out;
    }
    void note(const std::string& path) { written_.push_back(path); }
    std::vector<std::string>& written() { return written_; }

private:
    std::string dir_;
    std::string header_;
    std::string meta_;
    std::vector<std::string> written_;
};

std::string file_safe(std::string s) {
    for (auto& ch : s)
        if (ch == ':') ch = '_';
    return s;
}

// Runs f(i) for i in [0, n) on up to `workers` threads; rethrows the first failure.
template <typename F>
void parallel_for(std::size_t n, int workers, F f) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                f(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = n;
            }
        }
    };
    const auto k = static_cast<std::size_t>(std::max(1, workers));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < std::min(k, n); ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

std::string bp_text(double bp) { return detail::format_double(bp); }

void simulate_outputs(const ExperimentConfig& c, const ExperimentData& d, OutputDir& out) {
    {
        auto f = out.open("returns.csv");
        write_return_panel(d.data.panel, f);
    }
    {
        auto f = out.open("caps.csv");
        write_caps(d.data.caps, f);
    }
    if (!d.ticks.empty()) {
        auto f = out.open("ticks.csv");
        write_ticks(d.ticks, f);
    }
    if (c.simulator) {
        SimulatedMarket m;
        m.panel = d.data.panel;
        m.sigma_true = d.sigma_true;
        const auto dir = (fs::path(c.out_dir) / "ground_truth").string();
        write_ground_truth(m, dir, out.header());
        for (const auto& date : m.panel.dates) out.note((fs::path(dir) / ("ground_truth_cov_" + date + ".csv")).string());
    }
}

void estimate_outputs(const ExperimentConfig& c, const ExperimentData& d, OutputDir& out) {
    const auto& p = d.data.panel;
    const Eigen::Index h = c.backtest.estimation_window;
    if (p.n_days() < h) throw InsufficientDataError("estimate: fewer days than the estimation window");
    for (Estimator e : {Estimator::Sample, Estimator::LedoitWolf}) {
        auto f = out.open("covariance_" + to_string(e) + ".csv", true);
        for (Eigen::Index t = h; t <= p.n_days(); ++t)
            write_covariance(e == Estimator::Sample ? sample_cov(p, t, h) : lw_shrinkage(p, t, h), f, out.hash_meta());
    }
    if (!d.data.brk.empty()) {
        auto f = out.open("covariance_BRK-smoothed.csv", true);
        for (const auto& est : d.data.brk) write_covariance(est, f, out.hash_meta());
    }
}

std::vector<BacktestReport> backtest_outputs(const ExperimentConfig& c, const ExperimentData& d, OutputDir& out) {
    const auto reports = run_backtests(c.strategies, d.data, c.backtest);
    {
        auto f = out.open("report.csv", true);
        write_report(reports, nullptr, f, out.hash_meta());
    }
    {
        auto f = out.open("fees.csv", true);
        write_fee_matrix(reports, fee_matrix(reports, c.backtest.gamma), f, out.hash_meta());
    }
    {
        auto f = out.open("net_returns.csv", true);
        write_net_returns(reports, f, out.hash_meta());
    }
    for (const auto& r : reports) {
        auto f = out.open("weights/" + file_safe(r.strategy) + ".csv", true);
        write_weights(r, f, out.hash_meta());
    }
    return reports;
}

void sweep_outputs(const ExperimentConfig& c, const ExperimentData& d, OutputDir& out) {
    const auto rows = sweep_beta(c, d.data);
    auto f = out.open("sweep_beta.csv");
    f << "estimator,beta_bp,beta_ex_post_bp,sr,to,l1_to_hold,mu,sigma\n";
    for (const auto& r : rows)
        f << to_string(r.estimator) << ',' << bp_text(r.beta_bp) << ',' << bp_text(r.beta_ex_post_bp) << ','
          << detail::format_double(r.metrics.sr) << ',' << detail::format_double(r.metrics.to) << ','
          << detail::format_double(r.l1_to_hold) << ',' << detail::format_double(100.0 * r.metrics.mu) << ','
          << detail::format_double(100.0 * r.metrics.sigma) << '\n';
}

void pool_outputs(const ExperimentConfig& c, const ExperimentData& d, OutputDir& out) {
    const auto run = pool_run(c, d);
    {
        auto f = out.open("scores.csv", true);
        write_score_panel(run.scores, f, out.hash_meta());
    }
    auto f = out.open("pool_weights.csv", true);
    write_pool_weights(run.dates, run.scores.models, run.weights, f, out.hash_meta());
}

void report_outputs(const ExperimentConfig& c, const ExperimentData& d, OutputDir& out,
                    const std::vector<BacktestReport>* reports) {
    std::vector<BacktestReport> own;
    if (!reports) {
        own = run_backtests(c.strategies, d.data, c.backtest);
        reports = &own;
    }
    const Eigen::Index size = c.bootstrap.subset_size > 0 ? c.bootstrap.subset_size : d.data.panel.n_assets();
    const auto boot =
        bootstrap_run(d.data, c.strategies, c.backtest, size, c.bootstrap.n_subsets, c.backtest.seed, c.workers);
    auto f = out.open("bootstrap_report.csv", true);
    write_report(*reports, &boot, f, out.hash_meta());
}

}  // namespace

ExperimentData load_experiment_data(const ExperimentConfig& c) {
    c.validate();
    ExperimentData d;
    if (c.simulator) {
        auto m = simulate_market(*c.simulator);
        d.data.panel = std::move(m.panel);
        d.data.caps = std::move(m.caps);
        d.ticks = std::move(m.ticks);
        d.sigma_true = std::move(m.sigma_true);
    } else {
        d.data.panel = load_return_panel(*c.returns_path);
        if (c.ticks_path) d.ticks = load_ticks(*c.ticks_path);
        if (c.caps_path) {
            std::ifstream in(*c.caps_path);
            if (!in) throw DataError("cannot open " + *c.caps_path);
            d.data.caps = read_caps(in);
        }
    }
    if (!d.ticks.empty()) {
        if (static_cast<Eigen::Index>(d.ticks.size()) != d.data.panel.n_days())
            throw DataError("tick data covers " + std::to_string(d.ticks.size()) + " days, returns cover " +
                            std::to_string(d.data.panel.n_days()));
        d.data.brk = brk_series(d.ticks, c.kernel);
    } else if (needs_brk(c)) {
        throw ConfigError("config: WishartBRK needs tick data; set 'ticks' or 'sim.emit_ticks = true'");
    }
    return d;
}

std::vector<SweepRow> sweep_beta(const ExperimentConfig& c, const BacktestData& data) {
    const auto& s = c.sweep;
    struct Pair {
        double ante, post;
    };
    std::vector<Pair> pairs;
    for (double a : s.beta_bp) {
        if (s.beta_ex_post_bp)
            for (double p : *s.beta_ex_post_bp) pairs.push_back({a, p});
        else
            pairs.push_back({a, a});
    }
    std::vector<Strategy> strategies;
    for (Estimator e : s.estimators) {
        Strategy st;
        st.kind = StrategyKind::PlugIn;
        st.estimator = e;
        strategies.push_back(st);
    }

    std::vector<std::vector<SweepRow>> rows(pairs.size());
    parallel_for(pairs.size(), c.workers, [&](std::size_t i) {
        BacktestConfig b = c.backtest;
        b.cost_kind = s.cost_kind;
        b.beta = pairs[i].ante * 1e-4;
        b.beta_ex_post = pairs[i].post * 1e-4;
        b.warmup = s.warmup.value_or(b.estimation_window);
        const auto reports = run_backtests(strategies, data, b);
        for (std::size_t k = 0; k < reports.size(); ++k) {
            const auto& r = reports[k];
            SweepRow row;
            row.estimator = s.estimators[k];
            row.beta_bp = pairs[i].ante;
            row.beta_ex_post_bp = pairs[i].post;
            row.metrics = r.metrics;
            // Buy-and-hold starts from the same first portfolio and never trades.
            Weights hold(r.weights.row(0).transpose());
            const Eigen::Index first = data.panel.n_days() - r.net.size();
            double dist = 0.0;
            for (Eigen::Index e = 0; e < r.net.size(); ++e) {
                if (e > 0) hold = drifted_weights(hold, data.panel.returns.row(first + e - 1).transpose());
                dist += (r.weights.row(e).transpose() - hold.values()).lpNorm<1>();
            }
            row.l1_to_hold = dist / static_cast<double>(r.net.size());
            rows[i].push_back(row);
        }
    });
    std::vector<SweepRow> out;
    for (auto& r : rows) out.insert(out.end(), r.begin(), r.end());
    return out;
}

PoolRun pool_run(const ExperimentConfig& c, const ExperimentData& d) {
    const auto models = pool_models(c);
    if (d.data.brk.empty() && std::find(models.begin(), models.end(), ModelTag::WishartBrk) != models.end())
        throw ConfigError("config: pooling WishartBRK needs tick data; set 'ticks' or 'sim.emit_ticks = true'");
    ForecastConfig fc = c.backtest.forecast_config();
    const ForecastInputs in{&d.data.panel, d.data.brk.empty() ? nullptr : &d.data.brk};
    std::vector<std::unique_ptr<Forecaster>> owned;
    std::vector<const Forecaster*> comps;
    for (auto m : models) {
        owned.push_back(make_forecaster(m, in, fc));
        comps.push_back(owned.back().get());
    }
    MixtureForecaster mix(comps, in, fc);
    const Eigen::Index start = c.backtest.estimation_window, days = d.data.panel.n_days();
    if (days <= start) throw InsufficientDataError("pool: no day after the estimation window");
    PoolRun run;
    for (Eigen::Index t = start; t < days; ++t) {
        for (auto& f : owned) f->prepare(t);
        mix.prepare(t);
        run.dates.push_back(d.data.panel.dates[static_cast<std::size_t>(t)]);
        run.weights.push_back(mix.weights());
        mix.record(t);
    }
    run.scores = mix.scores();
    return run;
}

std::vector<std::string> cmd_simulate(const ExperimentConfig& c) {
    const auto d = load_experiment_data(c);
    OutputDir out(c);
    simulate_outputs(c, d, out);
    return out.written();
}

std::vector<std::string> cmd_estimate(const ExperimentConfig& c) {
    const auto d = load_experiment_data(c);
    OutputDir out(c);
    estimate_outputs(c, d, out);
    return out.written();
}

std::vector<std::string> cmd_backtest(const ExperimentConfig& c) {
    const auto d = load_experiment_data(c);
    OutputDir out(c);
    backtest_outputs(c, d, out);
    return out.written();
}

std::vector<std::string> cmd_sweep_beta(const ExperimentConfig& c) {
    const auto d = load_experiment_data(c);
    OutputDir out(c);
    sweep_outputs(c, d, out);
    return out.written();
}

std::vector<std::string> cmd_pool(const ExperimentConfig& c) {
    const auto d = load_experiment_data(c);
    OutputDir out(c);
    pool_outputs(c, d, out);
    return out.written();
}

std::vector<std::string> cmd_report(const ExperimentConfig& c) {
    const auto d = load_experiment_data(c);
    OutputDir out(c);
    report_outputs(c, d, out, nullptr);
    return out.written();
}

std::vector<std::string> cmd_run(const ExperimentConfig& c) {
    const auto d = load_experiment_data(c);
    OutputDir out(c);
    simulate_outputs(c, d, out);
    estimate_outputs(c, d, out);
    pool_outputs(c, d, out);
    const auto reports = backtest_outputs(c, d, out);
    report_outputs(c, d, out, &reports);
    sweep_outputs(c, d, out);
    return out.written();
}

}  // namespace costaware
