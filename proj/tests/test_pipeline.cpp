#include "costaware/errors.hpp"
#include "costaware/pipeline.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <filesystem>

using namespace costaware;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"(# three assets, 600 days
sim.n_assets = 3
sim.n_days = 600
sim.emit_ticks = true
sim.tick_intensity = 0.01
sim.noise_variance = 1e-8
strategies = model:Mixture,model:GaussianLW:nocost,naive,market,jorion
mixture_models = WishartBRK,FactorSV,GaussianSample
estimation_window = 150
pooling_window = 50
draws = 500
kappa.burn_in = 100
kappa.draws = 100
sv.burn_in = 200
sv.draws = 200
sv.warm_burn_in = 10
sv.warm_draws = 20
sv.refit_every = 10
sv.min_window = 100
sweep.beta_bp = 0,10
bootstrap.subset_size = 2
bootstrap.n_subsets = 2
)";

ExperimentConfig config_of(const std::string& text, const std::string& out = "", int workers = 1) {
    auto kv = KeyValueConfig::parse(text);
    if (!out.empty()) kv.set("out", out);
    kv.set("workers", std::to_string(workers));
    return ExperimentConfig::from(kv);
}

std::string sweep_text(const std::string& extra, std::uint64_t seed = 5) {
    return "sim.n_assets = 6\nsim.n_days = 400\nestimation_window = 120\nstrategies = naive\nseed = " +
           std::to_string(seed) + "\n" + extra;
}

}  // namespace

TEST_CASE("key-value parsing") {
    const auto kv = KeyValueConfig::parse("# c\n\n a = 1 \nb=x,y\nflag = true\n");
    CHECK(kv.integer("a") == 1);
    CHECK(kv.text("b") == "x,y");
    CHECK(kv.flag("flag") == true);
    CHECK_FALSE(kv.number("missing"));
    CHECK_THROWS_AS(KeyValueConfig::parse("a=1\na=2\n"), ParseError);
    CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign\n"), ParseError);
    CHECK_THROWS_AS(KeyValueConfig::parse("a = x").number("a"), ConfigError);
    CHECK(KeyValueConfig::parse("g = 1, 2.5 ,3").number_list("g") == std::vector<double>{1.0, 2.5, 3.0});
}

TEST_CASE("FNV-1a reference values") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("config validation names the offending field") {
    try {
        config_of("strategies = naive\n");
        FAIL("expected a configuration error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("returns") != std::string::npos);
        CHECK(std::string(e.what()).find("sim.n_assets") != std::string::npos);
    }
    CHECK_THROWS_AS(config_of("returns = /nonexistent/returns.csv\n"), ConfigError);
    CHECK_THROWS_AS(config_of("sim.n_assets = 3\nsweep.beta_bp = 0,-1\n"), ConfigError);
    CHECK_THROWS_AS(config_of("sim.n_assets = 3\nbogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(config_of("sim.n_days = 3\n"), ConfigError);
    CHECK_THROWS_AS(config_of("sim.n_assets = 3\nstrategies = model:Nope\n"), ConfigError);
    CHECK_THROWS_AS(config_of("sim.n_assets = 3\ncost = l3\n"), ConfigError);
    CHECK_THROWS_AS(load_experiment_data(config_of("sim.n_assets = 3\nstrategies = model:WishartBRK\n")), ConfigError);
}

TEST_CASE("config hash ignores layout, output directory and worker count") {
    const auto a = config_of("sim.n_assets = 3\nseed = 4\n", "x", 1);
    const auto b = config_of("# comment\nseed=4\n\nsim.n_assets=3\n", "y", 7);
    const auto c = config_of("sim.n_assets = 3\nseed = 5\n");
    CHECK(a.hash == b.hash);
    CHECK(a.hash != c.hash);
    CHECK(a.header_line() == "# config_hash=" + a.hash_hex());
    CHECK(a.hash_hex().size() == 16);
}

TEST_CASE("full pipeline on a small simulated market") {
    const auto dir1 = testing::temp_path("pipeline_run_1").string(), dir2 = testing::temp_path("pipeline_run_2").string();
    fs::remove_all(dir1);
    fs::remove_all(dir2);
    const auto c1 = config_of(kSmall, dir1, 1);
    const auto written = cmd_run(c1);
    for (const char* name : {"returns.csv", "caps.csv", "ticks.csv", "covariance_Sample.csv", "covariance_LW.csv",
                             "covariance_BRK-smoothed.csv", "scores.csv", "pool_weights.csv", "report.csv", "fees.csv",
                             "net_returns.csv", "bootstrap_report.csv", "sweep_beta.csv", "weights/Mixture.csv",
                             "weights/GaussianLW_nocost.csv", "ground_truth"})
        CHECK_MESSAGE(fs::exists(fs::path(dir1) / name), name);
    for (const auto& path : written) {
        const auto text = testing::read_text(path);
        const auto first = text.substr(0, text.find('\n'));
        CHECK_MESSAGE(first.find("config_hash=" + c1.hash_hex()) != std::string::npos, path);
    }

    // Same configuration and seed, different worker count.
    const auto written2 = cmd_run(config_of(kSmall, dir2, 3));
    REQUIRE(written.size() == written2.size());
    for (std::size_t i = 0; i < written.size(); ++i)
        CHECK_MESSAGE(testing::read_text(written[i]) == testing::read_text(written2[i]), written[i]);

    // The simulated files feed a file-based run.
    const auto dir3 = testing::temp_path("pipeline_run_3").string();
    fs::remove_all(dir3);
    const auto from_files = config_of("returns = " + dir1 + "/returns.csv\ncaps = " + dir1 +
                                          "/caps.csv\nestimation_window = 150\npooling_window = 50\n"
                                          "strategies = naive,market\n",
                                      dir3);
    cmd_backtest(from_files);
    const auto sim_report = testing::read_text(dir1 + "/report.csv");
    const auto file_report = testing::read_text(dir3 + "/report.csv");
    const auto body = [](const std::string& s) { return s.substr(s.find("\nNaive,")); };
    const auto naive_line = [&](const std::string& s) { return body(s).substr(0, body(s).find('\n', 1)); };
    CHECK(naive_line(sim_report) == naive_line(file_report));
}

TEST_CASE("zero cost grid reduces to the minimum-variance backtest") {
    const auto c = config_of(sweep_text("sweep.beta_bp = 0\nsweep.estimators = LW\n"));
    const auto d = load_experiment_data(c);
    const auto rows = sweep_beta(c, d.data);
    REQUIRE(rows.size() == 1);
    auto b = c.backtest;
    b.warmup = b.estimation_window;
    b.beta = 0.0;
    const auto mvp = run_backtest(Strategy::parse("mvp"), d.data, b);
    CHECK(std::abs(rows[0].metrics.sr - mvp.metrics.sr) < 1e-10);
    CHECK(std::abs(rows[0].metrics.to - mvp.metrics.to) < 1e-10);
    CHECK(std::abs(rows[0].metrics.mu - mvp.metrics.mu) < 1e-10);
}

TEST_CASE("ex-ante by ex-post grid contains the plain sweep on its diagonal") {
    const auto plain_cfg = config_of(sweep_text("sweep.beta_bp = 0,10,100\n"));
    const auto grid_cfg = config_of(sweep_text("sweep.beta_bp = 0,10,100\nsweep.beta_ex_post_bp = 0,10,100\n"), "", 3);
    const auto d = load_experiment_data(plain_cfg);
    const auto plain = sweep_beta(plain_cfg, d.data);
    const auto grid = sweep_beta(grid_cfg, d.data);
    CHECK(grid.size() == 3 * plain.size());
    std::size_t matched = 0;
    for (const auto& g : grid) {
        if (g.beta_bp != g.beta_ex_post_bp) continue;
        for (const auto& p : plain) {
            if (p.beta_bp != g.beta_bp || p.estimator != g.estimator) continue;
            CHECK(metric_fields(p.metrics) == metric_fields(g.metrics));
            CHECK(p.l1_to_hold == g.l1_to_hold);
            ++matched;
        }
    }
    CHECK(matched == plain.size());
}

TEST_CASE("turnover does not increase with the ex-ante cost level") {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto c = config_of(sweep_text("sweep.beta_bp = 0,1,10,50,100,1000\n", seed));
        const auto rows = sweep_beta(c, load_experiment_data(c).data);
        for (Estimator e : c.sweep.estimators) {
            double prev = std::numeric_limits<double>::infinity();
            for (const auto& r : rows) {
                if (r.estimator != e) continue;
                CHECK(r.metrics.to <= prev);
                prev = r.metrics.to;
            }
        }
    }
}

TEST_CASE("pool run weights are on the simplex") {
    const auto c = config_of("sim.n_assets = 3\nsim.n_days = 220\nestimation_window = 100\n"
                             "pool.models = GaussianSample,GaussianLW\npooling_window = 40\n");
    const auto run = pool_run(c, load_experiment_data(c));
    CHECK(run.scores.log_density.rows() == 120);
    CHECK(run.weights.size() == 120);
    for (const auto& w : run.weights) {
        CHECK(std::abs(w.sum() - 1.0) < 1e-12);
        CHECK(w.minCoeff() >= 0.0);
    }
}
