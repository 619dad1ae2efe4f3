#include "costaware/errors.hpp"
#include "costaware/market_data.hpp"
#include "costaware/simulator.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <sstream>

using namespace costaware;

namespace {

TickSeries series(const std::string& name, std::vector<std::int64_t> ts, std::vector<double> px = {}) {
    if (px.empty())
        for (std::size_t k = 0; k < ts.size(); ++k) px.push_back(100.0 + static_cast<double>(k));
    return TickSeries{name, std::move(ts), std::move(px)};
}

}  // namespace

TEST_CASE("return panel CSV pivots long rows and sorts assets") {
    std::istringstream in(
        "date,asset,return\n"
        "2020-01-02,ZZZ,0.01\n"
        "2020-01-02,AAA,-0.02\n"
        "2020-01-03,AAA,0.03\n"
        "2020-01-03,ZZZ,0.0\n");
    const auto panel = read_return_panel(in);
    REQUIRE(panel.assets == std::vector<std::string>{"AAA", "ZZZ"});
    REQUIRE(panel.dates == std::vector<std::string>{"2020-01-02", "2020-01-03"});
    CHECK(panel.returns(0, 0) == doctest::Approx(-0.02));
    CHECK(panel.returns(0, 1) == doctest::Approx(0.01));
    CHECK(panel.returns(1, 0) == doctest::Approx(0.03));
}

TEST_CASE("return panel CSV round-trips exactly") {
    MarketConfig cfg;
    cfg.n_assets = 3;
    cfg.n_days = 20;
    cfg.emit_ticks = false;
    const auto panel = MarketSimulator(cfg).returns();
    std::stringstream buf;
    write_return_panel(panel, buf);
    const auto back = read_return_panel(buf);
    CHECK(back.dates == panel.dates);
    CHECK(back.assets == panel.assets);
    CHECK((back.returns - panel.returns).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("return panel parse errors carry the line number") {
    std::istringstream in("date,asset,return\n2020-01-02,AAA,0.01\n2020-01-02,BBB,abc\n");
    try {
        read_return_panel(in);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    std::istringstream bad_fields("date,asset,return\n2020-01-02,AAA\n");
    CHECK_THROWS_AS(read_return_panel(bad_fields), ParseError);
    std::istringstream bad_date("date,asset,return\n2020/01/02,AAA,0.1\n");
    CHECK_THROWS_AS(read_return_panel(bad_date), ParseError);
}

TEST_CASE("return at or below -1 is rejected with the offending row") {
    std::istringstream in("date,asset,return\n2020-01-02,AAA,0.01\n2020-01-03,AAA,-1.0\n");
    try {
        read_return_panel(in);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("missing cells are validation errors") {
    std::istringstream empty_cell("date,asset,return\n2020-01-02,AAA,\n2020-01-03,AAA,0.1\n");
    CHECK_THROWS_AS(read_return_panel(empty_cell), ValidationError);
    std::istringstream hole(
        "date,asset,return\n2020-01-02,AAA,0.1\n2020-01-02,BBB,0.1\n2020-01-03,AAA,0.1\n");
    CHECK_THROWS_AS(read_return_panel(hole), ValidationError);
}

TEST_CASE("empty file reports no data") {
    const auto p = testing::temp_path("empty.csv");
    testing::write_text(p, "");
    try {
        load_return_panel(p.string());
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("no data") != std::string::npos);
    }
    std::istringstream header_only("date,asset,return\n");
    CHECK_THROWS_WITH_AS(read_return_panel(header_only), doctest::Contains("no data"), DataError);
}

TEST_CASE("refresh times for interleaved quotes") {
    const std::vector<TickSeries> ticks{series("A", {1, 3, 5}), series("B", {2, 4, 6})};
    const auto sync = refresh_time_sample(ticks, "ab");
    CHECK(sync.refresh_times == std::vector<std::int64_t>{2, 4, 6});
    REQUIRE(sync.log_returns.rows() == 2);
    // A at 2 is its quote at 1 (price 100), at 4 its quote at 3 (101).
    CHECK(sync.log_returns(0, 0) == doctest::Approx(std::log(101.0 / 100.0)));
    CHECK(sync.log_returns(0, 1) == doctest::Approx(std::log(101.0 / 100.0)));
}

TEST_CASE("refresh times for identical quote times") {
    const std::vector<TickSeries> ticks{series("A", {1, 2, 3}), series("B", {1, 2, 3})};
    CHECK(refresh_time_sample(ticks).refresh_times == std::vector<std::int64_t>{1, 2, 3});
}

TEST_CASE("refresh prices use the closed interval at the refresh time") {
    const std::vector<TickSeries> ticks{series("A", {1, 4, 9}, {10, 20, 40}), series("B", {4, 5, 9}, {1, 2, 3})};
    const auto sync = refresh_time_sample(ticks);
    REQUIRE(sync.refresh_times == std::vector<std::int64_t>{4, 9});
    CHECK(sync.log_returns(0, 0) == doctest::Approx(std::log(2.0)));
    CHECK(sync.log_returns(0, 1) == doctest::Approx(std::log(3.0)));
}

TEST_CASE("refresh sampling rejects assets with fewer than two quotes") {
    const std::vector<TickSeries> ticks{series("A", {1, 2, 3}), series("LONELY", {2})};
    CHECK_THROWS_WITH_AS(refresh_time_sample(ticks), doctest::Contains("LONELY"), InsufficientDataError);
}

TEST_CASE("refresh sampling properties on random quote streams") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        auto eng = make_engine(seed, 5);
        std::uniform_int_distribution<int> count(2, 60), gap(1, 20), nassets(1, 5);
        const int n = nassets(eng);
        std::vector<TickSeries> ticks;
        std::size_t min_count = 1u << 30;
        for (int a = 0; a < n; ++a) {
            std::vector<std::int64_t> ts;
            std::int64_t t = 0;
            const int c = count(eng);
            for (int k = 0; k < c; ++k) ts.push_back(t += gap(eng));
            min_count = std::min(min_count, ts.size());
            ticks.push_back(series("S" + std::to_string(a), ts));
        }
        const auto sync = refresh_time_sample(ticks);
        CHECK(sync.refresh_times.size() <= min_count);
        for (std::size_t l = 0; l + 1 < sync.refresh_times.size(); ++l)
            for (const auto& s : ticks) {
                const auto lo = sync.refresh_times[l], hi = sync.refresh_times[l + 1];
                const bool has = std::any_of(s.timestamps_ns.begin(), s.timestamps_ns.end(),
                                             [&](std::int64_t x) { return x > lo && x <= hi; });
                CHECK(has);
            }
    }
}

TEST_CASE("drifted weights example and budget identity") {
    const auto w = drifted_weights(Weights(Eigen::Vector2d(0.5, 0.5)), Eigen::Vector2d(0.1, -0.1));
    CHECK(w(0) == doctest::Approx(0.55).epsilon(1e-14));
    CHECK(w(1) == doctest::Approx(0.45).epsilon(1e-14));
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        Eigen::VectorXd raw = testing::random_normal(6, seed);
        raw /= raw.sum();
        const Eigen::VectorXd r = testing::random_normal(6, seed + 100, 0.02);
        if (1.0 + raw.dot(r) <= 0.0) continue;
        const auto d = drifted_weights(Weights(raw), r);
        CHECK(std::abs(d.values().sum() - 1.0) <= 1e-12);
    }
}

TEST_CASE("drifted weights reject a non-positive gross return") {
    const Weights lev(Eigen::Vector2d(3.0, -2.0));
    CHECK_THROWS_AS(drifted_weights(lev, Eigen::Vector2d(-0.5, 0.1)), DomainError);
}

TEST_CASE("weights must sum to one") {
    CHECK_THROWS_AS(Weights(Eigen::Vector2d(0.5, 0.6)), ValidationError);
    CHECK_NOTHROW(Weights(Eigen::Vector2d(0.5, 0.5 + 1e-12)));
}

TEST_CASE("simulator is deterministic for a fixed seed") {
    MarketConfig cfg;
    cfg.n_assets = 3;
    cfg.n_days = 4;
    cfg.tick_intensity = 0.05;
    cfg.noise.variance = 1e-7;
    cfg.factor.sv_vol = 0.2;
    const auto a = simulate_market(cfg);
    const auto b = simulate_market(cfg);
    CHECK(a.panel.returns == b.panel.returns);
    for (std::size_t d = 0; d < a.ticks.size(); ++d)
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(a.ticks[d].assets[i].timestamps_ns == b.ticks[d].assets[i].timestamps_ns);
            CHECK(a.ticks[d].assets[i].midquotes == b.ticks[d].assets[i].midquotes);
        }
    cfg.seed = 2;
    CHECK(simulate_market(cfg).panel.returns != a.panel.returns);
}

TEST_CASE("simulator rejects a non-positive tick intensity") {
    MarketConfig cfg;
    cfg.tick_intensity = 0.0;
    CHECK_THROWS_AS(MarketSimulator{cfg}, ConfigError);
    cfg.tick_intensity = -1.0;
    CHECK_THROWS_AS(MarketSimulator{cfg}, ConfigError);
}

TEST_CASE("simulated ticks close at the day's return") {
    MarketConfig cfg;
    cfg.n_assets = 2;
    cfg.n_days = 3;
    cfg.tick_intensity = 1.0;
    cfg.session_seconds = 600.0;
    const MarketSimulator sim(cfg);
    for (std::size_t d = 0; d < 2; ++d) {
        const auto today = sim.ticks(d);
        const auto tomorrow = sim.ticks(d + 1);
        for (std::size_t i = 0; i < 2; ++i) {
            // With dense quotes the last price of a day and the first of the
            // next are close to each other.
            const double last = today.assets[i].midquotes.back();
            const double first = tomorrow.assets[i].midquotes.front();
            CHECK(std::abs(std::log(first / last)) < 0.01);
        }
    }
}

TEST_CASE("zero-noise realised covariance converges to the integrated covariance") {
    double prev_rmse = 1e300;
    for (double intensity : {1.0, 10.0, 100.0}) {
        MarketConfig cfg;
        cfg.n_assets = 2;
        cfg.n_days = 3;
        cfg.tick_intensity = intensity;
        cfg.session_seconds = 1200.0;
        cfg.seed = 11;
        const MarketSimulator sim(cfg);
        double sse = 0.0;
        for (std::size_t d = 0; d < cfg.n_days; ++d) {
            const auto sync = refresh_time_sample(sim.ticks(d).assets);
            const Eigen::MatrixXd rc = sync.log_returns.transpose() * sync.log_returns;
            sse += (rc - sim.integrated_covariances()[d]).squaredNorm();
        }
        const double rmse = std::sqrt(sse / 3.0);
        CHECK(rmse < prev_rmse);
        prev_rmse = rmse;
    }
}

TEST_CASE("one quote per second without noise recovers the daily variance") {
    MarketConfig cfg;
    cfg.n_assets = 1;
    cfg.n_days = 2;
    cfg.tick_intensity = 1.0;
    cfg.seed = 3;
    const MarketSimulator sim(cfg);
    const auto sync = refresh_time_sample(sim.ticks(0).assets);
    const double rv = sync.log_returns.squaredNorm();
    const double truth = sim.integrated_covariances()[0](0, 0);
    // Relative standard error of realised variance with ~23400 returns is ~1%.
    CHECK(std::abs(rv / truth - 1.0) < 0.05);
}

TEST_CASE("tick CSV round trip and duplicate timestamps") {
    MarketConfig cfg;
    cfg.n_assets = 2;
    cfg.n_days = 2;
    cfg.tick_intensity = 0.01;
    const auto m = simulate_market(cfg);
    std::stringstream buf;
    write_ticks(m.ticks, buf);
    const auto back = read_ticks(buf);
    REQUIRE(back.size() == 2);
    CHECK(back[1].assets[1].midquotes == m.ticks[1].assets[1].midquotes);
    std::istringstream dup(
        "date,asset,timestamp_ns,midquote\n2020-01-02,A,5,1.0\n2020-01-02,A,5,1.1\n2020-01-02,A,6,1.1\n");
    CHECK_THROWS_AS(read_ticks(dup), ValidationError);
}
