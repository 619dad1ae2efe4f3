#include "costaware/covariance.hpp"
#include "costaware/errors.hpp"
#include "costaware/linalg.hpp"
#include "costaware/simulator.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <sstream>

using namespace costaware;

namespace {

ReturnPanel panel_from(const Eigen::MatrixXd& r) {
    ReturnPanel p;
    p.returns = r;
    for (Eigen::Index t = 0; t < r.rows(); ++t) p.dates.push_back("d" + std::to_string(1000 + t));
    for (Eigen::Index i = 0; i < r.cols(); ++i) p.assets.push_back("A" + std::to_string(10 + i));
    return p;
}

Eigen::MatrixXd random_returns(Eigen::Index t, Eigen::Index n, std::uint64_t seed) {
    auto eng = make_engine(seed, 21);
    std::normal_distribution<double> nd(0.0, 0.01);
    std::student_t_distribution<double> st(5.0);
    Eigen::MatrixXd r(t, n);
    for (Eigen::Index a = 0; a < t; ++a) {
        const double common = nd(eng);
        for (Eigen::Index b = 0; b < n; ++b) r(a, b) = 0.5 * common + 0.01 * (1.0 + 0.1 * b) * st(eng) / 1.3;
    }
    return r;
}

// Literal transcription of the published constant-correlation shrinkage
// intensity, written with explicit loops over the individual terms.
double lw_intensity_oracle(const Eigen::MatrixXd& y) {
    const auto T = static_cast<int>(y.rows());
    const auto N = static_cast<int>(y.cols());
    std::vector<double> ybar(N, 0.0);
    for (int i = 0; i < N; ++i) {
        for (int t = 0; t < T; ++t) ybar[i] += y(t, i);
        ybar[i] /= T;
    }
    auto s = [&](int i, int j) {
        double acc = 0.0;
        for (int t = 0; t < T; ++t) acc += (y(t, i) - ybar[i]) * (y(t, j) - ybar[j]);
        return acc / T;
    };
    std::vector<std::vector<double>> S(N, std::vector<double>(N));
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) S[i][j] = s(i, j);
    double rbar = 0.0;
    for (int i = 0; i < N - 1; ++i)
        for (int j = i + 1; j < N; ++j) rbar += S[i][j] / std::sqrt(S[i][i] * S[j][j]);
    rbar *= 2.0 / (N * (N - 1.0));

    auto pi_ij = [&](int i, int j) {
        double acc = 0.0;
        for (int t = 0; t < T; ++t) {
            const double v = (y(t, i) - ybar[i]) * (y(t, j) - ybar[j]) - S[i][j];
            acc += v * v;
        }
        return acc / T;
    };
    auto theta = [&](int k, int i, int j) {  // theta_{kk,ij}
        double acc = 0.0;
        for (int t = 0; t < T; ++t) {
            const double a = (y(t, k) - ybar[k]) * (y(t, k) - ybar[k]) - S[k][k];
            const double b = (y(t, i) - ybar[i]) * (y(t, j) - ybar[j]) - S[i][j];
            acc += a * b;
        }
        return acc / T;
    };
    double pi_hat = 0.0, rho_hat = 0.0, gamma_hat = 0.0;
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) pi_hat += pi_ij(i, j);
    for (int i = 0; i < N; ++i) rho_hat += pi_ij(i, i);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            if (i == j) continue;
            rho_hat += rbar / 2.0 *
                       (std::sqrt(S[j][j] / S[i][i]) * theta(i, i, j) + std::sqrt(S[i][i] / S[j][j]) * theta(j, i, j));
        }
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            const double f = i == j ? S[i][i] : rbar * std::sqrt(S[i][i] * S[j][j]);
            gamma_hat += (f - S[i][j]) * (f - S[i][j]);
        }
    const double kappa = (pi_hat - rho_hat) / gamma_hat;
    return kappa / T;
}

// Realised kernel by direct summation over lags and interval pairs.
Eigen::MatrixXd kernel_oracle(const Eigen::MatrixXd& r, int L) {
    const Eigen::Index n = r.rows(), d = r.cols();
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(d, d);
    for (int h = -L; h <= L; ++h) {
        const double w = parzen(static_cast<double>(std::abs(h)) / (L + 1));
        for (Eigen::Index a = 0; a < d; ++a)
            for (Eigen::Index b = 0; b < d; ++b) {
                double g = 0.0;
                for (Eigen::Index l = 0; l < n; ++l) {
                    const Eigen::Index m = l - h;
                    if (m < 0 || m >= n) continue;
                    g += r(l, a) * r(m, b);
                }
                k(a, b) += w * g;
            }
    }
    return k;
}

}  // namespace

TEST_CASE("sample covariance two-point example") {
    Eigen::MatrixXd r(2, 2);
    r << 0.01, 0.01, -0.01, -0.01;
    const auto est = sample_cov(panel_from(r), 2, 2);
    CHECK((est.matrix.array() - 2e-4).abs().maxCoeff() < 1e-18);
    CHECK(est.estimator == Estimator::Sample);
}

TEST_CASE("sample covariance matches a brute-force window sum") {
    const Eigen::MatrixXd r = random_returns(40, 4, 3);
    const auto est = sample_cov(panel_from(r), 30, 12);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            double mi = 0, mj = 0;
            for (int t = 18; t < 30; ++t) {
                mi += r(t, i) / 12;
                mj += r(t, j) / 12;
            }
            double acc = 0;
            for (int t = 18; t < 30; ++t) acc += (r(t, i) - mi) * (r(t, j) - mj);
            CHECK(est.matrix(i, j) == doctest::Approx(acc / 11).epsilon(1e-12));
        }
}

TEST_CASE("sample covariance window must fit in the history") {
    const auto p = panel_from(random_returns(10, 2, 1));
    CHECK_THROWS_AS(sample_cov(p, 11, 5), RangeError);
    CHECK_THROWS_AS(sample_cov(p, 4, 5), RangeError);
    CHECK_THROWS_AS(sample_cov(p, 5, 1), RangeError);
}

TEST_CASE("sample and shrinkage estimators are permutation equivariant") {
    const Eigen::MatrixXd r = random_returns(50, 5, 9);
    Eigen::VectorXi perm(5);
    perm << 3, 0, 4, 1, 2;
    Eigen::MatrixXd rp(50, 5);
    for (int j = 0; j < 5; ++j) rp.col(j) = r.col(perm(j));
    for (auto fn : {&sample_cov, &lw_shrinkage}) {
        const auto a = fn(panel_from(r), 50, 40).matrix;
        const auto b = fn(panel_from(rp), 50, 40).matrix;
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) CHECK(b(i, j) == doctest::Approx(a(perm(i), perm(j))).epsilon(1e-12));
    }
}

TEST_CASE("shrinkage intensity matches an independent transcription") {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const Eigen::MatrixXd r = random_returns(30 + 5 * static_cast<Eigen::Index>(seed), 6, seed);
        const double got = lw_intensity(r).raw;
        const double want = lw_intensity_oracle(r);
        CHECK(std::abs(got - want) <= 1e-10);
    }
}

TEST_CASE("shrinkage intensity is clamped into the unit interval") {
    bool saw_above = false;
    for (std::uint64_t seed = 1; seed <= 40 && !saw_above; ++seed) {
        const Eigen::MatrixXd r = random_returns(4, 12, seed);
        const auto s = lw_intensity(r);
        CHECK(s.clamped >= 0.0);
        CHECK(s.clamped <= 1.0);
        if (s.raw > 1.0) {
            saw_above = true;
            CHECK(s.clamped == 1.0);
        }
    }
    CHECK(saw_above);
}

TEST_CASE("shrinkage rejects a zero-variance asset") {
    Eigen::MatrixXd r = random_returns(20, 3, 2);
    r.col(1).setConstant(0.001);
    CHECK_THROWS_AS(lw_shrinkage(panel_from(r), 20, 20), DegenerateInputError);
}

TEST_CASE("shrinkage improves conditioning when the window is short") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Eigen::MatrixXd r = random_returns(60, 10, seed + 40);
        const auto p = panel_from(r);
        const auto s = sample_cov(p, 60, 15);
        const auto lw = lw_shrinkage(p, 60, 15);
        CHECK(lw.condition_number <= s.condition_number);
    }
}

TEST_CASE("Parzen weights") {
    CHECK(parzen(0.0) == 1.0);
    CHECK(parzen(0.5) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(parzen(1.0) == 0.0);
    CHECK(parzen(1.5) == 0.0);
    CHECK(parzen(0.5 - 1e-12) == doctest::Approx(parzen(0.5 + 1e-12)).epsilon(1e-9));
    CHECK(parzen(-0.3) == parzen(0.3));
}

TEST_CASE("realised kernel equals direct lag summation and is PSD") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const Eigen::MatrixXd r = random_returns(80, 3, seed);
        for (int L : {0, 1, 4, 9}) {
            const Eigen::MatrixXd k = realized_kernel(r, L);
            CHECK((k - kernel_oracle(r, L)).cwiseAbs().maxCoeff() < 1e-15);
            CHECK((k - k.transpose()).cwiseAbs().maxCoeff() < 1e-18);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
            CHECK(es.eigenvalues().minCoeff() > -1e-15);
        }
    }
}

TEST_CASE("realised kernel block with L = 0 is the outer-product sum") {
    SyncedReturns s;
    s.block_id = "b";
    s.assets = {"x", "y"};
    s.log_returns = random_returns(30, 2, 5);
    KernelConfig cfg;
    cfg.bandwidth = 0;
    const Eigen::MatrixXd k = realized_kernel_block(s, cfg);
    CHECK((k - s.log_returns.transpose() * s.log_returns).cwiseAbs().maxCoeff() < 1e-18);
}

TEST_CASE("realised kernel block needs at least L + 2 returns") {
    SyncedReturns s;
    s.block_id = "b";
    s.assets = {"x"};
    s.log_returns = random_returns(6, 1, 5);
    KernelConfig cfg;
    cfg.bandwidth = 5;
    CHECK_THROWS_AS(realized_kernel_block(s, cfg), InsufficientDataError);
    cfg.bandwidth = 4;
    CHECK_NOTHROW(realized_kernel_block(s, cfg));
}

TEST_CASE("automatic bandwidth grows with the noise level") {
    MarketConfig cfg;
    cfg.n_assets = 1;
    cfg.n_days = 2;
    cfg.tick_intensity = 0.2;
    int prev = -1;
    for (double noise : {1e-9, 1e-8, 1e-7}) {
        cfg.noise.variance = noise;
        const auto day = MarketSimulator(cfg).ticks(0);
        const auto sync = refresh_time_sample(day.assets);
        const int L = automatic_bandwidth(sync.log_returns.col(0)).bandwidth;
        CHECK(L > prev);
        prev = L;
    }
}

TEST_CASE("liquidity partition sizes and block count") {
    MarketConfig cfg;
    cfg.n_assets = 10;
    cfg.n_days = 2;
    cfg.tick_intensity = 0.01;
    const auto day = MarketSimulator(cfg).ticks(0);
    const auto p = BlockPartition::by_liquidity(day, 4);
    REQUIRE(p.groups.size() == 4);
    CHECK(p.blocks.size() == 10);
    std::size_t lo = 100, hi = 0, total = 0;
    for (const auto& g : p.groups) {
        lo = std::min(lo, g.size());
        hi = std::max(hi, g.size());
        total += g.size();
    }
    CHECK(hi - lo <= 1);
    CHECK(total == 10);
}

TEST_CASE("BRK estimate is PSD and uses the larger sample for overlapping entries") {
    MarketConfig cfg;
    cfg.n_assets = 3;
    cfg.n_days = 2;
    cfg.tick_intensity = 0.1;
    cfg.noise.variance = 1e-8;
    const auto day = MarketSimulator(cfg).ticks(0);
    const auto part = BlockPartition::from_groups({{0, 1}, {2}});
    KernelConfig kc;
    const auto est = brk_covariance(day, part, kc);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(est.matrix);
    CHECK(es.eigenvalues().minCoeff() > 0.0);

    const std::vector<TickSeries> pair{day.assets[0], day.assets[1]};
    const auto sync = refresh_time_sample(pair, "g0");
    const Eigen::MatrixXd k = realized_kernel_block(sync, kc);
    const double corr_within = k(0, 1) / std::sqrt(k(0, 0) * k(1, 1));
    const double corr_est = est.matrix(0, 1) / std::sqrt(est.matrix(0, 0) * est.matrix(1, 1));
    CHECK(corr_est == doctest::Approx(corr_within).epsilon(1e-6));
}

TEST_CASE("BRK rejects a constant-price asset") {
    MarketConfig cfg;
    cfg.n_assets = 2;
    cfg.n_days = 2;
    cfg.tick_intensity = 0.05;
    auto day = MarketSimulator(cfg).ticks(0);
    std::fill(day.assets[1].midquotes.begin(), day.assets[1].midquotes.end(), 50.0);
    CHECK_THROWS_AS(brk_covariance(day, BlockPartition::by_liquidity(day, 4), KernelConfig{}), DegenerateBlockError);
}

TEST_CASE("smoothing averages and clips the spectrum") {
    std::vector<CovarianceEstimate> v;
    Eigen::Matrix2d a, b;
    a << 2, 1, 1, 1;
    b << 4, 0, 0, 2;
    v.push_back(make_estimate(a, Estimator::Brk, "d1"));
    v.push_back(make_estimate(b, Estimator::Brk, "d2"));
    const auto out = smooth_and_repair(v);
    CHECK((out.matrix - 0.5 * (a + b)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(out.date == "d2");
    CHECK(out.estimator == Estimator::BrkSmoothed);

    v.push_back(make_estimate(Eigen::Matrix3d::Identity(), Estimator::Brk, "d3"));
    CHECK_THROWS_AS(smooth_and_repair(v), ShapeError);
}

TEST_CASE("eigenvalue clipping floors the spectrum and is the nearest such matrix") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Eigen::MatrixXd m = testing::random_spd(5, seed);
        const Eigen::VectorXd u = testing::random_normal(5, seed).normalized();
        m -= 3.0 * m.norm() * u * u.transpose();
        const Eigen::MatrixXd rep = psd_repair(m, 1e-8);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_in(m), es_out(rep);
        const double lmax = es_in.eigenvalues().maxCoeff();
        CHECK(es_out.eigenvalues().minCoeff() >= 1e-8 * lmax - 1e-14 * lmax);  // eigensolver round-off
        // Alternative repairs with the same floor: shifting the whole spectrum.
        const double shift = 1e-8 * lmax - es_in.eigenvalues().minCoeff();
        const Eigen::MatrixXd shifted = m + shift * Eigen::MatrixXd::Identity(5, 5);
        CHECK((rep - m).norm() <= (shifted - m).norm() + 1e-12);
    }
}

TEST_CASE("covariance CSV round trip keeps the header fields") {
    const auto e = make_estimate(testing::random_spd(3, 4), Estimator::LedoitWolf, "2001-02-03");
    std::stringstream buf;
    write_covariance(e, buf, "config_hash=abc");
    const std::string text = buf.str();
    CHECK(text.rfind("# estimator=LW,date=2001-02-03,N=3,config_hash=abc\n", 0) == 0);
    const auto back = read_covariance(buf);
    CHECK(back.estimator == Estimator::LedoitWolf);
    CHECK(back.date == "2001-02-03");
    CHECK(back.matrix == e.matrix);
}
