#include "costaware/errors.hpp"
#include "costaware/predictive.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <doctest.h>

#include <numbers>
#include <sstream>

using namespace costaware;
using namespace oracles;

namespace {

Eigen::MatrixXd sample_cov_of(const Eigen::MatrixXd& d) {
    const Eigen::MatrixXd c = d.rowwise() - d.colwise().mean();
    return c.transpose() * c / static_cast<double>(d.rows() - 1);
}

double excess_kurtosis(const Eigen::VectorXd& x) {
    const double m = x.mean();
    const Eigen::ArrayXd c = x.array() - m;
    const double v = c.square().mean();
    return c.pow(4).mean() / (v * v) - 3.0;
}

CovarianceEstimate estimate(const Eigen::MatrixXd& m) { return make_estimate(m, Estimator::BrkSmoothed, "2001-01-02"); }

// Simulates returns whose law given sigma_hat_t is the inverse-Wishart normal mixture.
}  // namespace

TEST_CASE("Gaussian predictive draws") {
    const Eigen::Index j = 100000;
    const Eigen::MatrixXd id = 1e-4 * Eigen::MatrixXd::Identity(2, 2);
    const auto d = gaussian_predict(estimate(id), j, 7);
    CHECK((sample_cov_of(d.draws) - id).cwiseAbs().maxCoeff() < 0.05e-4);
    CHECK(d.draws.colwise().mean().cwiseAbs().maxCoeff() < 5.0 * 1e-2 / std::sqrt(static_cast<double>(j)));
    CHECK_FALSE(d.truncated);
    CHECK(d.model == ModelTag::GaussianSample);

    Eigen::Matrix3d diag = Eigen::Vector3d(1e-4, 4e-4, 9e-4).asDiagonal();
    const auto e = gaussian_predict(estimate(diag), j, 8);
    const Eigen::MatrixXd c = sample_cov_of(e.draws);
    for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b) CHECK(std::abs(c(a, b) / std::sqrt(c(a, a) * c(b, b))) < 4.0 / std::sqrt(1e5));

    const auto again = gaussian_predict(estimate(diag), j, 8);
    CHECK(again.draws == e.draws);
    CHECK(gaussian_predict(estimate(diag), j, 9).draws != e.draws);

    Eigen::Matrix2d bad;
    bad << 1, 2, 2, 1;
    CHECK_THROWS_AS(gaussian_predict(estimate(bad), 10, 1), PsdError);
}

TEST_CASE("Gaussian log score") {
    CHECK(gaussian_log_score(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d::Zero()) ==
          doctest::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
    CHECK(gaussian_log_score(4.0 * Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1)) ==
          doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi * 4.0)).epsilon(1e-14));
    CHECK_THROWS_AS(gaussian_log_score(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(3)), ShapeError);
}

TEST_CASE("multivariate t density agrees with the univariate library density") {
    for (double dof : {3.0, 7.5, 40.0})
        for (double x : {-0.05, 0.0, 0.013, 0.2}) {
            const double scale = 0.02;
            const boost::math::students_t_distribution<double> t(dof);
            const double want = std::log(boost::math::pdf(t, x / scale) / scale);
            CHECK(multivariate_t_log_density(Eigen::VectorXd::Constant(1, x), dof,
                                             Eigen::MatrixXd::Constant(1, 1, scale * scale)) ==
                  doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("univariate predictive densities integrate to one") {
    const double s2 = 4e-4;
    auto integrate = [](auto f) {
        const int n = 200000;
        const double h = 1.0 / n;
        double acc = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double w = (i == 0 || i == n) ? 0.5 : 1.0;
            acc += w * std::exp(f(-0.5 + i * h));
        }
        return acc * h;
    };
    const Eigen::MatrixXd s = Eigen::MatrixXd::Constant(1, 1, s2);
    const double g = integrate([&](double x) { return gaussian_log_score(s, Eigen::VectorXd::Constant(1, x)); });
    const std::vector<double> kappas{3.0, 5.0, 50.0};
    const double w = integrate([&](double x) { return wishart_log_score(s, kappas, Eigen::VectorXd::Constant(1, x)); });
    CHECK(g >= 0.999);
    CHECK(g <= 1.0 + 1e-9);
    CHECK(w >= 0.999);
    CHECK(w <= 1.0 + 1e-9);
}

TEST_CASE("inverse Wishart draws in one dimension match inverse-gamma moments") {
    auto eng = make_engine(3, 0);
    const double dof = 20.0, psi = 0.5;
    const int n = 200000;
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = sample_inverse_wishart(eng, dof, Eigen::MatrixXd::Constant(1, 1, psi))(0, 0);
    const double mean = psi / (dof - 2.0);
    const double var = 2.0 * psi * psi / ((dof - 2.0) * (dof - 2.0) * (dof - 4.0));
    CHECK(std::abs(v.mean() - mean) < 4.0 * std::sqrt(var / n));
    const double sv = (v.array() - v.mean()).square().sum() / (n - 1);
    CHECK(std::abs(sv / var - 1.0) < 0.05);
}

TEST_CASE("inverse Wishart draws have the prescribed mean") {
    auto eng = make_engine(4, 0);
    const Eigen::MatrixXd psi = testing::random_spd(3, 4);
    const double dof = 12.0;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(3, 3);
    const int n = 100000;
    for (int i = 0; i < n; ++i) acc += sample_inverse_wishart(eng, dof, psi);
    acc /= n;
    const Eigen::MatrixXd want = psi / (dof - 3.0 - 1.0);
    CHECK((acc - want).cwiseAbs().maxCoeff() < 0.02 * want.cwiseAbs().maxCoeff());
}

TEST_CASE("Wishart predictive: Gaussian limit and fat tails") {
    const Eigen::Index j = 100000;
    const std::vector<double> big{1e6};
    const Eigen::MatrixXd id = 1e-4 * Eigen::MatrixXd::Identity(2, 2);
    const auto d = wishart_brk_predict(estimate(id), big, j, 11);
    CHECK((sample_cov_of(d.draws) - id).cwiseAbs().maxCoeff() < 0.05e-4);
    CHECK(d.model == ModelTag::WishartBrk);

    const Eigen::Matrix2d sh = 1e-4 * testing::random_spd(2, 5);
    const Eigen::Vector2d r(0.01, -0.004);
    CHECK(std::abs(wishart_log_score(sh, big, r) - gaussian_log_score(sh, r)) < 1e-3);

    double prev = std::numeric_limits<double>::infinity();
    for (double k : {2.0 + 4.0, 2.0 + 20.0, 2.0 + 200.0}) {
        const std::vector<double> ks{k};
        const auto w = wishart_brk_predict(estimate(sh), ks, 200000, 12);
        const double kurt = excess_kurtosis(w.draws.col(0));
        if (k == 6.0) CHECK(kurt > 0.0);
        CHECK(kurt < prev);
        prev = kurt;
        CHECK(w.draws.colwise().mean().cwiseAbs().maxCoeff() <
              5.0 * std::sqrt(sample_cov_of(w.draws).diagonal().maxCoeff() / 2e5));
    }
}

TEST_CASE("kappa sampler: degenerate step, prior-only run and data checks") {
    KappaConfig cfg;
    cfg.burn_in = 0;
    cfg.draws = 300;
    cfg.step = 0.0;
    cfg.initial = 12.0;
    const auto flat = estimate_kappa({}, Eigen::MatrixXd(0, 2), cfg, 1);
    for (double k : flat.draws) CHECK(k == doctest::Approx(12.0).epsilon(1e-14));

    cfg.step = 1.0;
    cfg.burn_in = 2000;
    cfg.draws = 200000;
    cfg.prior_rate = 0.05;
    const auto prior = estimate_kappa({}, Eigen::MatrixXd(0, 3), cfg, 2);
    double below = 0.0, mean_excess = 0.0;
    for (double k : prior.draws) {
        CHECK(k > 2.0);
        mean_excess += (k - 2.0) / prior.draws.size();
        below += (k - 2.0 < std::log(2.0) / 0.05) ? 1.0 : 0.0;
    }
    CHECK(mean_excess == doctest::Approx(20.0).epsilon(0.1));
    CHECK(below / prior.draws.size() == doctest::Approx(0.5).epsilon(0.1));

    std::vector<Eigen::MatrixXd> hats;
    Eigen::MatrixXd r;
    simulate_kappa_data(1, 6.0, 10, hats, r);
    CHECK_THROWS_AS(estimate_kappa(hats, r, KappaConfig{}, 1), InsufficientDataError);
    simulate_kappa_data(1, 6.0, 40, hats, r);
    hats[17](0, 0) = -1.0;
    const std::vector<std::string> dates(40, "2003-04-05");
    CHECK_THROWS_WITH_AS(estimate_kappa(hats, r, KappaConfig{}, 1, dates), doctest::Contains("2003-04-05"), DataError);
}

TEST_CASE("kappa sampler recovers the tail parameter") {
    double mean_of_means = 0.0;
    const int seeds = 5;
    for (int s = 1; s <= seeds; ++s) {
        std::vector<Eigen::MatrixXd> hats;
        Eigen::MatrixXd r;
        simulate_kappa_data(static_cast<std::uint64_t>(s), 6.0, 2000, hats, r);
        KappaConfig cfg;
        const auto post = estimate_kappa(hats, r, cfg, static_cast<std::uint64_t>(s));
        CHECK(post.acceptance_rate > 0.1);
        CHECK(post.draws.size() == 1000);
        mean_of_means += post.mean() / seeds;
    }
    CHECK(std::abs(mean_of_means / 6.0 - 1.0) < 0.2);
}

TEST_CASE("draws CSV round trip") {
    const auto d = gaussian_predict(estimate(1e-4 * testing::random_spd(2, 3)), 5, 3);
    const std::vector<std::string> assets{"AAA", "BBB"};
    std::stringstream buf;
    write_draws(d, assets, buf, "config_hash=00ff");
    CHECK(buf.str().find("draw_id,asset,value\n") != std::string::npos);
    std::vector<std::string> names;
    const auto back = read_draws(buf, &names);
    CHECK(names == assets);
    CHECK(back.draws == d.draws);
    CHECK(back.model == d.model);
    CHECK(back.date == d.date);
}
