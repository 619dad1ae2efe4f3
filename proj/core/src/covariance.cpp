#include "costaware/covariance.hpp"

#include "costaware/errors.hpp"
#include "costaware/linalg.hpp"
#include "csv_util.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

namespace costaware {

std::string to_string(Estimator e) {
    switch (e) {
        case Estimator::Sample: return "Sample";
        case Estimator::LedoitWolf: return "LW";
        case Estimator::Brk: return "BRK";
        case Estimator::BrkSmoothed: return "BRK-smoothed";
    }
    return "unknown";
}

Estimator estimator_from_string(const std::string& s) {
    if (s == "Sample") return Estimator::Sample;
    if (s == "LW") return Estimator::LedoitWolf;
    if (s == "BRK") return Estimator::Brk;
    if (s == "BRK-smoothed") return Estimator::BrkSmoothed;
    throw ParseError("unknown estimator tag '" + s + "'", 0);
}

CovarianceEstimate make_estimate(Eigen::MatrixXd matrix, Estimator estimator, std::string date) {
    CovarianceEstimate e;
    e.condition_number = condition_number(matrix);
    e.matrix = std::move(matrix);
    e.estimator = estimator;
    e.date = std::move(date);
    return e;
}

Eigen::MatrixXd sample_cov_window(const Eigen::MatrixXd& window) {
    const Eigen::Index h = window.rows();
    if (h < 2) throw RangeError("sample covariance needs at least 2 observations");
    const Eigen::RowVectorXd mean = window.colwise().mean();
    const Eigen::MatrixXd x = window.rowwise() - mean;
    return symmetrize(x.transpose() * x / static_cast<double>(h - 1));
}

namespace {

Eigen::MatrixXd window_of(const ReturnPanel& panel, Eigen::Index t, Eigen::Index h) {
    if (h < 2) throw RangeError("window length h must be at least 2, got " + std::to_string(h));
    if (t < h || t > panel.n_days())
        throw RangeError("window [" + std::to_string(t - h) + ", " + std::to_string(t) +
                         ") exceeds the available history of " + std::to_string(panel.n_days()) + " days");
    return panel.returns.middleRows(t - h, h);
}

std::string date_before(const ReturnPanel& panel, Eigen::Index t) {
    return t > 0 ? panel.dates[static_cast<std::size_t>(t - 1)] : std::string();
}

}  // namespace

CovarianceEstimate sample_cov(const ReturnPanel& panel, Eigen::Index t, Eigen::Index h) {
    return make_estimate(sample_cov_window(window_of(panel, t, h)), Estimator::Sample, date_before(panel, t));
}

Eigen::MatrixXd constant_correlation_target(const Eigen::MatrixXd& s) {
    const Eigen::Index n = s.rows();
    const Eigen::VectorXd sd = s.diagonal().cwiseSqrt();
    double rsum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j) rsum += s(i, j) / (sd(i) * sd(j));
    const double rbar = n > 1 ? rsum / static_cast<double>(n * (n - 1)) : 0.0;
    Eigen::MatrixXd f = rbar * sd * sd.transpose();
    f.diagonal() = s.diagonal();
    return f;
}

ShrinkageIntensity lw_intensity(const Eigen::MatrixXd& window) {
    const Eigen::Index t = window.rows();
    const Eigen::Index n = window.cols();
    if (n < 2) throw ValidationError("Ledoit-Wolf shrinkage needs at least 2 assets");
    if (t < 2) throw RangeError("Ledoit-Wolf shrinkage needs at least 2 observations");
    const double td = static_cast<double>(t);

    const Eigen::MatrixXd x = window.rowwise() - window.colwise().mean();
    const Eigen::MatrixXd sample = x.transpose() * x / td;
    const Eigen::VectorXd var = sample.diagonal();
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(var(i) > 0.0))
            throw DegenerateInputError("Ledoit-Wolf shrinkage: asset column " + std::to_string(i) + " has zero variance");
    const Eigen::VectorXd sqrtvar = var.cwiseSqrt();
    const Eigen::MatrixXd prior = constant_correlation_target(sample);
    const double rbar = n > 1 ? prior(0, 1) / (sqrtvar(0) * sqrtvar(1)) : 0.0;

    const Eigen::MatrixXd y = x.cwiseAbs2();
    const Eigen::MatrixXd phi_mat =
        y.transpose() * y / td - 2.0 * (x.transpose() * x).cwiseProduct(sample) / td + sample.cwiseAbs2();
    const double phi = phi_mat.sum();

    const Eigen::MatrixXd term1 = x.cwiseProduct(y).transpose() * x / td;
    Eigen::MatrixXd theta = term1 - var.asDiagonal() * sample;
    theta.diagonal().setZero();
    const Eigen::MatrixXd ratio = sqrtvar.cwiseInverse() * sqrtvar.transpose();
    const double rho = phi_mat.diagonal().sum() + rbar * ratio.cwiseProduct(theta).sum();

    const double gamma = (sample - prior).squaredNorm();
    if (!(gamma > 0.0)) return {0.0, 0.0};
    const double kappa = (phi - rho) / gamma;
    const double raw = kappa / td;
    return {raw, std::clamp(raw, 0.0, 1.0)};
}

Eigen::MatrixXd lw_shrink_window(const Eigen::MatrixXd& window, double* intensity) {
    const auto delta = lw_intensity(window).clamped;
    const Eigen::MatrixXd s = sample_cov_window(window);
    if (intensity) *intensity = delta;
    return symmetrize(delta * constant_correlation_target(s) + (1.0 - delta) * s);
}

CovarianceEstimate lw_shrinkage(const ReturnPanel& panel, Eigen::Index t, Eigen::Index h) {
    double delta = 0.0;
    auto m = lw_shrink_window(window_of(panel, t, h), &delta);
    auto est = make_estimate(std::move(m), Estimator::LedoitWolf, date_before(panel, t));
    est.shrinkage = delta;
    return est;
}

double parzen(double x) {
    x = std::abs(x);
    if (x <= 0.5) return 1.0 - 6.0 * x * x + 6.0 * x * x * x;
    if (x <= 1.0) return 2.0 * std::pow(1.0 - x, 3);
    return 0.0;
}

BandwidthDiagnostics automatic_bandwidth(const Eigen::VectorXd& r) {
    const Eigen::Index n = r.size();
    if (n < 2) throw InsufficientDataError("bandwidth selection needs at least 2 returns");
    const double noise = r.squaredNorm() / (2.0 * static_cast<double>(n));

    // Sparse realised variance: sums of `stride` consecutive returns, averaged
    // over all starting offsets.
    const Eigen::Index stride = std::max<Eigen::Index>(1, n / 78);
    double iv = 0.0;
    for (Eigen::Index o = 0; o < stride; ++o) {
        double rv = 0.0;
        for (Eigen::Index k = o; k + stride <= n; k += stride) {
            const double agg = r.segment(k, stride).sum();
            rv += agg * agg;
        }
        iv += rv;
    }
    iv /= static_cast<double>(stride);
    if (!(iv > 0.0) || !(noise > 0.0))
        throw DegenerateBlockError("bandwidth selection: return series has no variation");

    const double xi = std::sqrt(noise / iv);
    const double c = 3.5134 * std::pow(xi, 0.8);
    const double h = c * std::pow(static_cast<double>(n), 0.6);
    return {static_cast<int>(std::ceil(h)), noise, iv};
}

Eigen::MatrixXd realized_kernel(const Eigen::MatrixXd& returns, int bandwidth) {
    if (bandwidth < 0) throw ConfigError("kernel bandwidth must be non-negative");
    const Eigen::Index n = returns.rows();
    if (n < bandwidth + 1) throw InsufficientDataError("realised kernel: fewer returns than bandwidth + 1");
    Eigen::MatrixXd k = returns.transpose() * returns;
    for (int h = 1; h <= bandwidth; ++h) {
        const double w = parzen(static_cast<double>(h) / static_cast<double>(bandwidth + 1));
        if (w == 0.0) continue;
        const Eigen::MatrixXd gamma = returns.bottomRows(n - h).transpose() * returns.topRows(n - h);
        k += w * (gamma + gamma.transpose());
    }
    return k;
}

Eigen::MatrixXd realized_kernel_block(const SyncedReturns& sync, const KernelConfig& config) {
    const Eigen::MatrixXd& r = sync.log_returns;
    int bandwidth = 0;
    if (config.bandwidth) {
        bandwidth = *config.bandwidth;
    } else {
        if (r.rows() < 2) throw InsufficientDataError("block " + sync.block_id + ": fewer than 2 synchronised returns");
        double mean_h = 0.0;
        for (Eigen::Index i = 0; i < r.cols(); ++i) {
            try {
                mean_h += automatic_bandwidth(r.col(i)).bandwidth;
            } catch (const DegenerateBlockError&) {
                throw DegenerateBlockError("block " + sync.block_id + ": asset " + sync.assets[i] +
                                           " has constant prices");
            }
        }
        bandwidth = static_cast<int>(std::ceil(mean_h / static_cast<double>(r.cols())));
    }
    if (r.rows() < bandwidth + config.min_obs_margin)
        throw InsufficientDataError("block " + sync.block_id + ": " + std::to_string(r.rows()) +
                                    " synchronised returns, need at least " +
                                    std::to_string(bandwidth + config.min_obs_margin));
    return realized_kernel(r, bandwidth);
}

BlockPartition BlockPartition::from_groups(std::vector<std::vector<Eigen::Index>> groups) {
    BlockPartition p;
    p.groups = std::move(groups);
    const std::size_t g = p.groups.size();
    for (std::size_t a = 0; a < g; ++a) p.blocks.push_back({"g" + std::to_string(a), p.groups[a]});
    for (std::size_t a = 0; a < g; ++a)
        for (std::size_t b = a + 1; b < g; ++b) {
            Block blk{"g" + std::to_string(a) + "xg" + std::to_string(b), p.groups[a]};
            blk.assets.insert(blk.assets.end(), p.groups[b].begin(), p.groups[b].end());
            p.blocks.push_back(std::move(blk));
        }
    return p;
}

BlockPartition BlockPartition::by_liquidity(const DayTicks& day, std::size_t n_groups) {
    const std::size_t n = day.assets.size();
    if (n == 0) throw InsufficientDataError("partition: no assets");
    if (n_groups == 0) throw ConfigError("partition: n_groups must be positive");
    n_groups = std::min(n_groups, n);
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return day.assets[a].size() > day.assets[b].size();
    });
    std::vector<std::vector<Eigen::Index>> groups(n_groups);
    const std::size_t base = n / n_groups, extra = n % n_groups;
    std::size_t k = 0;
    for (std::size_t g = 0; g < n_groups; ++g) {
        const std::size_t size = base + (g < extra ? 1 : 0);
        for (std::size_t j = 0; j < size; ++j) groups[g].push_back(order[k++]);
        std::sort(groups[g].begin(), groups[g].end());
    }
    return from_groups(std::move(groups));
}

namespace {

double univariate_kernel_variance(const TickSeries& s, const KernelConfig& config) {
    const TickSeries one[] = {s};
    SyncedReturns sync = refresh_time_sample(one, s.asset);
    sync.block_id = s.asset;
    const Eigen::MatrixXd k = realized_kernel_block(sync, config);
    return k(0, 0);
}

}  // namespace

CovarianceEstimate brk_covariance(const DayTicks& day, const BlockPartition& partition, const KernelConfig& config) {
    const auto n = static_cast<Eigen::Index>(day.assets.size());
    Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXi source_obs = Eigen::MatrixXi::Constant(n, n, -1);

    for (const auto& block : partition.blocks) {
        if (block.assets.size() < 2) continue;
        std::vector<TickSeries> sub;
        for (Eigen::Index a : block.assets) {
            if (a < 0 || a >= n) throw RangeError("partition refers to asset index " + std::to_string(a));
            sub.push_back(day.assets[static_cast<std::size_t>(a)]);
        }
        const SyncedReturns sync = refresh_time_sample(sub, block.id);
        const Eigen::MatrixXd k = realized_kernel_block(sync, config);
        const Eigen::VectorXd d = k.diagonal();
        for (Eigen::Index i = 0; i < d.size(); ++i)
            if (!(d(i) > 0.0))
                throw DegenerateBlockError("block " + block.id + ": kernel variance of " + sync.assets[i] +
                                           " is not positive");
        const Eigen::VectorXd vinv = d.cwiseSqrt().cwiseInverse();
        const Eigen::MatrixXd h = vinv.asDiagonal() * k * vinv.asDiagonal();
        const int obs = static_cast<int>(sync.log_returns.rows());
        for (std::size_t a = 0; a < block.assets.size(); ++a)
            for (std::size_t b = 0; b < block.assets.size(); ++b) {
                const Eigen::Index i = block.assets[a], j = block.assets[b];
                if (i == j) continue;
                if (obs > source_obs(i, j)) {
                    source_obs(i, j) = obs;
                    corr(i, j) = h(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
                }
            }
    }
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (i != j && source_obs(i, j) < 0)
                throw ValidationError("partition leaves the pair (" + day.assets[i].asset + ", " + day.assets[j].asset +
                                      ") uncovered");

    Eigen::VectorXd sd(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double v = univariate_kernel_variance(day.assets[static_cast<std::size_t>(i)], config);
        if (!(v > 0.0)) throw DegenerateBlockError("asset " + day.assets[i].asset + ": kernel variance is not positive");
        sd(i) = std::sqrt(v);
    }
    Eigen::MatrixXd sigma = sd.asDiagonal() * symmetrize(corr) * sd.asDiagonal();
    return make_estimate(psd_repair(sigma), Estimator::Brk, day.date);
}

Eigen::MatrixXd naive_realized_covariance(const DayTicks& day) {
    const SyncedReturns sync = refresh_time_sample(day.assets, "all");
    return sync.log_returns.transpose() * sync.log_returns;
}

CovarianceEstimate smooth_and_repair(std::span<const CovarianceEstimate> estimates, double rel_eps) {
    if (estimates.empty()) throw ShapeError("smooth_and_repair: no estimates");
    const Eigen::Index n = estimates.front().matrix.rows();
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
    for (const auto& e : estimates) {
        if (e.matrix.rows() != n || e.matrix.cols() != n)
            throw ShapeError("smooth_and_repair: estimate for " + e.date + " is " + std::to_string(e.matrix.rows()) +
                             "x" + std::to_string(e.matrix.cols()) + ", expected " + std::to_string(n) + "x" +
                             std::to_string(n));
        sum += e.matrix;
    }
    sum /= static_cast<double>(estimates.size());
    return make_estimate(psd_repair(sum, rel_eps), Estimator::BrkSmoothed, estimates.back().date);
}

std::vector<CovarianceEstimate> brk_series(std::span<const DayTicks> days, const KernelConfig& config) {
    if (config.smoothing_window < 1) throw ValidationError("smoothing window must be positive");
    std::vector<CovarianceEstimate> raw, out;
    raw.reserve(days.size());
    out.reserve(days.size());
    for (const auto& day : days) {
        raw.push_back(brk_covariance(day, BlockPartition::by_liquidity(day, config.n_groups), config));
        const std::size_t w = std::min(raw.size(), static_cast<std::size_t>(config.smoothing_window));
        out.push_back(smooth_and_repair(std::span<const CovarianceEstimate>(raw).last(w)));
    }
    return out;
}

void write_covariance(const CovarianceEstimate& est, std::ostream& out, const std::string& extra_meta) {
    out << "# estimator=" << to_string(est.estimator) << ",date=" << est.date << ",N=" << est.matrix.rows();
    if (!extra_meta.empty()) out << ',' << extra_meta;
    out << '\n';
    for (Eigen::Index i = 0; i < est.matrix.rows(); ++i) {
        for (Eigen::Index j = 0; j < est.matrix.cols(); ++j)
            out << (j ? "," : "") << detail::format_double(est.matrix(i, j));
        out << '\n';
    }
}

CovarianceEstimate read_covariance(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0) throw ParseError("missing covariance header line", 1);
    std::string date, tag;
    long n = -1;
    for (auto field : detail::split(std::string_view(line).substr(2))) {
        const auto eq = field.find('=');
        if (eq == std::string_view::npos) continue;
        const auto key = field.substr(0, eq);
        const auto val = field.substr(eq + 1);
        if (key == "estimator") tag = std::string(val);
        else if (key == "date") date = std::string(val);
        else if (key == "N") {
            auto v = detail::parse_int<long>(val);
            if (!v || *v < 1) throw ParseError("invalid N in covariance header", 1);
            n = *v;
        }
    }
    if (n < 0 || tag.empty()) throw ParseError("covariance header lacks estimator or N", 1);
    Eigen::MatrixXd m(n, n);
    for (long i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw ParseError("covariance file truncated", static_cast<std::size_t>(i + 2));
        auto f = detail::split(line);
        if (static_cast<long>(f.size()) != n)
            throw ParseError("expected " + std::to_string(n) + " values", static_cast<std::size_t>(i + 2));
        for (long j = 0; j < n; ++j) {
            auto v = detail::parse_double(f[static_cast<std::size_t>(j)]);
            if (!v) throw ParseError("malformed value", static_cast<std::size_t>(i + 2));
            m(i, j) = *v;
        }
    }
    return make_estimate(std::move(m), estimator_from_string(tag), date);
}

}  // namespace costaware
