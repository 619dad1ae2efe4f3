#include "costaware/linalg.hpp"

#include "costaware/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace costaware {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) {
    return 0.5 * (m + m.transpose());
}

double condition_number(const Eigen::MatrixXd& sym) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (lo <= 0.0) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

Eigen::MatrixXd psd_repair(const Eigen::MatrixXd& sym, double rel_eps) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(sym));
    if (es.info() != Eigen::Success) throw LinAlgError("psd_repair: eigendecomposition failed");
    const double lmax = es.eigenvalues().maxCoeff();
    if (!(lmax > 0.0)) throw PsdError("psd_repair: matrix has no positive eigenvalue");
    const double floor = rel_eps * lmax;
    Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(floor);
    Eigen::MatrixXd out = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
    return symmetrize(out);
}

Eigen::MatrixXd solve_checked(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
    if (a.rows() != a.cols() || a.rows() != b.rows())
        throw ShapeError(std::string(what) + ": dimension mismatch");
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    const double rc = lu.rcond();
    if (!(rc > kSingularRcond))
        throw LinAlgError(std::string(what) + " is singular (rcond=" + std::to_string(rc) + ")");
    return lu.solve(b);
}

double largest_eigenvalue(const Eigen::MatrixXd& sym) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

double pairwise_sum(std::span<const double> x) {
    constexpr std::size_t kBlock = 16;
    if (x.size() <= kBlock) {
        double s = 0.0;
        for (double v : x) s += v;
        return s;
    }
    const std::size_t half = x.size() / 2;
    return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

double log_sum_exp(std::span<const double> x) {
    if (x.empty()) return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(x.begin(), x.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double v : x) s += std::exp(v - m);
    return m + std::log(s);
}

double mvn_log_density(const Eigen::VectorXd& x, const Eigen::MatrixXd& sigma) {
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) throw PsdError("mvn_log_density: covariance is not positive definite");
    const Eigen::VectorXd z = llt.matrixL().solve(x);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double n = static_cast<double>(x.size());
    return -0.5 * (n * std::log(2.0 * std::numbers::pi) + logdet + z.squaredNorm());
}

}  // namespace costaware
