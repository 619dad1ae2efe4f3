#pragma once

#include "costaware/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace testing {

// Random symmetric positive definite matrix with entries of order scale^2.
inline Eigen::MatrixXd random_spd(Eigen::Index n, std::uint64_t seed, double scale = 1.0) {
    auto eng = costaware::make_engine(seed, 777);
    std::normal_distribution<double> nd(0.0, scale);
    Eigen::MatrixXd a(n, n + 3);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = nd(eng);
    Eigen::MatrixXd s = a * a.transpose() / static_cast<double>(n + 3);
    s.diagonal().array() += 0.1 * scale * scale;
    return 0.5 * (s + s.transpose());
}

inline Eigen::VectorXd random_normal(Eigen::Index n, std::uint64_t seed, double scale = 1.0) {
    auto eng = costaware::make_engine(seed, 778);
    return scale * costaware::standard_normal(eng, n);
}

// Positive weights summing to one.
inline Eigen::VectorXd random_simplex(Eigen::Index n, std::uint64_t seed) {
    auto eng = costaware::make_engine(seed, 779);
    std::exponential_distribution<double> ex(1.0);
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = ex(eng);
    return w / w.sum();
}

inline std::filesystem::path temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "costaware_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing
