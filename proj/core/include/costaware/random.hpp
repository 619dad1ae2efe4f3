#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace costaware {

using Engine = std::mt19937_64;

// splitmix64 finaliser; used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Seed for stream `stream` of master seed `seed`. Distinct (seed, stream)
// pairs give unrelated engines, so work can be split across threads or
// chunks without changing results.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

Engine make_engine(std::uint64_t seed, std::uint64_t stream = 0);

Eigen::VectorXd standard_normal(Engine& eng, Eigen::Index n);

}  // namespace costaware
