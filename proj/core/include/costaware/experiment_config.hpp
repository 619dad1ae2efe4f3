#pragma once

#include "costaware/backtest.hpp"
#include "costaware/covariance.hpp"
#include "costaware/simulator.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace costaware {

/// Flat `key = value` configuration. Lines starting with `#` and blank lines are ignored.
class KeyValueConfig {
public:
    static KeyValueConfig parse(const std::string& text);
    static KeyValueConfig load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    std::optional<std::string> text(const std::string& key) const;
    std::optional<double> number(const std::string& key) const;
    std::optional<long long> integer(const std::string& key) const;
    std::optional<std::uint64_t> unsigned_integer(const std::string& key) const;
    std::optional<bool> flag(const std::string& key) const;
    std::optional<std::vector<double>> number_list(const std::string& key) const;

private:
    std::map<std::string, std::string> values_;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);

struct SweepConfig {
    std::vector<double> beta_bp{0.0, 1.0, 10.0, 50.0, 100.0, 1000.0};
    std::optional<std::vector<double>> beta_ex_post_bp;  // the ex-ante value is charged when empty
    std::vector<Estimator> estimators{Estimator::Sample, Estimator::LedoitWolf};
    CostKind cost_kind = CostKind::L1;
    std::optional<Eigen::Index> warmup;  // estimation window when empty
};

struct BootstrapConfig {
    Eigen::Index subset_size = 0;  // all assets when 0
    int n_subsets = 20;
};

struct ExperimentConfig {
    // Data: either files or the simulator.
    std::optional<std::string> returns_path;
    std::optional<std::string> ticks_path;
    std::optional<std::string> caps_path;
    std::optional<MarketConfig> simulator;

    std::vector<Strategy> strategies;
    BacktestConfig backtest;
    KernelConfig kernel;
    SweepConfig sweep;
    BootstrapConfig bootstrap;
    std::vector<ModelTag> pool_models;  // mixture components when empty
    std::string out_dir = "out";
    int workers = 1;

    /// Hash of every setting that can change an output byte.
    std::uint64_t hash = 0;

    static ExperimentConfig from(const KeyValueConfig& kv);
    void validate() const;
    std::string hash_hex() const;
    /// `# config_hash=<hex>`
    std::string header_line() const;
};

/// Keys accepted by `ExperimentConfig::from`.
const std::vector<std::string>& known_config_keys();

}  // namespace costaware
