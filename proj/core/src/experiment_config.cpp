#include "costaware/experiment_config.hpp"

#include "costaware/errors.hpp"
#include "csv_util.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace costaware {

namespace {

const std::set<std::string> kUnhashed{"out", "workers"};

ConfigError bad_value(const std::string& key, const std::string& value, const std::string& expected) {
    return ConfigError("config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    for (auto part : detail::split(s, ','))
        if (!part.empty()) out.emplace_back(part);
    return out;
}

template <typename T, typename F>
void assign(const KeyValueConfig& kv, const std::string& key, T& field, F get) {
    if (auto v = (kv.*get)(key)) field = static_cast<T>(*v);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (detail::is_comment_or_blank(line)) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("config line without '=': " + line, no);
        const std::string key(detail::trim(std::string_view(line).substr(0, eq)));
        const std::string value(detail::trim(std::string_view(line).substr(eq + 1)));
        if (key.empty()) throw ParseError("config line with an empty key", no);
        if (cfg.has(key)) throw ParseError("duplicate config key '" + key + "'", no);
        cfg.values_[key] = value;
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::optional<std::string> KeyValueConfig::text(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::optional<double> KeyValueConfig::number(const std::string& key) const {
    const auto s = text(key);
    if (!s) return std::nullopt;
    const auto v = detail::parse_double(*s);
    if (!v) throw bad_value(key, *s, "a number");
    return v;
}

std::optional<long long> KeyValueConfig::integer(const std::string& key) const {
    const auto s = text(key);
    if (!s) return std::nullopt;
    const auto v = detail::parse_int<long long>(*s);
    if (!v) throw bad_value(key, *s, "an integer");
    return v;
}

std::optional<std::uint64_t> KeyValueConfig::unsigned_integer(const std::string& key) const {
    const auto s = text(key);
    if (!s) return std::nullopt;
    const auto v = detail::parse_int<std::uint64_t>(*s);
    if (!v) throw bad_value(key, *s, "a non-negative integer");
    return v;
}

std::optional<bool> KeyValueConfig::flag(const std::string& key) const {
    const auto s = text(key);
    if (!s) return std::nullopt;
    if (*s == "true" || *s == "1" || *s == "yes") return true;
    if (*s == "false" || *s == "0" || *s == "no") return false;
    throw bad_value(key, *s, "true or false");
}

std::optional<std::vector<double>> KeyValueConfig::number_list(const std::string& key) const {
    const auto s = text(key);
    if (!s) return std::nullopt;
    std::vector<double> out;
    for (const auto& part : split_list(*s)) {
        const auto v = detail::parse_double(part);
        if (!v) throw bad_value(key, *s, "a comma-separated list of numbers");
        out.push_back(*v);
    }
    if (out.empty()) throw bad_value(key, *s, "a non-empty list");
    return out;
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> keys{
        "returns", "ticks", "caps", "out", "workers", "seed", "strategies",
        "sim.n_assets", "sim.n_days", "sim.market_vol", "sim.loading_mean", "sim.loading_sd", "sim.idio_vol_low",
        "sim.idio_vol_high", "sim.drift", "sim.sv_persistence", "sim.sv_vol", "sim.noise_variance",
        "sim.tick_intensity", "sim.session_seconds", "sim.synchronous", "sim.emit_ticks", "sim.start_date",
        "gamma", "beta", "beta_ex_post", "cost", "estimation_window", "pooling_window", "warmup", "trade_threshold",
        "draws", "max_flagged_fraction", "eu.tol", "eu.max_iter",
        "mixture_models", "pool.models", "kappa.window", "kappa.refit_every", "kappa.burn_in", "kappa.draws",
        "kappa.prior_rate", "sv.factors", "sv.burn_in", "sv.draws", "sv.thin", "sv.min_window", "sv.refit_every",
        "sv.warm_burn_in", "sv.warm_draws",
        "kernel.bandwidth", "kernel.groups", "kernel.smoothing_window",
        "sweep.beta_bp", "sweep.beta_ex_post_bp", "sweep.estimators", "sweep.cost", "sweep.warmup",
        "bootstrap.subset_size", "bootstrap.n_subsets"};
    return keys;
}

namespace {

CostKind cost_from(const KeyValueConfig& kv, const std::string& key, CostKind fallback) {
    const auto s = kv.text(key);
    if (!s) return fallback;
    if (*s == "l1") return CostKind::L1;
    if (*s == "l2") return CostKind::L2;
    throw bad_value(key, *s, "l1 or l2");
}

std::vector<ModelTag> models_from(const KeyValueConfig& kv, const std::string& key, std::vector<ModelTag> fallback) {
    const auto s = kv.text(key);
    if (!s) return fallback;
    std::vector<ModelTag> out;
    for (const auto& part : split_list(*s)) {
        try {
            out.push_back(model_from_string(part));
        } catch (const Error&) {
            throw bad_value(key, *s, "model tags");
        }
    }
    return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::from(const KeyValueConfig& kv) {
    const auto& keys = known_config_keys();
    for (const auto& [k, v] : kv.values())
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) throw ConfigError("unknown config key '" + k + "'");

    ExperimentConfig c;
    c.returns_path = kv.text("returns");
    c.ticks_path = kv.text("ticks");
    c.caps_path = kv.text("caps");
    const std::uint64_t seed = kv.unsigned_integer("seed").value_or(1);

    if (kv.has("sim.n_assets")) {
        MarketConfig m;
        m.seed = seed;
        m.n_days = 1000;
        assign(kv, "sim.n_assets", m.n_assets, &KeyValueConfig::integer);
        assign(kv, "sim.n_days", m.n_days, &KeyValueConfig::integer);
        assign(kv, "sim.market_vol", m.factor.market_vol, &KeyValueConfig::number);
        assign(kv, "sim.loading_mean", m.factor.loading_mean, &KeyValueConfig::number);
        assign(kv, "sim.loading_sd", m.factor.loading_sd, &KeyValueConfig::number);
        assign(kv, "sim.idio_vol_low", m.factor.idio_vol_low, &KeyValueConfig::number);
        assign(kv, "sim.idio_vol_high", m.factor.idio_vol_high, &KeyValueConfig::number);
        assign(kv, "sim.drift", m.factor.drift, &KeyValueConfig::number);
        assign(kv, "sim.sv_persistence", m.factor.sv_persistence, &KeyValueConfig::number);
        assign(kv, "sim.sv_vol", m.factor.sv_vol, &KeyValueConfig::number);
        assign(kv, "sim.noise_variance", m.noise.variance, &KeyValueConfig::number);
        assign(kv, "sim.tick_intensity", m.tick_intensity, &KeyValueConfig::number);
        assign(kv, "sim.session_seconds", m.session_seconds, &KeyValueConfig::number);
        assign(kv, "sim.synchronous", m.synchronous, &KeyValueConfig::flag);
        m.emit_ticks = false;
        assign(kv, "sim.emit_ticks", m.emit_ticks, &KeyValueConfig::flag);
        if (auto s = kv.text("sim.start_date")) m.start_date = *s;
        if (kv.integer("sim.n_assets").value() < 1) throw ConfigError("config key 'sim.n_assets' must be positive");
        if (kv.integer("sim.n_days").value_or(1) < 1) throw ConfigError("config key 'sim.n_days' must be positive");
        c.simulator = m;
    } else {
        for (const auto& [k, v] : kv.values())
            if (k.rfind("sim.", 0) == 0) throw ConfigError("config key '" + k + "' needs 'sim.n_assets'");
    }

    c.strategies = parse_strategies(kv.text("strategies").value_or("model:GaussianLW,model:GaussianLW:nocost,naive,mvp"));

    auto& b = c.backtest;
    b.seed = seed;
    assign(kv, "gamma", b.gamma, &KeyValueConfig::number);
    assign(kv, "beta", b.beta, &KeyValueConfig::number);
    if (auto v = kv.number("beta_ex_post")) b.beta_ex_post = *v;
    b.cost_kind = cost_from(kv, "cost", b.cost_kind);
    assign(kv, "estimation_window", b.estimation_window, &KeyValueConfig::integer);
    assign(kv, "pooling_window", b.pooling_window, &KeyValueConfig::integer);
    if (auto v = kv.integer("warmup")) b.warmup = *v;
    assign(kv, "trade_threshold", b.trade_threshold, &KeyValueConfig::number);
    assign(kv, "draws", b.draws, &KeyValueConfig::integer);
    assign(kv, "max_flagged_fraction", b.max_flagged_fraction, &KeyValueConfig::number);
    assign(kv, "eu.tol", b.eu.tol, &KeyValueConfig::number);
    assign(kv, "eu.max_iter", b.eu.max_iter, &KeyValueConfig::integer);

    auto& f = b.forecast;
    f.mixture_models = models_from(kv, "mixture_models", f.mixture_models);
    assign(kv, "kappa.window", f.kappa_window, &KeyValueConfig::integer);
    assign(kv, "kappa.refit_every", f.kappa_refit_every, &KeyValueConfig::integer);
    assign(kv, "kappa.burn_in", f.kappa.burn_in, &KeyValueConfig::integer);
    assign(kv, "kappa.draws", f.kappa.draws, &KeyValueConfig::integer);
    assign(kv, "kappa.prior_rate", f.kappa.prior_rate, &KeyValueConfig::number);
    assign(kv, "sv.factors", f.sv_factors, &KeyValueConfig::integer);
    assign(kv, "sv.burn_in", f.sv.burn_in, &KeyValueConfig::integer);
    assign(kv, "sv.draws", f.sv.draws, &KeyValueConfig::integer);
    assign(kv, "sv.thin", f.sv.thin, &KeyValueConfig::integer);
    assign(kv, "sv.min_window", f.sv.min_window, &KeyValueConfig::integer);
    assign(kv, "sv.refit_every", f.sv_refit_every, &KeyValueConfig::integer);
    assign(kv, "sv.warm_burn_in", f.sv_warm_burn_in, &KeyValueConfig::integer);
    assign(kv, "sv.warm_draws", f.sv_warm_draws, &KeyValueConfig::integer);
    c.pool_models = models_from(kv, "pool.models", {});

    if (auto v = kv.integer("kernel.bandwidth")) c.kernel.bandwidth = static_cast<int>(*v);
    assign(kv, "kernel.groups", c.kernel.n_groups, &KeyValueConfig::integer);
    assign(kv, "kernel.smoothing_window", c.kernel.smoothing_window, &KeyValueConfig::integer);

    if (auto v = kv.number_list("sweep.beta_bp")) c.sweep.beta_bp = *v;
    c.sweep.beta_ex_post_bp = kv.number_list("sweep.beta_ex_post_bp");
    if (auto s = kv.text("sweep.estimators")) {
        c.sweep.estimators.clear();
        for (const auto& part : split_list(*s)) {
            if (part == "Sample") c.sweep.estimators.push_back(Estimator::Sample);
            else if (part == "LW") c.sweep.estimators.push_back(Estimator::LedoitWolf);
            else throw bad_value("sweep.estimators", *s, "Sample and/or LW");
        }
    }
    c.sweep.cost_kind = cost_from(kv, "sweep.cost", CostKind::L2);
    if (auto v = kv.integer("sweep.warmup")) c.sweep.warmup = *v;

    assign(kv, "bootstrap.subset_size", c.bootstrap.subset_size, &KeyValueConfig::integer);
    assign(kv, "bootstrap.n_subsets", c.bootstrap.n_subsets, &KeyValueConfig::integer);

    if (auto s = kv.text("out")) c.out_dir = *s;
    c.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    if (auto v = kv.integer("workers")) c.workers = static_cast<int>(*v);

    std::string canonical;
    for (const auto& [k, v] : kv.values())
        if (!kUnhashed.count(k)) canonical += k + '=' + v + '\n';
    canonical += "seed=" + std::to_string(seed) + '\n';
    c.hash = fnv1a(canonical);

    c.validate();
    return c;
}

void ExperimentConfig::validate() const {
    if (!returns_path && !simulator)
        throw ConfigError("config: neither 'returns' nor 'sim.n_assets' is set; one data source is required");
    if (returns_path && simulator) throw ConfigError("config: 'returns' and 'sim.n_assets' are mutually exclusive");
    for (const auto* p : {&returns_path, &ticks_path, &caps_path})
        if (*p && !std::filesystem::exists(**p)) throw ConfigError("config: file not found: " + **p);
    if ((ticks_path || caps_path) && !returns_path)
        throw ConfigError("config: 'ticks' and 'caps' are only read together with 'returns'");
    if (strategies.empty()) throw ConfigError("config key 'strategies' must list at least one strategy");
    for (const auto& s : strategies) s.validate();
    backtest.validate();
    if (kernel.n_groups < 1 || kernel.smoothing_window < 1) throw ConfigError("config: invalid kernel settings");
    for (double v : sweep.beta_bp)
        if (!(v >= 0.0)) throw ConfigError("config key 'sweep.beta_bp' must be non-negative");
    if (sweep.beta_ex_post_bp)
        for (double v : *sweep.beta_ex_post_bp)
            if (!(v >= 0.0)) throw ConfigError("config key 'sweep.beta_ex_post_bp' must be non-negative");
    if (sweep.estimators.empty()) throw ConfigError("config key 'sweep.estimators' is empty");
    if (sweep.warmup && *sweep.warmup < backtest.estimation_window)
        throw ConfigError("config key 'sweep.warmup' must be at least the estimation window");
    if (bootstrap.subset_size < 0 || bootstrap.n_subsets < 1) throw ConfigError("config: invalid bootstrap settings");
    if (workers < 1) throw ConfigError("config key 'workers' must be positive");
    for (auto m : pool_models)
        if (m == ModelTag::Mixture) throw ConfigError("config key 'pool.models' cannot contain Mixture");
}

std::string ExperimentConfig::hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

std::string ExperimentConfig::header_line() const { return "# config_hash=" + hash_hex(); }

}  // namespace costaware
