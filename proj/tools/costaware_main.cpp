#include "costaware/errors.hpp"
#include "costaware/pipeline.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>
#include <string>

namespace {

using Command = std::function<std::vector<std::string>(const costaware::ExperimentConfig&)>;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cost-aware portfolio experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out_dir;
    bool quiet = false;

    const std::map<std::string, std::pair<std::string, Command>> commands{
        {"simulate", {"Simulate a market and write returns, caps, ticks and ground truth", costaware::cmd_simulate}},
        {"estimate", {"Write daily covariance estimates", costaware::cmd_estimate}},
        {"backtest", {"Run the configured strategies and write metrics, fees, weights and returns", costaware::cmd_backtest}},
        {"sweep-beta", {"Sweep the cost level of the zero-mean plug-in allocations", costaware::cmd_sweep_beta}},
        {"pool", {"Write component log scores and optimal pooling weights", costaware::cmd_pool}},
        {"report", {"Bootstrap the strategies over asset subsets", costaware::cmd_report}},
        {"run", {"Run every stage on one data load", costaware::cmd_run}},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, entry] : commands) {
        auto* sub = app.add_subcommand(name, entry.first);
        sub->add_option("--config", config_path, "Flat key = value configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Master seed; overrides the config");
        sub->add_option("--workers", workers, "Worker threads; defaults to the available cores")
            ->check(CLI::PositiveNumber);
        sub->add_option("--out", out_dir, "Output directory; overrides the config");
        sub->add_flag("--quiet", quiet, "Do not list the files written");
        subs[name] = sub;
    }
    CLI11_PARSE(app, argc, argv);

    try {
        auto kv = costaware::KeyValueConfig::load(config_path);
        if (seed) kv.set("seed", std::to_string(*seed));
        if (workers) kv.set("workers", std::to_string(*workers));
        if (out_dir) kv.set("out", *out_dir);
        const auto config = costaware::ExperimentConfig::from(kv);
        for (const auto& [name, sub] : subs) {
            if (!sub->parsed()) continue;
            const auto written = commands.at(name).second(config);
            if (!quiet)
                for (const auto& path : written) std::cout << path << '\n';
        }
    } catch (const costaware::ConfigError& e) {
        std::cerr << "costaware: configuration error: " << e.what() << '\n';
        return 2;
    } catch (const costaware::Error& e) {
        std::cerr << "costaware: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "costaware: unexpected failure: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
