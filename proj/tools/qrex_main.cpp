#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "qrex/harness/config.hpp"
#include "qrex/harness/experiment.hpp"
#include "qrex/harness/verify.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitVerifyFailure = 2;
constexpr int kExitRuntimeFailure = 3;

int cmd_run(const std::string& config_path, std::vector<std::string> sets, int jobs,
            const std::string& out_path) {
    using namespace qrex::harness;
    ExperimentConfig cfg;
    try {
        cfg = parse_config(config_path, sets);
        if (const char* master = std::getenv("QREX_MASTER_SEED")) {
            try {
                std::size_t pos = 0;
                cfg.base_seed = std::stoull(master, &pos);
                if (pos != std::string(master).size()) throw std::invalid_argument(master);
            } catch (const std::exception&) {
                throw ConfigError(std::string("QREX_MASTER_SEED: expected an integer, got '") +
                                  master + "'");
            }
        }
        if (jobs < 1) throw ConfigError("--jobs must be >= 1");
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfigError;
    }

    try {
        const AggregateResult result = qrex::harness::run_experiment(cfg, jobs);
        emit_csv(result, out_path);
        std::cout << "wrote " << out_path << " (" << cfg.experiment << "/" << cfg.algorithm << ", "
                  << cfg.seeds << " seeds";
        if (result.diverged_count > 0) std::cout << ", " << result.diverged_count << " diverged";
        std::cout << ")\n";
        if (!result.xs.empty()) {
            std::cout << "final mean:";
            for (const auto& [name, value] : result.mean_rows.back())
                std::cout << " " << name << " = " << value;
            std::cout << "\n";
        }
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return kExitRuntimeFailure;
    }
}

int cmd_verify(bool full) {
    const auto report = qrex::harness::verify_suite(full, &std::cout);
    if (report.all_passed()) {
        std::cout << "all " << report.checks.size() << " checks passed\n";
        return kExitOk;
    }
    int failed = 0;
    for (const auto& c : report.checks) failed += c.passed ? 0 : 1;
    std::cout << failed << " of " << report.checks.size() << " checks failed\n";
    return kExitVerifyFailure;
}

int cmd_list() {
    using namespace qrex::harness;
    for (const auto& name : experiment_names()) {
        const ExperimentConfig cfg = resolve_config({"experiment = " + name}, {});
        std::cout << name << "\n";
        for (const auto& [k, v] : cfg.echo())
            if (k != "experiment") std::cout << "  " << k << " = " << v << "\n";
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Q-learning with online targets and reverse experience replay"};
    app.require_subcommand(1);

    std::string config_path, out_path;
    std::vector<std::string> sets;
    int seeds = 0, jobs = 1;
    bool full = false;

    auto* run = app.add_subcommand("run", "run an experiment and write a metrics CSV");
    run->add_option("--config", config_path, "config file with key = value lines");
    run->add_option("--set", sets, "inline key=value override, repeatable");
    run->add_option("--seeds", seeds, "number of independent seeds");
    run->add_option("--jobs", jobs, "maximum concurrent runs");
    run->add_option("--out", out_path, "output CSV path")->required();

    auto* verify = app.add_subcommand("verify", "run the numerical property checks");
    verify->add_flag("--full", full, "larger randomized instance counts");

    app.add_subcommand("list-experiments", "list experiments with their defaults");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfigError;
    }

    if (run->parsed()) {
        if (seeds > 0) sets.push_back("seeds=" + std::to_string(seeds));
        return cmd_run(config_path, sets, jobs, out_path);
    }
    if (verify->parsed()) return cmd_verify(full);
    return cmd_list();
}
