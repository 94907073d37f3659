// Command-line experiment harness. Subcommands take a JSON config and emit a
// CSV result plus a JSON sidecar with the fully resolved configuration.
//
//   hpslab simulate    <config.json>   sweep with Monte Carlo replicates
//   hpslab theory      <config.json>   same sweep, theory columns only
//   hpslab regimes     <config.json>   transfer-regime report (text + JSON)
//   hpslab progressive <config.json>   progressive source enlargement traces
//   hpslab multitask   <config.json>   multi-source width sweep
//
// Exit codes: 0 success, 2 config error, 3 numeric failure.

#include "hpslab/hpslab.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> replicates;
    std::optional<std::string> out;
    int threads = 1;
    bool strict = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("config", flags.config_path, "experiment config (JSON)")->required();
    cmd->add_option("--seed", flags.seed, "override master seed");
    cmd->add_option("--replicates", flags.replicates, "override replicate count");
    cmd->add_option("--out", flags.out, "override output path");
    cmd->add_option("--threads", flags.threads, "worker threads for replicates");
    cmd->add_flag("--strict", flags.strict, "enforce eigenvalue bounds instead of warning");
}

hpslab::ExperimentConfig resolve(const CommonFlags& flags) {
    hpslab::ExperimentConfig cfg = hpslab::load_config(flags.config_path);
    if (flags.seed) cfg.master_seed = *flags.seed;
    if (flags.replicates) cfg.replicates = *flags.replicates;
    if (flags.out) cfg.output = *flags.out;
    if (flags.strict) {
        cfg.strict = true;
        cfg.sigma1.realize(cfg.p).validate(hpslab::kDefaultTau, true);
        cfg.sigma2.realize(cfg.p).validate(hpslab::kDefaultTau, true);
    }
    return cfg;
}

int run(const CommonFlags& flags, const char* subcommand) {
    hpslab::ExperimentConfig cfg = resolve(flags);
    const std::string sub = subcommand;
    if (sub == "theory") cfg.replicates = 0;
    if (sub == "regimes" && cfg.kind != hpslab::ExperimentKind::Regimes)
        throw hpslab::ConfigError("regimes subcommand requires experiment = \"regimes\"");
    if (sub == "progressive" && cfg.kind != hpslab::ExperimentKind::Progressive)
        throw hpslab::ConfigError("progressive subcommand requires experiment = \"progressive\"");
    if (sub == "multitask" && cfg.kind != hpslab::ExperimentKind::Multitask)
        throw hpslab::ConfigError("multitask subcommand requires experiment = \"multitask\"");

    hpslab::SweepResult res = hpslab::run_experiment(cfg, flags.threads);
    if (cfg.kind == hpslab::ExperimentKind::Regimes)
        std::cout << res.csv;
    else
        std::cout << "wrote " << cfg.output << " (" << res.rows.size() << " aggregated rows)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"numerical laboratory for two-task and multi-task linear transfer learning"};
    app.require_subcommand(1);

    const char* names[] = {"simulate", "theory", "regimes", "progressive", "multitask"};
    const char* descs[] = {"run a Monte Carlo sweep against theory curves",
                           "emit theory-only tables (no sampling)",
                           "classify the information-transfer regime",
                           "progressive source enlargement procedure",
                           "multi-source width sweep"};
    CommonFlags flags[5];
    for (int i = 0; i < 5; ++i) add_common(app.add_subcommand(names[i], descs[i]), flags[i]);

    try {
        app.parse(argc, argv);
        for (int i = 0; i < 5; ++i)
            if (app.get_subcommand(names[i])->parsed()) return run(flags[i], names[i]);
        return 2;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? 2 : 0;
    } catch (const hpslab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const hpslab::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
