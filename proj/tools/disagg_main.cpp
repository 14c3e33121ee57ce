// Command-line front end: evaluate | gof | benchmark | synth.

#include "disagg/commands.hpp"
#include "disagg/config.hpp"
#include "disagg/error.hpp"
#include "disagg/parallel.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct CliArgs {
    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> format;
    std::size_t threads = 0;
};

void add_common_flags(CLI::App* cmd, CliArgs& args) {
    cmd->add_option("--config", args.config_path, "Path to the JSON run configuration")
        ->required();
    cmd->add_option("--out", args.out_dir, "Output directory (overrides the config)");
    cmd->add_option("--seed", args.seed, "Master seed (overrides the config)");
    cmd->add_option("--threads", args.threads,
                    "Worker threads (0 = available parallelism)");
    cmd->add_option("--format", args.format, "Output format: csv, json, or both")
        ->check(CLI::IsMember({"csv", "json", "both"}));
}

int run(const CliArgs& args, void (*command)(const disagg::RunConfig&)) {
    disagg::set_thread_count(args.threads);
    disagg::RunConfig config = disagg::load_run_config(args.config_path);
    disagg::ConfigOverrides overrides;
    overrides.output_dir = args.out_dir;
    overrides.seed = args.seed;
    overrides.format = args.format;
    disagg::apply_overrides(config, overrides);
    command(config);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Disaggregated evaluation of system performance across "
                 "intersectional subgroups"};
    app.require_subcommand(1);

    CliArgs evaluate_args, gof_args, benchmark_args, synth_args;
    CLI::App* evaluate = app.add_subcommand(
        "evaluate", "Per-group point estimates and confidence intervals");
    add_common_flags(evaluate, evaluate_args);
    CLI::App* gof = app.add_subcommand("gof", "Goodness-of-fit comparison ladder");
    add_common_flags(gof, gof_args);
    CLI::App* benchmark = app.add_subcommand(
        "benchmark", "Score estimators against synthetic ground truth");
    add_common_flags(benchmark, benchmark_args);
    CLI::App* synth = app.add_subcommand("synth", "Write a semi-synthetic population");
    add_common_flags(synth, synth_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (evaluate->parsed()) return run(evaluate_args, disagg::cmd_evaluate);
        if (gof->parsed()) return run(gof_args, disagg::cmd_gof);
        if (benchmark->parsed()) return run(benchmark_args, disagg::cmd_benchmark);
        if (synth->parsed()) return run(synth_args, disagg::cmd_synth);
    } catch (const disagg::Error& e) {
        std::cerr << "{\"error\":\"" << e.kind_name() << "\",\"message\":\""
                  << e.what() << "\"}" << std::endl;
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "{\"error\":\"runtime\",\"message\":\"" << e.what() << "\"}" << std::endl;
        return 1;
    }
    return 2;
}
