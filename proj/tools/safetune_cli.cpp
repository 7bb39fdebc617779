// Command-line front end: tune, validate-safety, compare, export, default-config.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "safetune/errors.hpp"
#include "safetune/experiment.hpp"
#include "safetune/format.hpp"
#include "safetune/grid_export.hpp"

namespace {

using namespace safetune;
using harness::ExperimentConfig;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitStalled = 2;

struct CommonOptions {
    std::string config_path;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> iterations;
    std::optional<double> beta;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config_path, "JSON experiment configuration (defaults are used when omitted)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", opts.out, "Output directory");
    cmd->add_option("--seed", opts.seed, "RNG seed");
    cmd->add_option("--iterations", opts.iterations, "Maximum number of evaluations after the seed");
    cmd->add_option("--beta", opts.beta, "Confidence scale")->check(CLI::NonNegativeNumber);
}

ExperimentConfig resolve(const CommonOptions& opts) {
    ExperimentConfig config = opts.config_path.empty() ? ExperimentConfig{} : harness::load_config(opts.config_path);
    if (opts.out) config.output_dir = *opts.out;
    if (opts.seed) config.rng_seed = *opts.seed;
    if (opts.iterations) config.safeopt.max_iterations = *opts.iterations;
    if (opts.beta) config.safeopt.beta = *opts.beta;
    config.validate();
    return config;
}

std::string fmt(double v) { return format_double(v); }

int cmd_tune(const CommonOptions& opts) {
    const ExperimentConfig config = resolve(opts);
    const harness::RunResult result = harness::run_tuning(config, true);
    const auto& p = result.problem;
    const auto rec = static_cast<Eigen::Index>(result.recommendation);
    const auto seed = static_cast<Eigen::Index>(p.seed_index);

    std::cout << "mode: " << harness::to_string(config.mode) << '\n'
              << "status: " << harness::to_string(result.status) << '\n';
    if (!result.message.empty()) {
        std::cout << "message: " << result.message << '\n';
    }
    std::cout << "kernel: prior_std=" << fmt(std::sqrt(p.kernel.prior_variance))
              << " noise_std=" << fmt(std::sqrt(p.kernel.noise_variance)) << '\n'
              << "evaluations: " << result.state->history().size() << '\n'
              << "unsafe evaluations: " << result.unsafe_evaluations << '\n'
              << "seed: index " << p.seed_index << " J=" << fmt(p.truth[seed]) << '\n'
              << "recommendation: index " << result.recommendation << " at ("
              << p.domain.point(result.recommendation).transpose() << ") J=" << fmt(p.truth[rec]) << '\n';
    std::cout << "outputs: " << config.output_dir << '\n';
    return result.status == harness::RunStatus::stalled ? kExitStalled : kExitOk;
}

int cmd_safety(const CommonOptions& opts, std::size_t runs) {
    ExperimentConfig config = resolve(opts);
    const harness::SafetyStats stats = harness::run_synthetic_safety(config, runs, true);
    std::size_t stalled = 0;
    for (const auto& r : stats.per_run) {
        stalled += r.status == harness::RunStatus::stalled ? 1 : 0;
    }
    std::cout << "runs: " << stats.runs << '\n'
              << "resampled draws: " << stats.resampled_draws << '\n'
              << "evaluations: " << stats.total_evaluations << '\n'
              << "violations: " << stats.violations << '\n'
              << "violation fraction: " << fmt(stats.violation_fraction) << '\n'
              << "stalled runs: " << stalled << '\n'
              << "outputs: " << config.output_dir << '\n';
    return kExitOk;
}

std::string first_unsafe(const harness::AlgorithmReport& r) {
    return r.first_unsafe_iteration ? std::to_string(*r.first_unsafe_iteration) : "none";
}

int cmd_compare(const CommonOptions& opts) {
    const ExperimentConfig config = resolve(opts);
    const harness::Comparison cmp = harness::compare_baseline(config, true);
    std::cout << "ucb: first unsafe iteration " << first_unsafe(cmp.ucb) << ", unsafe evaluations "
              << cmp.ucb.unsafe_evaluations << '\n'
              << "safeopt: first unsafe iteration " << first_unsafe(cmp.safeopt) << ", unsafe evaluations "
              << cmp.safeopt.unsafe_evaluations << '\n'
              << "outputs: " << config.output_dir << '\n';
    return kExitOk;
}

int cmd_export(const std::string& state_path, const std::string& out_dir) {
    const harness::SavedState saved = harness::load_state(state_path);
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path path = std::filesystem::path(out_dir) / "grid.csv";
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    harness::write_grid_csv(harness::export_grid(*saved.state, saved.truth), out);
    if (!out) {
        throw std::runtime_error("failed writing '" + path.string() + "'");
    }
    std::cout << "wrote " << path.string() << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Safe controller-gain tuning with SafeOpt and a GP-UCB baseline"};
    app.require_subcommand(1);

    CommonOptions tune_opts;
    auto* tune = app.add_subcommand("tune", "Run SafeOpt (or GP-UCB in baseline-ucb mode) on the configured problem");
    add_common(tune, tune_opts);

    CommonOptions safety_opts;
    std::size_t runs = 100;
    auto* safety = app.add_subcommand("validate-safety", "Count unsafe evaluations over GP-drawn synthetic objectives");
    add_common(safety, safety_opts);
    safety->add_option("--runs", runs, "Number of independent draws")->check(CLI::PositiveNumber);

    CommonOptions compare_opts;
    auto* compare = app.add_subcommand("compare", "Run GP-UCB and SafeOpt side by side from the same seed");
    add_common(compare, compare_opts);

    std::string state_path;
    std::string export_out = "out";
    auto* exporter = app.add_subcommand("export", "Write grid.csv from a saved state.json");
    exporter->add_option("--state", state_path, "state.json written by tune")->required()->check(CLI::ExistingFile);
    exporter->add_option("--out", export_out, "Output directory");

    CommonOptions dump_opts;
    auto* dump = app.add_subcommand("default-config", "Print the resolved configuration as JSON");
    add_common(dump, dump_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (tune->parsed()) return cmd_tune(tune_opts);
        if (safety->parsed()) return cmd_safety(safety_opts, runs);
        if (compare->parsed()) return cmd_compare(compare_opts);
        if (exporter->parsed()) return cmd_export(state_path, export_out);
        if (dump->parsed()) {
            std::cout << harness::config_to_json(resolve(dump_opts)) << '\n';
            return kExitOk;
        }
    } catch (const AlgorithmStalled& e) {
        std::cerr << "stalled: " << e.what() << '\n';
        return kExitStalled;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitError;
}
