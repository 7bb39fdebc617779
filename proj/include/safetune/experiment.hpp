#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "safetune/domain.hpp"
#include "safetune/gaussian_process.hpp"
#include "safetune/plant.hpp"
#include "safetune/safe_opt.hpp"

namespace safetune::harness {

inline constexpr int kSchemaVersion = 1;

enum class Mode { quadrotor, synthetic, baseline_ucb };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);

/// Kernel hyperparameters. Standard deviations are either absolute, or for the
/// quadrotor problem fractions of |C(a0)| resolved after the seed rollout.
struct KernelSettings {
    std::vector<double> length_scales{0.05, 0.05};
    double prior_std_fraction = 0.05;
    double noise_std_fraction = 0.10;
    std::optional<double> prior_std;
    std::optional<double> noise_std;
};

/// Isotropic Gaussian bump used to build synthetic objectives.
struct Bump {
    std::vector<double> center;
    double height = 1.0;
    double width = 0.1;
};

struct SyntheticSettings {
    /// "gp-sample": a draw from the GP prior; "bumps": offset plus a sum of Gaussian bumps.
    std::string objective = "gp-sample";
    double offset = 0.0;
    std::vector<Bump> bumps;
    /// Required gap, in prior standard deviations, between the seed's true value and j_min.
    double seed_margin_stds = 1.0;
};

struct ExperimentConfig {
    int schema_version = kSchemaVersion;
    Mode mode = Mode::quadrotor;
    std::vector<Axis> axes{{-0.6, 0.1, 100}, {-0.6, 0.1, 100}};
    /// Required except for gp-sample synthetic runs, where the seed is drawn.
    std::optional<std::vector<double>> seed_point = std::vector<double>{-0.4, -0.4};
    KernelSettings kernel;
    opt::SafeOptConfig safeopt;
    plant::PlantConfig plant;
    /// Plant evaluation noise as a fraction of |C(a0)|; overrides plant.eval_noise_std when set.
    std::optional<double> eval_noise_fraction;
    SyntheticSettings synthetic;
    std::uint64_t rng_seed = 0;
    std::string output_dir = "out";
    /// Adds wall-clock milliseconds to each log record (the log is then no longer replayable byte for byte).
    bool record_timing = false;

    void validate() const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);

/// One row of the run log. Iteration 0 is the seed measurement.
struct IterationRecord {
    std::size_t iteration = 0;
    std::size_t index = 0;
    Point point;
    double measured = 0.0;
    std::optional<double> truth;
    /// Set sizes computed before the selection (zero for the seed row).
    std::size_t safe_count = 0;
    std::size_t maximizer_count = 0;
    std::size_t expander_count = 0;
    std::size_t expanders_checked = 0;
    /// Points that were safe at the previous iteration but are not safe now.
    std::size_t safe_lost = 0;
    double width = 0.0;
    double lower_at_selection = 0.0;
    bool expander_choice = false;
    std::size_t recommendation = 0;
    std::optional<double> recommendation_truth;
    std::optional<double> wall_ms;
};

enum class RunStatus { max_iterations, converged, stalled };
std::string to_string(RunStatus status);

/// A fully resolved optimization problem: grid, ground truth and measurement model.
struct Problem {
    Domain domain;
    gp::KernelParams kernel;
    std::size_t seed_index = 0;
    bool seed_snapped = false;
    /// Noise-free performance at every grid point.
    Eigen::VectorXd truth;
    /// Noisy measurement for (grid index, evaluation number); evaluation 0 is the seed.
    std::function<double(std::size_t, std::size_t)> measure;
    /// Quadrotor problems only.
    std::optional<double> seed_cost;
    std::optional<plant::PlantConfig> plant;
};

/// Builds the problem described by a quadrotor, baseline or bumps configuration.
Problem make_problem(const ExperimentConfig& config);
/// Builds the problem for one gp-sample draw; returns nullopt if no grid point is an admissible seed.
std::optional<Problem> make_gp_sample_problem(const ExperimentConfig& config, std::uint64_t draw_seed);

struct RunResult {
    RunStatus status = RunStatus::max_iterations;
    std::string message;
    std::vector<IterationRecord> log;
    std::unique_ptr<opt::SafeOpt> state;
    Problem problem;
    std::size_t recommendation = 0;
    std::size_t unsafe_evaluations = 0;
};

/// Runs SafeOpt on a resolved problem. Never throws AlgorithmStalled; a stall ends the run.
RunResult run_safeopt(Problem problem, const ExperimentConfig& config);
/// Runs unconstrained GP-UCB from the same seed for max_iterations evaluations.
RunResult run_ucb(Problem problem, const ExperimentConfig& config);

/// Resolves the configured problem and runs SafeOpt; writes outputs when `write` is set.
RunResult run_tuning(const ExperimentConfig& config, bool write = true);

struct SafetyRun {
    std::size_t draw_attempts = 0;
    std::size_t seed_index = 0;
    std::size_t evaluations = 0;
    std::size_t violations = 0;
    /// Largest j_min - truth over the run's evaluations (0 when there was no violation).
    double worst_violation = 0.0;
    RunStatus status = RunStatus::max_iterations;
};

struct SafetyStats {
    std::size_t runs = 0;
    std::size_t resampled_draws = 0;
    std::size_t total_evaluations = 0;
    std::size_t violations = 0;
    double violation_fraction = 0.0;
    std::vector<SafetyRun> per_run;
};

/// Repeats SafeOpt on independent GP-prior draws and counts evaluations whose
/// true value falls below j_min.
SafetyStats run_synthetic_safety(const ExperimentConfig& config, std::size_t n_runs, bool write = true);

struct AlgorithmReport {
    std::vector<IterationRecord> log;
    std::optional<std::size_t> first_unsafe_iteration;
    std::size_t unsafe_evaluations = 0;
    RunStatus status = RunStatus::max_iterations;
};

struct Comparison {
    AlgorithmReport safeopt;
    AlgorithmReport ucb;
};

/// GP-UCB and SafeOpt side by side from the same seed and noise streams.
Comparison compare_baseline(const ExperimentConfig& config, bool write = true);

/// Writes run_log.jsonl, grid.csv, state.json and summary.json (plus traces for quadrotor runs).
void write_run_outputs(const RunResult& result, const ExperimentConfig& config,
                       const std::filesystem::path& dir);

std::string record_to_json(const IterationRecord& record);

/// Rebuilds the optimizer from a state.json file by replaying its measurements.
struct SavedState {
    std::unique_ptr<opt::SafeOpt> state;
    std::optional<Eigen::VectorXd> truth;
};
SavedState load_state(const std::filesystem::path& path);

}  // namespace safetune::harness
