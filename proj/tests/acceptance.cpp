// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run all criteria
//   acceptance --only N   run criterion N (1-7)
//
// Criteria 1-2 exercise the library directly; 3-7 drive the safetune CLI and
// read back the files it writes. Exit status is nonzero if any run criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "json.hpp"
#include "oracles.hpp"
#include "random_states.hpp"
#include "safetune/errors.hpp"
#include "safetune/format.hpp"
#include "safetune/grid_export.hpp"

using namespace safetune;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path kConfigs = fs::path(SAFETUNE_SOURCE_DIR) / "configs";
const fs::path kWork = fs::path(SAFETUNE_ACCEPTANCE_OUTPUT);

// Pinned tolerances and limits.
constexpr double kGpRelTol = 1e-8;
constexpr double kSafetyFractionBeta2 = 0.01;
constexpr double kMinCostImprovement = 0.20;
constexpr std::size_t kUcbUnsafeWithin = 3;
constexpr long kBasinCellTolerance = 1;

struct Outcome {
    bool pass;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 3) {
    std::ostringstream s;
    s.precision(digits);
    s << v;
    return s.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

void cli(const std::string& args, int expected_status = 0) {
    const std::string cmd = std::string(SAFETUNE_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (code != expected_status) {
        throw std::runtime_error("'" + cmd + "' exited with " + std::to_string(code));
    }
}

fs::path fresh(const std::string& name) {
    const fs::path p = kWork / name;
    fs::remove_all(p);
    return p;
}

// ------------------------------------------------------------------ criterion 1

Outcome gp_oracle_equivalence() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Domain domain({{0.0, 1.0, 20}, {0.0, 1.0, 20}});
    double worst = 0.0;
    for (int instance = 0; instance < 200; ++instance) {
        gp::KernelParams params;
        params.prior_variance = std::pow(10.0, -1.0 + 2.0 * u(rng));
        params.length_scales = Eigen::Vector2d(0.05 + 0.45 * u(rng), 0.05 + 0.45 * u(rng));
        params.noise_variance = params.prior_variance * std::pow(10.0, -4.0 + 3.0 * u(rng));
        const auto n = static_cast<Eigen::Index>(1 + u(rng) * 50.0);
        gp::Dataset data{Points(std::min<Eigen::Index>(n, 50), 2), Eigen::VectorXd(std::min<Eigen::Index>(n, 50))};
        std::normal_distribution<double> normal(0.0, std::sqrt(params.prior_variance));
        for (Eigen::Index i = 0; i < data.size(); ++i) {
            data.inputs.row(i) = domain.grid().row(static_cast<Eigen::Index>(u(rng) * 400.0));
            data.targets[i] = normal(rng);
        }
        const gp::Prediction p = gp::GpPosterior::fit(data, params).predict(domain.grid());
        const oracle::DensePosterior ref =
            oracle::dense_posterior(data.inputs, data.targets, Eigen::VectorXd::Constant(data.size(), params.noise_variance),
                                    params.prior_variance, params.length_scales, domain.grid());
        const double sd = std::sqrt(params.prior_variance);
        for (Eigen::Index q = 0; q < p.mean.size(); ++q) {
            worst = std::max(worst, std::abs(p.mean[q] - ref.mean[q]) / std::max(std::abs(ref.mean[q]), sd));
            worst = std::max(worst, std::abs(p.variance[q] - ref.variance[q]) /
                                        std::max(std::abs(ref.variance[q]), params.prior_variance));
        }
    }
    const double t = seconds_since(t0);
    return {worst <= kGpRelTol && t < 10.0,
            "200 instances, max relative error " + fmt(worst) + " (limit " + fmt(kGpRelTol) + "), " + fmt(t) +
                " s (limit 10 s)"};
}

// ------------------------------------------------------------------ criterion 2

Outcome lazy_expander_equivalence() {
    const auto t0 = Clock::now();
    int agree = 0;
    int expanders = 0;
    int stalled = 0;
    for (int instance = 0; instance < 200; ++instance) {
        const auto st = testing_states::make_random_state(500000 + static_cast<std::uint64_t>(instance));
        const auto expected = oracle::exhaustive_select(st.gp, st.domain.grid(), st.bounds, st.safe, st.beta, st.j_min);
        try {
            const opt::Selection sel = opt::select_next(st.gp, st.domain.grid(), st.bounds, st.safe, st.beta, st.j_min);
            agree += expected && *expected == sel.index ? 1 : 0;
            expanders += sel.expander ? 1 : 0;
        } catch (const AlgorithmStalled&) {
            agree += expected ? 0 : 1;
            ++stalled;
        }
    }
    const double t = seconds_since(t0);
    return {agree == 200 && t < 60.0, std::to_string(agree) + "/200 identical indices (" + std::to_string(expanders) +
                                          " expander choices, " + std::to_string(stalled) + " stalled), " + fmt(t) +
                                          " s (limit 60 s)"};
}

// ------------------------------------------------------------------ criterion 3

Outcome statistical_safety() {
    const auto t0 = Clock::now();
    const std::string config = (kConfigs / "synthetic_safety.json").string();
    const fs::path d2 = fresh("safety_beta2");
    const fs::path d3 = fresh("safety_beta3");
    cli("validate-safety --config " + config + " --runs 100 --beta 2 --out " + d2.string());
    cli("validate-safety --config " + config + " --runs 100 --beta 3 --out " + d3.string());
    const json s2 = read_json(d2 / "safety.json");
    const json s3 = read_json(d3 / "safety.json");
    const double frac2 = s2.at("violation_fraction").get<double>();
    const std::size_t v3 = s3.at("violations").get<std::size_t>();
    const double t = seconds_since(t0);
    return {frac2 <= kSafetyFractionBeta2 && v3 == 0 && t < 300.0,
            "beta=2: " + std::to_string(s2.at("violations").get<std::size_t>()) + "/" +
                std::to_string(s2.at("total_evaluations").get<std::size_t>()) + " = " + fmt(frac2) + " (limit " +
                fmt(kSafetyFractionBeta2) + "); beta=3: " + std::to_string(v3) + " violations (limit 0); " + fmt(t) +
                " s (limit 300 s)"};
}

// ------------------------------------------------------------------ criterion 4

Outcome quadrotor_reproduction() {
    const auto t0 = Clock::now();
    const fs::path dir = fresh("quadrotor");
    cli("tune --config " + (kConfigs / "quadrotor.json").string() + " --out " + dir.string());
    const double t = seconds_since(t0);
    const json s = read_json(dir / "summary.json");
    const std::size_t unsafe = s.at("unsafe_evaluations").get<std::size_t>();
    const double improvement = s.at("cost_improvement").get<double>();
    const std::size_t evaluations = s.at("evaluations").get<std::size_t>();
    std::size_t final_safe = 0;
    {
        std::ifstream in(dir / "run_log.jsonl");
        std::string line;
        while (std::getline(in, line)) {
            final_safe = json::parse(line).at("safe_count").get<std::size_t>();
        }
    }

    // Context only: the same run with the measurement noise halved to 5% of |C0|.
    json variant = read_json(kConfigs / "quadrotor.json");
    variant["kernel"]["noise_std_fraction"] = 0.05;
    const fs::path vdir = fresh("quadrotor_noise005");
    fs::create_directories(vdir);
    std::ofstream(vdir / "config.json") << variant.dump(2);
    cli("tune --config " + (vdir / "config.json").string() + " --out " + vdir.string());
    const json vs = read_json(vdir / "summary.json");

    return {unsafe == 0 && improvement >= kMinCostImprovement && evaluations == 30 && t < 60.0,
            std::to_string(evaluations) + " evaluations, " + std::to_string(unsafe) +
                " unsafe (limit 0), cost improvement " + fmt(improvement) + " (limit >= " + fmt(kMinCostImprovement) +
                "), final safe set " + std::to_string(final_safe) + " points, " + fmt(t) +
                " s (limit 60 s); info: with noise_std_fraction 0.05 the improvement is " +
                fmt(vs.at("cost_improvement").get<double>()) + " with " +
                std::to_string(vs.at("unsafe_evaluations").get<std::size_t>()) + " unsafe"};
}

// ------------------------------------------------------------------ criterion 5

Outcome baseline_contrast() {
    const auto t0 = Clock::now();
    const fs::path dir = fresh("compare");
    cli("compare --config " + (kConfigs / "quadrotor.json").string() + " --out " + dir.string());
    const double t = seconds_since(t0);
    const json c = read_json(dir / "compare.json");
    const json& ucb = c.at("ucb").at("first_unsafe_iteration");
    const json& safe = c.at("safeopt").at("first_unsafe_iteration");
    const std::size_t safe_evals = c.at("safeopt").at("evaluations").get<std::size_t>();
    const bool ucb_ok = !ucb.is_null() && ucb.get<std::size_t>() <= kUcbUnsafeWithin;
    const bool safe_ok = safe.is_null() && safe_evals == 30;
    return {ucb_ok && safe_ok && t < 30.0,
            "GP-UCB first unsafe at iteration " + (ucb.is_null() ? std::string("none") : std::to_string(ucb.get<std::size_t>())) +
                " (limit <= " + std::to_string(kUcbUnsafeWithin) + "); SafeOpt first unsafe " +
                (safe.is_null() ? std::string("none") : std::to_string(safe.get<std::size_t>())) + " over " +
                std::to_string(safe_evals) + " evaluations; " + fmt(t) + " s (limit 30 s)"};
}

// ------------------------------------------------------------------ criterion 6

struct BasinResult {
    long offset;
    std::size_t unsafe;
    std::size_t evaluations;
};

BasinResult basin_run(const fs::path& dir, const std::string& extra) {
    cli("tune --config " + (kConfigs / "basin_1d.json").string() + " --out " + dir.string() + extra);
    std::ifstream in(dir / "grid.csv");
    const harness::GridExport g = harness::read_grid_csv(in);
    const json s = read_json(dir / "summary.json");
    const auto seed = s.at("seed").at("index").get<Eigen::Index>();
    const auto rec = s.at("recommendation").at("index").get<long>();
    const Eigen::VectorXd& truth = *g.truth;
    // Connected component of {truth >= 0} that contains the seed.
    Eigen::Index lo = seed;
    Eigen::Index hi = seed;
    while (lo > 0 && truth[lo - 1] >= 0.0) --lo;
    while (hi + 1 < truth.size() && truth[hi + 1] >= 0.0) ++hi;
    Eigen::Index best = lo;
    for (Eigen::Index i = lo; i <= hi; ++i) {
        if (truth[i] > truth[best]) best = i;
    }
    return {rec - static_cast<long>(best), s.at("unsafe_evaluations").get<std::size_t>(),
            s.at("evaluations").get<std::size_t>()};
}

Outcome basin_objective() {
    const auto t0 = Clock::now();
    const BasinResult r = basin_run(fresh("basin_1d"), "");
    const double t = seconds_since(t0);
    const bool pass = std::labs(r.offset) <= kBasinCellTolerance && r.unsafe == 0 && r.evaluations <= 30 && t < 10.0;

    // Context only: how often the same objective succeeds under other noise seeds.
    int hits = 0;
    for (int s = 1; s <= 20; ++s) {
        const BasinResult o = basin_run(fresh("basin_1d_seed"), " --seed " + std::to_string(s));
        hits += std::labs(o.offset) <= kBasinCellTolerance && o.unsafe == 0 ? 1 : 0;
    }
    return {pass, "recommendation " + std::to_string(r.offset) + " cells from the true safe argmax (limit " +
                      std::to_string(kBasinCellTolerance) + "), " + std::to_string(r.unsafe) + " unsafe, " +
                      std::to_string(r.evaluations) + " evaluations, " + fmt(t) + " s (limit 10 s); info: " +
                      std::to_string(hits) + "/20 other noise seeds also within tolerance"};
}

// ------------------------------------------------------------------ criterion 7

Outcome determinism() {
    const fs::path a = fresh("determinism_a");
    const fs::path b = fresh("determinism_b");
    const std::string config = (kConfigs / "quadrotor.json").string();
    cli("tune --config " + config + " --out " + a.string());
    cli("tune --config " + config + " --out " + b.string());
    const bool log_same = slurp(a / "run_log.jsonl") == slurp(b / "run_log.jsonl");
    const bool grid_same = slurp(a / "grid.csv") == slurp(b / "grid.csv");
    return {log_same && grid_same, std::string("run_log.jsonl ") + (log_same ? "identical" : "DIFFERS") +
                                       ", grid.csv " + (grid_same ? "identical" : "DIFFERS")};
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    if (argc == 3 && std::string(argv[1]) == "--only") {
        only = std::atoi(argv[2]);
    } else if (argc != 1) {
        std::cerr << "usage: acceptance [--only N]\n";
        return 2;
    }
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"GP oracle equivalence", gp_oracle_equivalence},
        {"lazy expander equivalence", lazy_expander_equivalence},
        {"statistical safety (synthetic)", statistical_safety},
        {"quadrotor surrogate reproduction", quadrotor_reproduction},
        {"baseline contrast", baseline_contrast},
        {"1D constructed objective", basin_objective},
        {"determinism", determinism},
    };
    fs::create_directories(kWork);
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int number = static_cast<int>(i) + 1;
        if (only != 0 && only != number) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::cout << "criterion " << number << " [" << criteria[i].first << "]: " << (o.pass ? "PASS" : "FAIL") << " - "
                  << o.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
