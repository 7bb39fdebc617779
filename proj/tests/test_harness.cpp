#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "safetune/errors.hpp"
#include "safetune/experiment.hpp"
#include "safetune/grid_export.hpp"

using namespace safetune;
using namespace safetune::harness;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = fs::path(SAFETUNE_SOURCE_DIR) / "configs";

fs::path scratch(const std::string& name) {
    const fs::path p = fs::path(SAFETUNE_TEST_OUTPUT) / name;
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SAFETUNE_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ExperimentConfig bumps_config() {
    ExperimentConfig c = load_config(kConfigs / "basin_1d.json");
    c.safeopt.max_iterations = 12;
    return c;
}

}  // namespace

TEST_CASE("config JSON round trip") {
    ExperimentConfig c = load_config(kConfigs / "quadrotor.json");
    c.eval_noise_fraction = 0.1;
    c.kernel.prior_std = 2.0;
    c.synthetic.bumps.push_back({{0.1, 0.2}, 1.5, 0.3});
    const std::string text = config_to_json(c);
    CHECK(config_to_json(parse_config(text)) == text);
}

TEST_CASE("shipped configurations parse") {
    for (const char* name : {"quadrotor.json", "synthetic_safety.json", "basin_1d.json"}) {
        CAPTURE(name);
        CHECK_NOTHROW(load_config(kConfigs / name));
    }
}

TEST_CASE("missing keys take defaults") {
    const ExperimentConfig c = parse_config(R"({"schema_version": 1})");
    CHECK(c.mode == Mode::quadrotor);
    CHECK(c.axes.size() == 2);
    CHECK(c.axes[0].count == 100);
    CHECK(c.safeopt.beta == 2.0);
    CHECK(c.safeopt.max_iterations == 30);
    CHECK(c.kernel.prior_std_fraction == 0.05);
    CHECK(c.kernel.noise_std_fraction == 0.10);
    CHECK(c.plant.perf_multiplier == 1.05);
}

TEST_CASE("malformed configurations are rejected") {
    CHECK_THROWS_AS(parse_config("{"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"schema_version": 2})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"bogus": 1})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"safeopt": {"betta": 2}})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"mode": "hover"})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"kernel": {"length_scales": [0.05]}})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"safeopt": {"beta": "two"}})"), std::invalid_argument);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), std::runtime_error);
}

TEST_CASE("seed gains are snapped to the grid") {
    ExperimentConfig c;
    c.safeopt.max_iterations = 0;
    const Problem p = make_problem(c);
    CHECK(p.seed_snapped);
    const Point s = p.domain.point(p.seed_index);
    CHECK(std::abs(s[0] + 0.4) <= 0.5 * p.domain.spacing()[0]);
    CHECK(std::abs(s[1] + 0.4) <= 0.5 * p.domain.spacing()[1]);

    c.axes = {{-0.6, 0.1, 71}, {-0.6, 0.1, 71}};
    CHECK_FALSE(make_problem(c).seed_snapped);
}

TEST_CASE("quadrotor problem resolves hyperparameters from the seed cost") {
    ExperimentConfig c;
    const Problem p = make_problem(c);
    REQUIRE(p.seed_cost);
    const double scale = std::abs(*p.seed_cost);
    CHECK(std::sqrt(p.kernel.prior_variance) == doctest::Approx(0.05 * scale).epsilon(1e-12));
    CHECK(std::sqrt(p.kernel.noise_variance) == doctest::Approx(0.10 * scale).epsilon(1e-12));
    CHECK(p.truth[static_cast<Eigen::Index>(p.seed_index)] == doctest::Approx(0.05 * scale).epsilon(1e-12));
    CHECK(p.measure(p.seed_index, 0) == p.truth[static_cast<Eigen::Index>(p.seed_index)]);
}

TEST_CASE("zero iterations log only the seed") {
    ExperimentConfig c;
    c.safeopt.max_iterations = 0;
    const RunResult r = run_tuning(c, false);
    REQUIRE(r.log.size() == 1);
    CHECK(r.log[0].iteration == 0);
    CHECK(r.log[0].index == r.problem.seed_index);
    CHECK(r.recommendation == r.problem.seed_index);
    CHECK(r.status == RunStatus::max_iterations);

    const Comparison cmp = compare_baseline(c, false);
    REQUIRE(cmp.safeopt.log.size() == 1);
    REQUIRE(cmp.ucb.log.size() == 1);
    CHECK(record_to_json(cmp.safeopt.log[0]) == record_to_json(cmp.ucb.log[0]));
    CHECK_FALSE(cmp.safeopt.first_unsafe_iteration);
    CHECK_FALSE(cmp.ucb.first_unsafe_iteration);
}

TEST_CASE("grid export of a prior state") {
    const Domain d({{0.0, 1.0, 5}, {0.0, 1.0, 4}});
    gp::KernelParams params;
    params.prior_variance = 0.25;
    params.length_scales = Eigen::Vector2d(0.3, 0.3);
    params.noise_variance = 0.01;
    Mask seed = Mask::Constant(20, false);
    seed[7] = true;
    const opt::SafeOpt so(d, gp::GpPosterior(params), {}, seed);
    const GridExport g = export_grid(so, std::nullopt);
    CHECK(g.rows() == 20);
    CHECK(g.mean.cwiseAbs().maxCoeff() == 0.0);
    CHECK((g.std.array() == 0.5).all());
    CHECK(g.safe.count() == 1);
    CHECK(g.coordinates.row(7) == d.grid().row(7));
}

TEST_CASE("grid export after one observation matches the closed form") {
    const Domain d({{0.0, 1.0, 11}});
    gp::KernelParams params;
    params.prior_variance = 1.0;
    params.length_scales = Eigen::VectorXd::Constant(1, 0.2);
    params.noise_variance = 0.04;
    const opt::SafeOpt so(d, params, {}, 3, 0.8);
    const GridExport g = export_grid(so, std::nullopt);
    // At the observed point k = prior variance: mean = y / (1 + 0.04), var = 1 - 1 / 1.04.
    CHECK(g.mean[3] == doctest::Approx(0.8 / 1.04).epsilon(1e-12));
    CHECK(g.std[3] == doctest::Approx(std::sqrt(1.0 - 1.0 / 1.04)).epsilon(1e-12));
    CHECK(g.lower[3] == doctest::Approx(g.mean[3] - 2.0 * g.std[3]).epsilon(1e-12));
}

TEST_CASE("grid CSV round trip is exact") {
    const RunResult r = run_tuning(bumps_config(), false);
    const GridExport g = export_grid(*r.state, r.problem.truth);
    std::stringstream buf;
    write_grid_csv(g, buf);
    const GridExport back = read_grid_csv(buf);
    CHECK(back.coordinates == g.coordinates);
    CHECK(back.mean == g.mean);
    CHECK(back.std == g.std);
    CHECK(back.lower == g.lower);
    CHECK(back.upper == g.upper);
    CHECK((back.safe == g.safe).all());
    CHECK((back.maximizer == g.maximizer).all());
    CHECK((back.expander == g.expander).all());
    CHECK((back.expander_checked == g.expander_checked).all());
    REQUIRE(back.truth);
    CHECK(*back.truth == *g.truth);

    std::stringstream again;
    write_grid_csv(back, again);
    CHECK(again.str() == buf.str());
}

TEST_CASE("runs are replayable byte for byte") {
    ExperimentConfig c = bumps_config();
    const fs::path a = scratch("replay_a");
    const fs::path b = scratch("replay_b");
    c.output_dir = a.string();
    run_tuning(c, true);
    c.output_dir = b.string();
    run_tuning(c, true);
    for (const char* f : {"run_log.jsonl", "grid.csv", "summary.json"}) {
        CAPTURE(f);
        CHECK(slurp(a / f) == slurp(b / f));
    }
}

TEST_CASE("a saved state reproduces the exported grid") {
    ExperimentConfig c = bumps_config();
    const fs::path dir = scratch("saved_state");
    c.output_dir = dir.string();
    run_tuning(c, true);
    const SavedState s = load_state(dir / "state.json");
    std::ostringstream out;
    write_grid_csv(export_grid(*s.state, s.truth), out);
    CHECK(out.str() == slurp(dir / "grid.csv"));
    CHECK_THROWS(load_state(dir / "missing.json"));
}

TEST_CASE("logged set counts agree with a replay of the logged data") {
    const RunResult r = run_tuning(bumps_config(), false);
    const Problem& p = r.problem;
    opt::SafeOpt replay(p.domain, p.kernel, r.state->config(), p.seed_index, r.log[0].measured);
    for (std::size_t n = 1; n < r.log.size(); ++n) {
        const IterationRecord& rec = r.log[n];
        const opt::Selection sel = replay.select_next();
        CHECK(sel.index == rec.index);
        CHECK(sel.sets.safe_count() == rec.safe_count);
        CHECK(sel.sets.maximizer_count() == rec.maximizer_count);
        CHECK(sel.sets.expander_count() == rec.expander_count);
        CHECK(sel.sets.resolved_expander_count == rec.expanders_checked);
        CHECK(sel.width == rec.width);
        replay.commit(sel, rec.measured);
        CHECK(replay.recommend() == rec.recommendation);
    }
}

TEST_CASE("a stalled run ends with a terminal status") {
    ExperimentConfig c = bumps_config();
    c.synthetic.offset = -10.0;
    c.synthetic.bumps.clear();
    const RunResult r = run_tuning(c, false);
    CHECK(r.status == RunStatus::stalled);
    CHECK_FALSE(r.message.empty());
    CHECK(r.log.size() == 1);
}

TEST_CASE("gp-sample problems start from an admissible seed") {
    ExperimentConfig c = load_config(kConfigs / "synthetic_safety.json");
    int built = 0;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto p = make_gp_sample_problem(c, s);
        if (!p) continue;
        ++built;
        CHECK(p->truth[static_cast<Eigen::Index>(p->seed_index)] >= c.safeopt.j_min + 1.0);
    }
    CHECK(built > 0);
}

TEST_CASE("synthetic safety: conservative beta is safe, a small beta is not") {
    ExperimentConfig c = load_config(kConfigs / "synthetic_safety.json");
    c.safeopt.beta = 10.0;
    CHECK(run_synthetic_safety(c, 10, false).violations == 0);
    c.safeopt.beta = 0.5;
    c.safeopt.stop_epsilon = 0.0;
    const SafetyStats s = run_synthetic_safety(c, 10, false);
    CHECK(s.violations > 0);
    CHECK(s.total_evaluations == 300);
}

TEST_CASE("beta zero degenerates to greedy evaluation of the posterior mean") {
    // Zero width makes the maximizer set the argmax of the mean, and a virtual
    // observation equal to the mean moves no other mean, so nothing expands.
    ExperimentConfig c = load_config(kConfigs / "synthetic_safety.json");
    c.safeopt.beta = 0.0;
    c.safeopt.stop_epsilon = 0.0;
    c.safeopt.max_iterations = 10;
    const auto p = make_gp_sample_problem(c, 3);
    REQUIRE(p);
    const RunResult r = run_safeopt(*p, c);
    CHECK(r.log.size() == 11);
    opt::SafeOpt replay(p->domain, p->kernel, r.state->config(), p->seed_index, r.log[0].measured);
    for (std::size_t n = 1; n < r.log.size(); ++n) {
        const opt::ConfidenceBounds b = replay.bounds();
        Eigen::Index best = 0;
        b.mean.maxCoeff(&best);
        CHECK(r.log[n].index == static_cast<std::size_t>(best));
        CHECK_FALSE(r.log[n].expander_choice);
        replay.observe(r.log[n].index, r.log[n].measured);
    }
}

TEST_CASE("timing is only recorded on request") {
    ExperimentConfig c = bumps_config();
    c.safeopt.max_iterations = 2;
    CHECK(record_to_json(run_tuning(c, false).log[1]).find("wall_ms") == std::string::npos);
    c.record_timing = true;
    CHECK(record_to_json(run_tuning(c, false).log[1]).find("wall_ms") != std::string::npos);
}

TEST_CASE("log records are single-line JSON") {
    const RunResult r = run_tuning(bumps_config(), false);
    for (const IterationRecord& rec : r.log) {
        const std::string line = record_to_json(rec);
        CHECK(line.find('\n') == std::string::npos);
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("iteration").get<std::size_t>() == rec.iteration);
    }
}

TEST_CASE("CLI exit codes") {
    const fs::path out = scratch("cli");
    const std::string common = "--out " + out.string();
    CHECK(run_cli("tune --config " + (kConfigs / "basin_1d.json").string() + " --iterations 3 " + common) == 0);
    CHECK(fs::exists(out / "run_log.jsonl"));
    CHECK(run_cli("export --state " + (out / "state.json").string() + " --out " + (out / "export").string()) == 0);
    CHECK(slurp(out / "export" / "grid.csv") == slurp(out / "grid.csv"));

    ExperimentConfig stall = bumps_config();
    stall.synthetic.offset = -10.0;
    stall.synthetic.bumps.clear();
    fs::create_directories(out);
    std::ofstream(out / "stall.json") << config_to_json(stall);
    CHECK(run_cli("tune --config " + (out / "stall.json").string() + " " + common) == 2);

    CHECK(run_cli("tune --config /nonexistent.json") != 0);
    std::ofstream(out / "bad.json") << R"({"schema_version": 7})";
    CHECK(run_cli("tune --config " + (out / "bad.json").string() + " " + common) == 1);
    CHECK(run_cli("compare --config " + (kConfigs / "quadrotor.json").string() + " --iterations 0 " + common) == 0);
    CHECK(fs::exists(out / "compare.json"));
}
