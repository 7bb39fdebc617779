#include "safetune/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "safetune/errors.hpp"
#include "safetune/grid_export.hpp"
#include "safetune/rng.hpp"

namespace safetune::harness {

using json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------- config io

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const char* k : known) {
            ok = ok || key == k;
        }
        if (!ok) {
            throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (obj.contains(key) && !obj.at(key).is_null()) {
        out = obj.at(key).get<T>();
    }
}

template <typename T>
void read(const json& obj, const char* key, std::optional<T>& out) {
    if (obj.contains(key)) {
        out = obj.at(key).is_null() ? std::nullopt : std::optional<T>(obj.at(key).get<T>());
    }
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json point_json(const Point& p) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        arr.push_back(p[i]);
    }
    return arr;
}

void parse_plant(const json& j, plant::PlantConfig& p, std::optional<double>& noise_fraction) {
    reject_unknown(j,
                   {"dt", "horizon_steps", "gravity", "attitude_natural_freq", "attitude_damping",
                    "input_saturation", "reference_amplitude", "Q", "R", "perf_multiplier", "eval_noise_std",
                    "eval_noise_fraction"},
                   "plant");
    read(j, "dt", p.dt);
    read(j, "horizon_steps", p.horizon_steps);
    read(j, "gravity", p.gravity);
    read(j, "attitude_natural_freq", p.attitude_natural_freq);
    read(j, "attitude_damping", p.attitude_damping);
    read(j, "input_saturation", p.input_saturation);
    read(j, "reference_amplitude", p.reference_amplitude);
    read(j, "R", p.R);
    read(j, "perf_multiplier", p.perf_multiplier);
    read(j, "eval_noise_std", p.eval_noise_std);
    read(j, "eval_noise_fraction", noise_fraction);
    if (j.contains("Q")) {
        const json& q = j.at("Q");
        if (q.size() != 4) {
            throw std::invalid_argument("config: plant.Q must have 4 rows (or 4 diagonal entries)");
        }
        p.Q.setZero();
        for (int r = 0; r < 4; ++r) {
            if (q.at(static_cast<std::size_t>(r)).is_number()) {
                p.Q(r, r) = q.at(static_cast<std::size_t>(r)).get<double>();
            } else {
                const auto row = q.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
                if (row.size() != 4) {
                    throw std::invalid_argument("config: plant.Q rows must have 4 entries");
                }
                for (int c = 0; c < 4; ++c) {
                    p.Q(r, c) = row[static_cast<std::size_t>(c)];
                }
            }
        }
    }
}

json plant_json(const plant::PlantConfig& p, const std::optional<double>& noise_fraction) {
    json q = json::array();
    for (int r = 0; r < 4; ++r) {
        q.push_back(std::vector<double>{p.Q(r, 0), p.Q(r, 1), p.Q(r, 2), p.Q(r, 3)});
    }
    json j;
    j["dt"] = p.dt;
    j["horizon_steps"] = p.horizon_steps;
    j["gravity"] = p.gravity;
    j["attitude_natural_freq"] = p.attitude_natural_freq;
    j["attitude_damping"] = p.attitude_damping;
    j["input_saturation"] = p.input_saturation;
    j["reference_amplitude"] = p.reference_amplitude;
    j["Q"] = q;
    j["R"] = p.R;
    j["perf_multiplier"] = p.perf_multiplier;
    j["eval_noise_std"] = p.eval_noise_std;
    j["eval_noise_fraction"] = optional_json(noise_fraction);
    return j;
}

ExperimentConfig parse_config_json(const json& root) {
    reject_unknown(root,
                   {"schema_version", "mode", "domain", "seed_point", "kernel", "safeopt", "plant", "synthetic",
                    "rng_seed", "output_dir", "record_timing"},
                   "top level");
    ExperimentConfig c;
    read(root, "schema_version", c.schema_version);
    if (c.schema_version != kSchemaVersion) {
        throw std::invalid_argument("config: unsupported schema_version " + std::to_string(c.schema_version));
    }
    if (root.contains("mode")) {
        c.mode = parse_mode(root.at("mode").get<std::string>());
    }
    if (root.contains("domain")) {
        const json& d = root.at("domain");
        reject_unknown(d, {"axes"}, "domain");
        c.axes.clear();
        for (const json& a : d.at("axes")) {
            reject_unknown(a, {"lower", "upper", "count"}, "domain.axes");
            c.axes.push_back({a.at("lower").get<double>(), a.at("upper").get<double>(), a.at("count").get<std::size_t>()});
        }
    }
    if (root.contains("seed_point")) {
        c.seed_point = root.at("seed_point").is_null()
                           ? std::nullopt
                           : std::optional<std::vector<double>>(root.at("seed_point").get<std::vector<double>>());
    }
    if (root.contains("kernel")) {
        const json& k = root.at("kernel");
        reject_unknown(k, {"length_scales", "prior_std_fraction", "noise_std_fraction", "prior_std", "noise_std"},
                       "kernel");
        read(k, "length_scales", c.kernel.length_scales);
        read(k, "prior_std_fraction", c.kernel.prior_std_fraction);
        read(k, "noise_std_fraction", c.kernel.noise_std_fraction);
        read(k, "prior_std", c.kernel.prior_std);
        read(k, "noise_std", c.kernel.noise_std);
    }
    if (root.contains("safeopt")) {
        const json& s = root.at("safeopt");
        reject_unknown(s, {"beta", "j_min", "stop_epsilon", "max_iterations"}, "safeopt");
        read(s, "beta", c.safeopt.beta);
        read(s, "j_min", c.safeopt.j_min);
        read(s, "stop_epsilon", c.safeopt.stop_epsilon);
        read(s, "max_iterations", c.safeopt.max_iterations);
    }
    if (root.contains("plant")) {
        parse_plant(root.at("plant"), c.plant, c.eval_noise_fraction);
    }
    if (root.contains("synthetic")) {
        const json& s = root.at("synthetic");
        reject_unknown(s, {"objective", "offset", "bumps", "seed_margin_stds"}, "synthetic");
        read(s, "objective", c.synthetic.objective);
        read(s, "offset", c.synthetic.offset);
        read(s, "seed_margin_stds", c.synthetic.seed_margin_stds);
        if (s.contains("bumps")) {
            for (const json& b : s.at("bumps")) {
                reject_unknown(b, {"center", "height", "width"}, "synthetic.bumps");
                c.synthetic.bumps.push_back(
                    {b.at("center").get<std::vector<double>>(), b.at("height").get<double>(), b.at("width").get<double>()});
            }
        }
    }
    read(root, "rng_seed", c.rng_seed);
    read(root, "output_dir", c.output_dir);
    read(root, "record_timing", c.record_timing);
    c.validate();
    return c;
}

json config_json(const ExperimentConfig& c) {
    json root;
    root["schema_version"] = c.schema_version;
    root["mode"] = to_string(c.mode);
    json axes = json::array();
    for (const Axis& a : c.axes) {
        axes.push_back({{"lower", a.lower}, {"upper", a.upper}, {"count", a.count}});
    }
    root["domain"] = {{"axes", axes}};
    root["seed_point"] = c.seed_point ? json(*c.seed_point) : json(nullptr);
    root["kernel"] = {{"length_scales", c.kernel.length_scales},
                      {"prior_std_fraction", c.kernel.prior_std_fraction},
                      {"noise_std_fraction", c.kernel.noise_std_fraction},
                      {"prior_std", optional_json(c.kernel.prior_std)},
                      {"noise_std", optional_json(c.kernel.noise_std)}};
    root["safeopt"] = {{"beta", c.safeopt.beta},
                       {"j_min", c.safeopt.j_min},
                       {"stop_epsilon", c.safeopt.stop_epsilon},
                       {"max_iterations", c.safeopt.max_iterations}};
    root["plant"] = plant_json(c.plant, c.eval_noise_fraction);
    json bumps = json::array();
    for (const Bump& b : c.synthetic.bumps) {
        bumps.push_back({{"center", b.center}, {"height", b.height}, {"width", b.width}});
    }
    root["synthetic"] = {{"objective", c.synthetic.objective},
                         {"offset", c.synthetic.offset},
                         {"bumps", bumps},
                         {"seed_margin_stds", c.synthetic.seed_margin_stds}};
    root["rng_seed"] = c.rng_seed;
    root["output_dir"] = c.output_dir;
    root["record_timing"] = c.record_timing;
    return root;
}

// ---------------------------------------------------------------- problems

std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index) {
    Engine engine = make_engine(seed, stream, index);
    return engine();
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::size_t snap_seed(const Domain& domain, const std::vector<double>& seed, bool& snapped) {
    if (seed.size() != domain.dim()) {
        throw std::invalid_argument("config: seed_point dimension does not match the domain");
    }
    const Point p = to_vector(seed);
    const std::size_t index = domain.nearest_index(p);
    snapped = (domain.point(index) - p).cwiseAbs().maxCoeff() > 1e-12;
    if (snapped) {
        std::cerr << "warning: seed point is not on the grid; snapped to grid index " << index << " ("
                  << domain.point(index).transpose() << ")\n";
    }
    return index;
}

gp::KernelParams absolute_kernel(const KernelSettings& k, double scale) {
    gp::KernelParams params;
    params.length_scales = to_vector(k.length_scales);
    const double prior_std = k.prior_std ? *k.prior_std : k.prior_std_fraction * scale;
    const double noise_std = k.noise_std ? *k.noise_std : k.noise_std_fraction * scale;
    params.prior_variance = prior_std * prior_std;
    params.noise_variance = noise_std * noise_std;
    params.validate();
    return params;
}

gp::KernelParams synthetic_kernel(const ExperimentConfig& config) {
    if (!config.kernel.prior_std || !config.kernel.noise_std) {
        throw std::invalid_argument("config: synthetic mode requires absolute kernel.prior_std and kernel.noise_std");
    }
    return absolute_kernel(config.kernel, 1.0);
}

std::function<double(std::size_t, std::size_t)> gaussian_measurement(Eigen::VectorXd truth, double noise_std,
                                                                     std::uint64_t seed) {
    return [truth = std::move(truth), noise_std, seed](std::size_t index, std::size_t evaluation) {
        const double value = truth[static_cast<Eigen::Index>(index)];
        if (noise_std == 0.0) {
            return value;
        }
        Engine engine = make_engine(seed, Stream::synthetic_noise, evaluation);
        std::normal_distribution<double> noise(0.0, noise_std);
        return value + noise(engine);
    };
}

Problem quadrotor_problem(const ExperimentConfig& config) {
    Domain domain(config.axes);
    if (domain.dim() != 2) {
        throw std::invalid_argument("config: the quadrotor problem needs a two-dimensional domain (k1, k2)");
    }
    if (!config.seed_point) {
        throw std::invalid_argument("config: seed_point is required for the quadrotor problem");
    }
    Problem p{domain, {}, 0, false, {}, {}, {}, {}};
    p.seed_index = snap_seed(domain, *config.seed_point, p.seed_snapped);

    plant::PlantConfig cfg = config.plant;
    const Point seed = domain.point(p.seed_index);
    const double seed_cost = plant::cost(plant::simulate({seed[0], seed[1]}, cfg), cfg);
    const double scale = std::abs(seed_cost);
    if (config.eval_noise_fraction) {
        cfg.eval_noise_std = *config.eval_noise_fraction * scale;
    }
    p.kernel = absolute_kernel(config.kernel, scale);
    p.seed_cost = seed_cost;
    p.plant = cfg;

    p.truth.resize(static_cast<Eigen::Index>(domain.size()));
    for (std::size_t i = 0; i < domain.size(); ++i) {
        const Point g = domain.point(i);
        p.truth[static_cast<Eigen::Index>(i)] = plant::assess({g[0], g[1]}, cfg, seed_cost).performance;
    }
    const std::uint64_t rng_seed = config.rng_seed;
    p.measure = [domain, cfg, seed_cost, rng_seed](std::size_t index, std::size_t evaluation) {
        const Point g = domain.point(index);
        return plant::evaluate({g[0], g[1]}, cfg, seed_cost, derive_seed(rng_seed, Stream::plant_noise, evaluation));
    };
    return p;
}

Problem bumps_problem(const ExperimentConfig& config) {
    Domain domain(config.axes);
    if (!config.seed_point) {
        throw std::invalid_argument("config: seed_point is required for the bumps objective");
    }
    Problem p{domain, synthetic_kernel(config), 0, false, {}, {}, {}, {}};
    p.seed_index = snap_seed(domain, *config.seed_point, p.seed_snapped);
    p.truth = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(domain.size()), config.synthetic.offset);
    for (const Bump& b : config.synthetic.bumps) {
        if (b.center.size() != domain.dim() || !(b.width > 0.0)) {
            throw std::invalid_argument("config: bump center dimension or width is invalid");
        }
        const Eigen::RowVectorXd c = to_vector(b.center).transpose();
        for (std::size_t i = 0; i < domain.size(); ++i) {
            const double d2 = (domain.grid().row(static_cast<Eigen::Index>(i)) - c).squaredNorm();
            p.truth[static_cast<Eigen::Index>(i)] += b.height * std::exp(-0.5 * d2 / (b.width * b.width));
        }
    }
    p.measure = gaussian_measurement(p.truth, std::sqrt(p.kernel.noise_variance), config.rng_seed);
    return p;
}

// ---------------------------------------------------------------- runs

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

IterationRecord seed_record(const Problem& problem, double measured) {
    IterationRecord r;
    r.iteration = 0;
    r.index = problem.seed_index;
    r.point = problem.domain.point(problem.seed_index);
    r.measured = measured;
    r.truth = problem.truth[static_cast<Eigen::Index>(problem.seed_index)];
    r.recommendation = problem.seed_index;
    r.recommendation_truth = r.truth;
    return r;
}

std::size_t count_unsafe(const std::vector<IterationRecord>& log, double j_min) {
    std::size_t n = 0;
    for (const IterationRecord& r : log) {
        if (r.iteration > 0 && r.truth && *r.truth < j_min) {
            ++n;
        }
    }
    return n;
}

opt::SafeOptConfig safeopt_config(const ExperimentConfig& config) { return config.safeopt; }

std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    }
    return out;
}

void write_log(const std::vector<IterationRecord>& log, const std::filesystem::path& path) {
    std::ofstream out = open_output(path);
    for (const IterationRecord& r : log) {
        out << record_to_json(r) << '\n';
    }
    if (!out) {
        throw std::runtime_error("failed writing '" + path.string() + "'");
    }
}

void write_text(const std::string& text, const std::filesystem::path& path) {
    std::ofstream out = open_output(path);
    out << text << '\n';
    if (!out) {
        throw std::runtime_error("failed writing '" + path.string() + "'");
    }
}

json kernel_json(const gp::KernelParams& k) {
    std::vector<double> l(k.length_scales.data(), k.length_scales.data() + k.length_scales.size());
    return {{"prior_variance", k.prior_variance}, {"noise_variance", k.noise_variance}, {"length_scales", l}};
}

json report_json(const AlgorithmReport& r) {
    return {{"status", to_string(r.status)},
            {"evaluations", r.log.empty() ? 0 : r.log.size() - 1},
            {"unsafe_evaluations", r.unsafe_evaluations},
            {"first_unsafe_iteration", r.first_unsafe_iteration ? json(*r.first_unsafe_iteration) : json(nullptr)}};
}

AlgorithmReport make_report(const RunResult& run, double j_min) {
    AlgorithmReport rep;
    rep.log = run.log;
    rep.status = run.status;
    rep.unsafe_evaluations = run.unsafe_evaluations;
    for (const IterationRecord& r : run.log) {
        if (r.iteration > 0 && r.truth && *r.truth < j_min) {
            rep.first_unsafe_iteration = r.iteration;
            break;
        }
    }
    return rep;
}

}  // namespace

std::string to_string(Mode mode) {
    switch (mode) {
        case Mode::quadrotor: return "quadrotor";
        case Mode::synthetic: return "synthetic";
        case Mode::baseline_ucb: return "baseline-ucb";
    }
    return "unknown";
}

Mode parse_mode(const std::string& text) {
    if (text == "quadrotor") return Mode::quadrotor;
    if (text == "synthetic") return Mode::synthetic;
    if (text == "baseline-ucb") return Mode::baseline_ucb;
    throw std::invalid_argument("config: unknown mode '" + text + "'");
}

std::string to_string(RunStatus status) {
    switch (status) {
        case RunStatus::max_iterations: return "max_iterations";
        case RunStatus::converged: return "converged";
        case RunStatus::stalled: return "stalled";
    }
    return "unknown";
}

void ExperimentConfig::validate() const {
    if (axes.empty()) {
        throw std::invalid_argument("config: domain needs at least one axis");
    }
    if (kernel.length_scales.size() != axes.size()) {
        throw std::invalid_argument("config: kernel.length_scales must have one entry per domain axis");
    }
    if (!(kernel.prior_std_fraction > 0.0) || !(kernel.noise_std_fraction >= 0.0)) {
        throw std::invalid_argument("config: kernel std fractions must be positive (prior) and nonnegative (noise)");
    }
    if (synthetic.objective != "gp-sample" && synthetic.objective != "bumps") {
        throw std::invalid_argument("config: synthetic.objective must be 'gp-sample' or 'bumps'");
    }
    if (eval_noise_fraction && !(*eval_noise_fraction >= 0.0)) {
        throw std::invalid_argument("config: plant.eval_noise_fraction must be nonnegative");
    }
    safeopt.validate();
    plant.validate();
}

ExperimentConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    try {
        return parse_config_json(root);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read config '" + path.string() + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string config_to_json(const ExperimentConfig& config) { return config_json(config).dump(2); }

std::string record_to_json(const IterationRecord& r) {
    json j;
    j["iteration"] = r.iteration;
    j["index"] = r.index;
    j["point"] = point_json(r.point);
    j["measured"] = r.measured;
    j["truth"] = optional_json(r.truth);
    j["safe_count"] = r.safe_count;
    j["maximizer_count"] = r.maximizer_count;
    j["expander_count"] = r.expander_count;
    j["expanders_checked"] = r.expanders_checked;
    j["safe_lost"] = r.safe_lost;
    j["width"] = r.width;
    j["lower_at_selection"] = r.lower_at_selection;
    j["expander_choice"] = r.expander_choice;
    j["recommendation"] = r.recommendation;
    j["recommendation_truth"] = optional_json(r.recommendation_truth);
    if (r.wall_ms) {
        j["wall_ms"] = *r.wall_ms;
    }
    return j.dump();
}

Problem make_problem(const ExperimentConfig& config) {
    config.validate();
    if (config.mode == Mode::synthetic) {
        if (config.synthetic.objective == "bumps") {
            return bumps_problem(config);
        }
        for (std::uint64_t attempt = 0; attempt < 1000; ++attempt) {
            auto p = make_gp_sample_problem(config, derive_seed(config.rng_seed, Stream::synthetic_draw, attempt));
            if (p) {
                return std::move(*p);
            }
        }
        throw std::runtime_error("no admissible seed found in 1000 GP draws");
    }
    return quadrotor_problem(config);
}

std::optional<Problem> make_gp_sample_problem(const ExperimentConfig& config, std::uint64_t draw_seed) {
    Domain domain(config.axes);
    Problem p{domain, synthetic_kernel(config), 0, false, {}, {}, {}, {}};
    p.truth = gp::sample_prior(domain.grid(), p.kernel, draw_seed);
    const double threshold = config.safeopt.j_min + config.synthetic.seed_margin_stds * std::sqrt(p.kernel.prior_variance);

    if (config.seed_point) {
        p.seed_index = snap_seed(domain, *config.seed_point, p.seed_snapped);
        if (p.truth[static_cast<Eigen::Index>(p.seed_index)] < threshold) {
            return std::nullopt;
        }
    } else {
        std::vector<std::size_t> admissible;
        for (std::size_t i = 0; i < domain.size(); ++i) {
            if (p.truth[static_cast<Eigen::Index>(i)] >= threshold) {
                admissible.push_back(i);
            }
        }
        if (admissible.empty()) {
            return std::nullopt;
        }
        Engine engine = make_engine(draw_seed, Stream::seed_choice);
        std::uniform_int_distribution<std::size_t> pick(0, admissible.size() - 1);
        p.seed_index = admissible[pick(engine)];
    }
    p.measure = gaussian_measurement(p.truth, std::sqrt(p.kernel.noise_variance), draw_seed);
    return p;
}

RunResult run_safeopt(Problem input, const ExperimentConfig& config) {
    RunResult result{RunStatus::max_iterations, {}, {}, nullptr, std::move(input), 0, 0};
    const Problem& problem = result.problem;
    const double j_min = config.safeopt.j_min;
    auto start = std::chrono::steady_clock::now();

    const double seed_value = problem.measure(problem.seed_index, 0);
    result.state = std::make_unique<opt::SafeOpt>(problem.domain, problem.kernel, safeopt_config(config),
                                                  problem.seed_index, seed_value);
    opt::SafeOpt& state = *result.state;
    result.log.push_back(seed_record(problem, seed_value));
    if (config.record_timing) {
        result.log.back().wall_ms = elapsed_ms(start);
    }

    Mask previous_safe = state.seed_mask();
    for (;;) {
        if (state.history().size() >= config.safeopt.max_iterations) {
            result.status = RunStatus::max_iterations;
            break;
        }
        start = std::chrono::steady_clock::now();
        opt::Selection sel;
        try {
            sel = state.select_next();
        } catch (const AlgorithmStalled& e) {
            result.status = RunStatus::stalled;
            result.message = e.what();
            break;
        }
        if (sel.width < config.safeopt.stop_epsilon) {
            result.status = RunStatus::converged;
            break;
        }
        const std::size_t n = state.iteration();
        const double value = problem.measure(sel.index, n);
        state.commit(sel, value);

        IterationRecord r;
        r.iteration = n;
        r.index = sel.index;
        r.point = problem.domain.point(sel.index);
        r.measured = value;
        r.truth = problem.truth[static_cast<Eigen::Index>(sel.index)];
        r.safe_count = sel.sets.safe_count();
        r.maximizer_count = sel.sets.maximizer_count();
        r.expander_count = sel.sets.expander_count();
        r.expanders_checked = sel.sets.resolved_expander_count;
        r.safe_lost = static_cast<std::size_t>((previous_safe && !sel.sets.safe).count());
        r.width = sel.width;
        r.lower_at_selection = sel.bounds.lower[static_cast<Eigen::Index>(sel.index)];
        r.expander_choice = sel.expander;
        r.recommendation = state.recommend();
        r.recommendation_truth = problem.truth[static_cast<Eigen::Index>(r.recommendation)];
        if (config.record_timing) {
            r.wall_ms = elapsed_ms(start);
        }
        previous_safe = sel.sets.safe;
        result.log.push_back(std::move(r));
    }

    result.recommendation = state.recommend();
    result.unsafe_evaluations = count_unsafe(result.log, j_min);
    return result;
}

RunResult run_ucb(Problem input, const ExperimentConfig& config) {
    RunResult result{RunStatus::max_iterations, {}, {}, nullptr, std::move(input), 0, 0};
    const Problem& problem = result.problem;
    auto start = std::chrono::steady_clock::now();
    const double seed_value = problem.measure(problem.seed_index, 0);
    result.state = std::make_unique<opt::SafeOpt>(problem.domain, problem.kernel, safeopt_config(config),
                                                  problem.seed_index, seed_value);
    opt::SafeOpt& state = *result.state;
    result.log.push_back(seed_record(problem, seed_value));
    if (config.record_timing) {
        result.log.back().wall_ms = elapsed_ms(start);
    }

    while (state.history().size() < config.safeopt.max_iterations) {
        start = std::chrono::steady_clock::now();
        const opt::ConfidenceBounds bounds = state.bounds();
        const Mask safe = state.safe_set(bounds);
        const std::size_t index = opt::ucb_select(bounds);
        const auto k = static_cast<Eigen::Index>(index);
        const std::size_t n = state.iteration();
        const double value = problem.measure(index, n);
        state.observe(index, value);

        IterationRecord r;
        r.iteration = n;
        r.index = index;
        r.point = problem.domain.point(index);
        r.measured = value;
        r.truth = problem.truth[k];
        r.safe_count = static_cast<std::size_t>(safe.count());
        r.maximizer_count = static_cast<std::size_t>(opt::maximizer_set(bounds, safe).count());
        r.width = bounds.upper[k] - bounds.lower[k];
        r.lower_at_selection = bounds.lower[k];
        r.recommendation = state.recommend();
        r.recommendation_truth = problem.truth[static_cast<Eigen::Index>(r.recommendation)];
        if (config.record_timing) {
            r.wall_ms = elapsed_ms(start);
        }
        result.log.push_back(std::move(r));
    }
    result.status = RunStatus::max_iterations;
    result.recommendation = state.recommend();
    result.unsafe_evaluations = count_unsafe(result.log, config.safeopt.j_min);
    return result;
}

RunResult run_tuning(const ExperimentConfig& config, bool write) {
    Problem problem = make_problem(config);
    RunResult result = config.mode == Mode::baseline_ucb ? run_ucb(std::move(problem), config)
                                                          : run_safeopt(std::move(problem), config);
    if (write) {
        write_run_outputs(result, config, config.output_dir);
    }
    return result;
}

SafetyStats run_synthetic_safety(const ExperimentConfig& config, std::size_t n_runs, bool write) {
    if (config.mode != Mode::synthetic || config.synthetic.objective != "gp-sample") {
        throw std::invalid_argument("validate-safety requires synthetic mode with the gp-sample objective");
    }
    config.validate();
    SafetyStats stats;
    stats.runs = n_runs;
    const double j_min = config.safeopt.j_min;
    for (std::size_t run = 0; run < n_runs; ++run) {
        SafetyRun info;
        std::optional<Problem> problem;
        while (!problem) {
            if (info.draw_attempts >= 1000) {
                throw std::runtime_error("validate-safety: no admissible seed in 1000 draws");
            }
            const std::uint64_t draw = derive_seed(config.rng_seed, Stream::synthetic_draw,
                                                   (static_cast<std::uint64_t>(run) << 16) + info.draw_attempts);
            ++info.draw_attempts;
            problem = make_gp_sample_problem(config, draw);
        }
        stats.resampled_draws += info.draw_attempts - 1;
        info.seed_index = problem->seed_index;

        const RunResult result = run_safeopt(std::move(*problem), config);
        info.status = result.status;
        for (const IterationRecord& r : result.log) {
            if (r.iteration == 0) continue;
            ++info.evaluations;
            if (*r.truth < j_min) {
                ++info.violations;
                info.worst_violation = std::max(info.worst_violation, j_min - *r.truth);
            }
        }
        stats.total_evaluations += info.evaluations;
        stats.violations += info.violations;
        stats.per_run.push_back(info);
    }
    stats.violation_fraction =
        stats.total_evaluations > 0 ? static_cast<double>(stats.violations) / static_cast<double>(stats.total_evaluations) : 0.0;

    if (write) {
        std::filesystem::create_directories(config.output_dir);
        json runs = json::array();
        for (const SafetyRun& r : stats.per_run) {
            runs.push_back({{"draw_attempts", r.draw_attempts},
                            {"seed_index", r.seed_index},
                            {"evaluations", r.evaluations},
                            {"violations", r.violations},
                            {"worst_violation", r.worst_violation},
                            {"status", to_string(r.status)}});
        }
        json j;
        j["runs"] = stats.runs;
        j["beta"] = config.safeopt.beta;
        j["iterations_per_run"] = config.safeopt.max_iterations;
        j["resampled_draws"] = stats.resampled_draws;
        j["total_evaluations"] = stats.total_evaluations;
        j["violations"] = stats.violations;
        j["violation_fraction"] = stats.violation_fraction;
        j["per_run"] = runs;
        write_text(j.dump(2), std::filesystem::path(config.output_dir) / "safety.json");
    }
    return stats;
}

Comparison compare_baseline(const ExperimentConfig& config, bool write) {
    if (config.mode == Mode::synthetic && config.synthetic.objective == "gp-sample") {
        throw std::invalid_argument("compare requires the quadrotor problem or a bumps objective");
    }
    const Problem problem = make_problem(config);
    const RunResult ucb = run_ucb(problem, config);
    const RunResult safe = run_safeopt(problem, config);

    Comparison cmp;
    cmp.ucb = make_report(ucb, config.safeopt.j_min);
    cmp.safeopt = make_report(safe, config.safeopt.j_min);
    if (write) {
        const std::filesystem::path dir = config.output_dir;
        std::filesystem::create_directories(dir);
        write_log(ucb.log, dir / "ucb_log.jsonl");
        write_log(safe.log, dir / "safeopt_log.jsonl");
        json j;
        j["j_min"] = config.safeopt.j_min;
        j["iterations"] = config.safeopt.max_iterations;
        j["ucb"] = report_json(cmp.ucb);
        j["safeopt"] = report_json(cmp.safeopt);
        write_text(j.dump(2), dir / "compare.json");
    }
    return cmp;
}

void write_run_outputs(const RunResult& result, const ExperimentConfig& config, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const Problem& problem = result.problem;
    const opt::SafeOpt& state = *result.state;

    write_log(result.log, dir / "run_log.jsonl");
    {
        std::ofstream out = open_output(dir / "grid.csv");
        write_grid_csv(export_grid(state, problem.truth), out);
    }

    json observations = json::array();
    for (const opt::Observation& o : state.history()) {
        observations.push_back({{"index", o.index}, {"value", o.value}});
    }
    std::vector<double> truth(problem.truth.data(), problem.truth.data() + problem.truth.size());
    json saved;
    saved["schema_version"] = kSchemaVersion;
    saved["config"] = config_json(config);
    saved["kernel"] = kernel_json(problem.kernel);
    saved["seed_index"] = problem.seed_index;
    saved["seed_value"] = result.log.front().measured;
    saved["observations"] = observations;
    saved["truth"] = truth;
    write_text(saved.dump(), dir / "state.json");

    const auto seed = static_cast<Eigen::Index>(problem.seed_index);
    const auto rec = static_cast<Eigen::Index>(result.recommendation);
    json summary;
    summary["mode"] = to_string(config.mode);
    summary["status"] = to_string(result.status);
    summary["message"] = result.message;
    summary["evaluations"] = state.history().size();
    summary["seed"] = {{"index", problem.seed_index},
                       {"point", point_json(problem.domain.point(problem.seed_index))},
                       {"snapped", problem.seed_snapped},
                       {"measured", result.log.front().measured},
                       {"truth", problem.truth[seed]}};
    summary["recommendation"] = {{"index", result.recommendation},
                                 {"point", point_json(problem.domain.point(result.recommendation))},
                                 {"truth", problem.truth[rec]}};
    summary["unsafe_evaluations"] = result.unsafe_evaluations;
    summary["kernel"] = kernel_json(problem.kernel);

    if (problem.plant && problem.seed_cost) {
        const plant::PlantConfig& cfg = *problem.plant;
        const Point a0 = problem.domain.point(problem.seed_index);
        const Point ar = problem.domain.point(result.recommendation);
        const plant::Trace seed_trace = plant::simulate({a0[0], a0[1]}, cfg);
        const plant::Trace rec_trace = plant::simulate({ar[0], ar[1]}, cfg);
        const double rec_cost = plant::cost(rec_trace, cfg);
        summary["seed"]["cost"] = *problem.seed_cost;
        summary["recommendation"]["cost"] = rec_cost;
        summary["cost_improvement"] = 1.0 - rec_cost / *problem.seed_cost;
        summary["eval_noise_std"] = cfg.eval_noise_std;
        std::ofstream st = open_output(dir / "seed_trace.csv");
        plant::write_trace_csv(seed_trace, st);
        std::ofstream rt = open_output(dir / "recommendation_trace.csv");
        plant::write_trace_csv(rec_trace, rt);
    }
    write_text(summary.dump(2), dir / "summary.json");
}

SavedState load_state(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read state '" + path.string() + "'");
    }
    json saved;
    try {
        saved = json::parse(in);
        if (saved.at("schema_version").get<int>() != kSchemaVersion) {
            throw std::invalid_argument("state: unsupported schema_version");
        }
        const ExperimentConfig config = parse_config_json(saved.at("config"));
        const json& k = saved.at("kernel");
        gp::KernelParams params;
        params.prior_variance = k.at("prior_variance").get<double>();
        params.noise_variance = k.at("noise_variance").get<double>();
        params.length_scales = to_vector(k.at("length_scales").get<std::vector<double>>());

        SavedState out;
        out.state = std::make_unique<opt::SafeOpt>(Domain(config.axes), params, safeopt_config(config),
                                                   saved.at("seed_index").get<std::size_t>(),
                                                   saved.at("seed_value").get<double>());
        for (const json& o : saved.at("observations")) {
            out.state->observe(o.at("index").get<std::size_t>(), o.at("value").get<double>());
        }
        if (saved.contains("truth") && !saved.at("truth").empty()) {
            out.truth = to_vector(saved.at("truth").get<std::vector<double>>());
        }
        return out;
    } catch (const json::exception& e) {
        throw std::invalid_argument("state '" + path.string() + "': " + e.what());
    }
}

}  // namespace safetune::harness
