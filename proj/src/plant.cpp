#include "safetune/plant.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>

#include "safetune/format.hpp"
#include "safetune/rng.hpp"

namespace safetune::plant {

void PlantConfig::validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("plant: dt must be positive");
    if (horizon_steps < 1) throw std::invalid_argument("plant: horizon_steps must be at least 1");
    if (!(input_saturation > 0.0)) throw std::invalid_argument("plant: input_saturation must be positive");
    if (!(attitude_natural_freq > 0.0)) throw std::invalid_argument("plant: attitude_natural_freq must be positive");
    if (!(attitude_damping >= 0.0)) throw std::invalid_argument("plant: attitude_damping must be nonnegative");
    if (!(R >= 0.0)) throw std::invalid_argument("plant: R must be nonnegative");
    if (!(eval_noise_std >= 0.0)) throw std::invalid_argument("plant: eval_noise_std must be nonnegative");
    if (!Q.allFinite() || (Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw std::invalid_argument("plant: Q must be finite and symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(Q, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10) {
        throw std::invalid_argument("plant: Q must be positive semi-definite");
    }
}

Trace simulate(const ControllerGains& gains, const PlantConfig& cfg) {
    cfg.validate();
    const int n = cfg.horizon_steps;
    const double wn = cfg.attitude_natural_freq;
    const double zeta = cfg.attitude_damping;

    Trace trace;
    trace.dt = cfg.dt;
    trace.states.resize(n + 1, 4);
    trace.inputs.resize(n);

    Eigen::Vector4d s(-cfg.reference_amplitude, 0.0, 0.0, 0.0);
    trace.states.row(0) = s.transpose();
    for (int k = 0; k < n; ++k) {
        const double u = std::clamp(gains.k1 * s[0] + gains.k2 * s[1], -cfg.input_saturation, cfg.input_saturation);
        trace.inputs[k] = u;

        Eigen::Vector4d next;
        next[0] = s[0] + cfg.dt * s[1];
        next[1] = s[1] + cfg.dt * cfg.gravity * s[2];
        next[2] = s[2] + cfg.dt * s[3];
        next[3] = s[3] + cfg.dt * (wn * wn * (u - s[2]) - 2.0 * zeta * wn * s[3]);

        for (int i = 0; i < 4; ++i) {
            if (!std::isfinite(next[i]) || std::abs(next[i]) > kStateClamp) {
                trace.diverged = true;
                next[i] = std::signbit(next[i]) ? -kStateClamp : kStateClamp;
            }
        }
        s = next;
        trace.states.row(k + 1) = s.transpose();
    }
    return trace;
}

double cost(const Trace& trace, const PlantConfig& cfg) {
    if (trace.diverged) {
        return kCostFloor;
    }
    double sum = 0.0;
    for (Eigen::Index k = 0; k < trace.states.rows(); ++k) {
        const Eigen::Vector4d x = trace.states.row(k).transpose();
        sum += x.dot(cfg.Q * x);
    }
    sum += cfg.R * trace.inputs.squaredNorm();
    return std::max(-sum, kCostFloor);
}

double performance(double cost_a, double cost_seed, double multiplier) { return cost_a - multiplier * cost_seed; }

CostReport assess(const ControllerGains& gains, const PlantConfig& cfg, double seed_cost) {
    const Trace trace = simulate(gains, cfg);
    CostReport report;
    report.cost = cost(trace, cfg);
    report.performance = performance(report.cost, seed_cost, cfg.perf_multiplier);
    report.diverged = trace.diverged;
    return report;
}

double evaluate(const ControllerGains& gains, const PlantConfig& cfg, double seed_cost, std::uint64_t rng_seed) {
    const double value = assess(gains, cfg, seed_cost).performance;
    if (cfg.eval_noise_std == 0.0) {
        return value;
    }
    Engine engine = make_engine(rng_seed, Stream::plant_noise);
    std::normal_distribution<double> noise(0.0, cfg.eval_noise_std);
    return value + noise(engine);
}

void write_trace_csv(const Trace& trace, std::ostream& out) {
    out << "k,t,x_err,xdot,phi,omega,u\n";
    for (Eigen::Index k = 0; k < trace.states.rows(); ++k) {
        out << k << ',' << format_double(static_cast<double>(k) * trace.dt);
        for (int i = 0; i < 4; ++i) {
            out << ',' << format_double(trace.states(k, i));
        }
        out << ',';
        if (k < trace.inputs.size()) {
            out << format_double(trace.inputs[k]);
        }
        out << '\n';
    }
}

}  // namespace safetune::plant
