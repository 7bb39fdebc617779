#pragma once

#include <cstdint>
#include <iosfwd>

#include <Eigen/Dense>

namespace safetune::plant {

/**
 * Surrogate of a quadrotor's position loop along one axis.
 *
 * State (x - r, x_dot, phi, omega). The commanded pitch u is tracked by a
 * second-order attitude loop, phi_ddot = wn^2 (u - phi) - 2 zeta wn phi_dot,
 * and pitch accelerates the vehicle, x_ddot = g phi. Integrated with forward
 * Euler. The default attitude constants make the seed gains (-0.4, -0.4)
 * stable but lightly damped, and slightly larger position gains unstable.
 */
struct PlantConfig {
    double dt = 1.0 / 70.0;
    int horizon_steps = 350;
    double gravity = 9.81;
    double attitude_natural_freq = 8.0;
    double attitude_damping = 0.25;
    double input_saturation = 0.35;
    double reference_amplitude = 1.0;
    Eigen::Matrix4d Q = Eigen::Vector4d(1.0, 0.1, 0.1, 0.01).asDiagonal();
    double R = 0.1;
    /// Multiplier on the seed cost in the performance measure.
    double perf_multiplier = 1.05;
    /// Standard deviation of the additive evaluation noise (performance units).
    double eval_noise_std = 0.0;

    /// Throws std::invalid_argument on out-of-range fields.
    void validate() const;
};

/// Linear state feedback u = k1 (x - r) + k2 x_dot.
struct ControllerGains {
    double k1 = 0.0;
    double k2 = 0.0;
};

/// States are clamped to +-kStateClamp once the rollout diverges.
inline constexpr double kStateClamp = 1e6;
/// Cost assigned to diverged rollouts.
inline constexpr double kCostFloor = -1e12;

struct Trace {
    double dt = 0.0;
    /// Rows k = 0..N: (x - r, x_dot, phi, omega).
    Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor> states;
    /// Inputs u_k for k = 0..N-1.
    Eigen::VectorXd inputs;
    bool diverged = false;
};

struct CostReport {
    double cost = 0.0;
    double performance = 0.0;
    bool diverged = false;
};

/// Rollout of a unit step (reference_amplitude) from rest. Deterministic.
Trace simulate(const ControllerGains& gains, const PlantConfig& cfg);

/// Negated quadratic cost: -(sum_{k=0..N} x_k' Q x_k + R sum_{k=0..N-1} u_k^2).
/// Diverged traces return kCostFloor.
double cost(const Trace& trace, const PlantConfig& cfg);

/// Improvement over a scaled seed cost: cost_a - multiplier * cost_seed.
double performance(double cost_a, double cost_seed, double multiplier);

/// Noise-free cost and performance of one rollout.
CostReport assess(const ControllerGains& gains, const PlantConfig& cfg, double seed_cost);

/// Noisy performance measurement; the noise draw depends only on rng_seed.
double evaluate(const ControllerGains& gains, const PlantConfig& cfg, double seed_cost, std::uint64_t rng_seed);

/// CSV with columns k,t,x_err,xdot,phi,omega,u. The final row has an empty u.
void write_trace_csv(const Trace& trace, std::ostream& out);

}  // namespace safetune::plant
