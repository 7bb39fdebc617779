#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "safetune/domain.hpp"
#include "safetune/gaussian_process.hpp"

namespace safetune::opt {

struct SafeOptConfig {
    /// Confidence scale used when no schedule is given.
    double beta = 2.0;
    /// Safety threshold on the performance.
    double j_min = 0.0;
    /// Stop once the widest candidate among maximizers and expanders is narrower than this
    /// (0 disables the test).
    double stop_epsilon = 1e-6;
    std::size_t max_iterations = 30;
    /// Optional iteration-dependent confidence scale beta_n (n starts at 1).
    std::function<double(std::size_t)> beta_schedule;

    double beta_at(std::size_t iteration) const;
    void validate() const;
};

/// Pointwise confidence interval mean +- beta * std over the whole grid.
struct ConfidenceBounds {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    Eigen::VectorXd width() const { return upper - lower; }
    std::size_t size() const { return static_cast<std::size_t>(lower.size()); }
};

/// Set membership at one iteration. Expanders are resolved lazily: only grid
/// points with `expander_checked` set were tested, and `expanders` marks the
/// checked points that turned out to be expanders.
struct SetsSnapshot {
    Mask safe;
    Mask maximizers;
    Mask expanders;
    Mask expander_checked;
    std::size_t resolved_expander_count = 0;

    std::size_t safe_count() const { return static_cast<std::size_t>(safe.count()); }
    std::size_t maximizer_count() const { return static_cast<std::size_t>(maximizers.count()); }
    std::size_t expander_count() const { return static_cast<std::size_t>(expanders.count()); }
};

struct Selection {
    std::size_t index = 0;
    double width = 0.0;
    /// True when the point was chosen as an expander outside the maximizer set.
    bool expander = false;
    ConfidenceBounds bounds;
    SetsSnapshot sets;
};

/// One evaluation appended to the optimizer history.
struct Observation {
    std::size_t iteration = 0;
    std::size_t index = 0;
    double value = 0.0;
    /// Lower confidence bound at the point when it was selected.
    double lower_at_selection = 0.0;
    bool seed_point = false;
};

ConfidenceBounds confidence_bounds(const gp::GpPosterior& gp, const Points& grid, double beta);

/// Points whose lower bound reaches j_min, together with every seed point.
Mask safe_set(const ConfidenceBounds& bounds, double j_min, const Mask& seed);

/// Safe points whose upper bound reaches the largest lower bound over the whole grid.
Mask maximizer_set(const ConfidenceBounds& bounds, const Mask& safe);

/// Number of currently unsafe grid points that would be classified safe if a
/// noiseless measurement equal to the upper bound were observed at `candidate`.
std::size_t expander_indicator(const gp::GpPosterior& gp, const Points& grid, std::size_t candidate,
                               const ConfidenceBounds& bounds, const Mask& safe, double beta,
                               double j_min);

/// Widest point of the maximizer and expander sets, with expanders searched
/// lazily in order of decreasing width (ties: lowest index). Throws
/// AlgorithmStalled if neither set has a member.
Selection select_next(const gp::GpPosterior& gp, const Points& grid, const ConfidenceBounds& bounds,
                      const Mask& safe, double beta, double j_min);

/// Safe point with the largest lower bound (ties: lowest index).
std::size_t recommend(const ConfidenceBounds& bounds, const Mask& safe);

/// Unconstrained GP-UCB choice: largest upper bound over the whole grid (ties: lowest index).
std::size_t ucb_select(const ConfidenceBounds& bounds);

/**
 * Modified SafeOpt over a finite grid.
 *
 * The safe set at every iteration is the set of points with lower bound at
 * least j_min, united with the seed mask. The optimizer is strictly sequential;
 * all query methods are const and operate on one posterior snapshot.
 */
class SafeOpt {
public:
    using Evaluator = std::function<double(const Point& point, std::size_t index)>;

    /// Initializes the GP with the seed measurement; the seed mask holds only `seed_index`.
    SafeOpt(Domain domain, const gp::KernelParams& params, SafeOptConfig config, std::size_t seed_index,
            double seed_value);
    /// Starts from an existing posterior and seed mask.
    SafeOpt(Domain domain, gp::GpPosterior gp, SafeOptConfig config, Mask seed_mask);

    const Domain& domain() const { return domain_; }
    const gp::GpPosterior& gp() const { return gp_; }
    const SafeOptConfig& config() const { return config_; }
    const Mask& seed_mask() const { return seed_mask_; }
    const std::vector<Observation>& history() const { return history_; }

    /// Index n of the next selection (1 before the first step).
    std::size_t iteration() const { return history_.size() + 1; }
    double beta() const { return config_.beta_at(iteration()); }

    ConfidenceBounds bounds() const;
    Mask safe_set(const ConfidenceBounds& bounds) const;
    Selection select_next() const;
    std::size_t recommend() const;
    std::size_t ucb_select() const;

    /// True once max_iterations evaluations were made, or the widest candidate
    /// is narrower than stop_epsilon. A stalled state counts as stopped.
    bool stopped() const;

    /// Selects, evaluates and updates. If the evaluator throws, the state is unchanged.
    const Observation& step(const Evaluator& evaluate);

    /// Adds a measurement at a previously computed selection.
    const Observation& commit(const Selection& selection, double value);
    /// Adds a measurement at an arbitrary grid index (used by the GP-UCB baseline).
    const Observation& observe(std::size_t index, double value);

private:
    const Observation& append(std::size_t index, double value, double lower);

    Domain domain_;
    gp::GpPosterior gp_;
    SafeOptConfig config_;
    Mask seed_mask_;
    std::vector<Observation> history_;
};

}  // namespace safetune::opt
