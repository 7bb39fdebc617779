#include "safetune/safe_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "safetune/errors.hpp"

namespace safetune::opt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::Index as_index(std::size_t i) { return static_cast<Eigen::Index>(i); }

Point checked_point(const Domain& domain, std::size_t index) {
    if (index >= domain.size()) {
        throw std::out_of_range("safeopt: grid index " + std::to_string(index) + " out of range");
    }
    return domain.point(index);
}

Mask single_mask(std::size_t size, std::size_t index) {
    Mask mask = Mask::Constant(as_index(size), false);
    mask[as_index(index)] = true;
    return mask;
}

void check_sizes(const ConfidenceBounds& bounds, const Mask& mask, const char* what) {
    if (static_cast<std::size_t>(mask.size()) != bounds.size()) {
        throw std::invalid_argument(std::string(what) + ": mask size does not match bounds");
    }
}

/// argmax of values over the mask with the lowest index winning ties; -1 if the mask is empty.
Eigen::Index masked_argmax(const Eigen::VectorXd& values, const Mask& mask) {
    Eigen::Index best = -1;
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        if (mask[i] && (best < 0 || values[i] > values[best])) {
            best = i;
        }
    }
    return best;
}

Points gather_rows(const Points& grid, const Mask& mask) {
    Points out(mask.count(), grid.cols());
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
        if (mask[i]) {
            out.row(r++) = grid.row(i);
        }
    }
    return out;
}

bool duplicates_noiseless_row(const gp::GpPosterior& gp, const Eigen::Ref<const Point>& p) {
    const gp::Dataset& data = gp.data();
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        if (gp.row_noise()[i] == 0.0 && (data.inputs.row(i).transpose().array() == p.array()).all()) {
            return true;
        }
    }
    return false;
}

/// Expander count against a pre-gathered set of unsafe points.
std::size_t count_reclassified(const gp::GpPosterior& gp, const Eigen::Ref<const Point>& candidate,
                               double optimistic_value, const Points& unsafe, double beta, double j_min) {
    if (unsafe.rows() == 0) {
        return 0;
    }
    // Re-measuring a noiseless row without noise leaves the posterior unchanged,
    // and the unsafe points stay below the threshold.
    if (duplicates_noiseless_row(gp, candidate)) {
        return 0;
    }
    const gp::GpPosterior conditioned = gp.condition_virtual(candidate, optimistic_value);
    const gp::Prediction p = conditioned.predict(unsafe);
    std::size_t count = 0;
    for (Eigen::Index i = 0; i < unsafe.rows(); ++i) {
        if (p.mean[i] - beta * std::sqrt(p.variance[i]) >= j_min) {
            ++count;
        }
    }
    return count;
}

}  // namespace

double SafeOptConfig::beta_at(std::size_t iteration) const {
    return beta_schedule ? beta_schedule(iteration) : beta;
}

void SafeOptConfig::validate() const {
    // beta = 0 is accepted as a degenerate setting for negative-control experiments.
    if (!(beta >= 0.0) || !std::isfinite(beta)) {
        throw std::invalid_argument("safeopt: beta must be nonnegative and finite");
    }
    if (!std::isfinite(j_min)) {
        throw std::invalid_argument("safeopt: j_min must be finite");
    }
    if (!(stop_epsilon >= 0.0)) {
        throw std::invalid_argument("safeopt: stop_epsilon must be nonnegative");
    }
}

ConfidenceBounds confidence_bounds(const gp::GpPosterior& gp, const Points& grid, double beta) {
    gp::Prediction p = gp.predict(grid);
    ConfidenceBounds b;
    const Eigen::VectorXd scaled_std = beta * p.variance.cwiseSqrt();
    b.lower = p.mean - scaled_std;
    b.upper = p.mean + scaled_std;
    b.mean = std::move(p.mean);
    b.variance = std::move(p.variance);
    return b;
}

Mask safe_set(const ConfidenceBounds& bounds, double j_min, const Mask& seed) {
    check_sizes(bounds, seed, "safe_set");
    return (bounds.lower.array() >= j_min) || seed;
}

Mask maximizer_set(const ConfidenceBounds& bounds, const Mask& safe) {
    check_sizes(bounds, safe, "maximizer_set");
    const double best_lower = bounds.lower.maxCoeff();
    return safe && (bounds.upper.array() >= best_lower);
}

std::size_t expander_indicator(const gp::GpPosterior& gp, const Points& grid, std::size_t candidate,
                               const ConfidenceBounds& bounds, const Mask& safe, double beta,
                               double j_min) {
    check_sizes(bounds, safe, "expander_indicator");
    if (candidate >= bounds.size()) {
        throw std::out_of_range("expander_indicator: candidate index out of range");
    }
    const Points unsafe = gather_rows(grid, !safe);
    return count_reclassified(gp, grid.row(as_index(candidate)).transpose(), bounds.upper[as_index(candidate)],
                              unsafe, beta, j_min);
}

Selection select_next(const gp::GpPosterior& gp, const Points& grid, const ConfidenceBounds& bounds,
                      const Mask& safe, double beta, double j_min) {
    check_sizes(bounds, safe, "select_next");
    const auto n = static_cast<Eigen::Index>(bounds.size());
    if (!safe.any()) {
        throw AlgorithmStalled("select_next: safe set is empty");
    }

    Selection sel;
    sel.sets.safe = safe;
    sel.sets.maximizers = maximizer_set(bounds, safe);
    sel.sets.expanders = Mask::Constant(n, false);
    sel.sets.expander_checked = Mask::Constant(n, false);

    const Eigen::VectorXd width = bounds.width();
    const Eigen::Index best_max = masked_argmax(width, sel.sets.maximizers);
    const double best_max_width = best_max >= 0 ? width[best_max] : kNegInf;

    // Only safe non-maximizers at least as wide as the best maximizer can change the answer.
    std::vector<Eigen::Index> candidates;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (safe[i] && !sel.sets.maximizers[i] && width[i] >= best_max_width) {
            candidates.push_back(i);
        }
    }
    std::sort(candidates.begin(), candidates.end(), [&](Eigen::Index a, Eigen::Index b) {
        return width[a] != width[b] ? width[a] > width[b] : a < b;
    });

    Eigen::Index chosen = -1;
    if (!candidates.empty()) {
        const Points unsafe = gather_rows(grid, !safe);
        for (Eigen::Index i : candidates) {
            // A candidate tied with the best maximizer only wins with a lower index.
            if (width[i] == best_max_width && i > best_max) {
                break;
            }
            sel.sets.expander_checked[i] = true;
            ++sel.sets.resolved_expander_count;
            if (count_reclassified(gp, grid.row(i).transpose(), bounds.upper[i], unsafe, beta, j_min) > 0) {
                sel.sets.expanders[i] = true;
                chosen = i;
                break;
            }
        }
    }

    if (chosen >= 0) {
        sel.expander = true;
    } else if (best_max >= 0) {
        chosen = best_max;
    } else {
        throw AlgorithmStalled("select_next: " + std::to_string(safe.count()) +
                               " safe points but no maximizer or expander");
    }
    sel.index = static_cast<std::size_t>(chosen);
    sel.width = width[chosen];
    sel.bounds = bounds;
    return sel;
}

std::size_t recommend(const ConfidenceBounds& bounds, const Mask& safe) {
    check_sizes(bounds, safe, "recommend");
    const Eigen::Index best = masked_argmax(bounds.lower, safe);
    if (best < 0) {
        throw std::invalid_argument("recommend: safe set is empty");
    }
    return static_cast<std::size_t>(best);
}

std::size_t ucb_select(const ConfidenceBounds& bounds) {
    if (bounds.size() == 0) {
        throw std::invalid_argument("ucb_select: empty grid");
    }
    return static_cast<std::size_t>(masked_argmax(bounds.upper, Mask::Constant(bounds.upper.size(), true)));
}

SafeOpt::SafeOpt(Domain domain, const gp::KernelParams& params, SafeOptConfig config, std::size_t seed_index,
                 double seed_value)
    : SafeOpt(domain, gp::GpPosterior(params).add_observation(checked_point(domain, seed_index), seed_value),
              std::move(config), single_mask(domain.size(), seed_index)) {}

SafeOpt::SafeOpt(Domain domain, gp::GpPosterior gp, SafeOptConfig config, Mask seed_mask)
    : domain_(std::move(domain)), gp_(std::move(gp)), config_(std::move(config)), seed_mask_(std::move(seed_mask)) {
    config_.validate();
    if (static_cast<std::size_t>(seed_mask_.size()) != domain_.size()) {
        throw std::invalid_argument("safeopt: seed mask size does not match the domain");
    }
    if (static_cast<std::size_t>(gp_.params().dim()) != domain_.dim()) {
        throw std::invalid_argument("safeopt: kernel dimension does not match the domain");
    }
    if (!seed_mask_.any()) {
        throw std::invalid_argument("safeopt: seed mask must contain at least one point");
    }
}

ConfidenceBounds SafeOpt::bounds() const { return confidence_bounds(gp_, domain_.grid(), beta()); }

Mask SafeOpt::safe_set(const ConfidenceBounds& b) const { return opt::safe_set(b, config_.j_min, seed_mask_); }

Selection SafeOpt::select_next() const {
    ConfidenceBounds b = bounds();
    const Mask safe = safe_set(b);
    return opt::select_next(gp_, domain_.grid(), b, safe, beta(), config_.j_min);
}

std::size_t SafeOpt::recommend() const {
    const ConfidenceBounds b = bounds();
    return opt::recommend(b, safe_set(b));
}

std::size_t SafeOpt::ucb_select() const { return opt::ucb_select(bounds()); }

bool SafeOpt::stopped() const {
    if (history_.size() >= config_.max_iterations) {
        return true;
    }
    try {
        return select_next().width < config_.stop_epsilon;
    } catch (const AlgorithmStalled&) {
        return true;
    }
}

const Observation& SafeOpt::step(const Evaluator& evaluate) {
    const Selection sel = select_next();
    const double value = evaluate(domain_.point(sel.index), sel.index);
    return commit(sel, value);
}

const Observation& SafeOpt::commit(const Selection& selection, double value) {
    return append(selection.index, value, selection.bounds.lower[as_index(selection.index)]);
}

const Observation& SafeOpt::observe(std::size_t index, double value) {
    if (index >= domain_.size()) {
        throw std::out_of_range("safeopt: grid index out of range");
    }
    const auto [mean, variance] = gp_.predict_point(domain_.point(index));
    return append(index, value, mean - beta() * std::sqrt(variance));
}

const Observation& SafeOpt::append(std::size_t index, double value, double lower) {
    gp::GpPosterior updated = gp_.add_observation(domain_.point(index), value);
    Observation obs;
    obs.iteration = iteration();
    obs.index = index;
    obs.value = value;
    obs.lower_at_selection = lower;
    obs.seed_point = seed_mask_[as_index(index)];
    history_.push_back(obs);
    gp_ = std::move(updated);
    return history_.back();
}

}  // namespace safetune::opt
