#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "safetune/safe_opt.hpp"

namespace safetune::harness {

/// Per-grid-point posterior summary and set membership, in grid order.
struct GridExport {
    Points coordinates;
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    Mask safe;
    Mask maximizer;
    Mask expander;
    Mask expander_checked;
    std::optional<Eigen::VectorXd> truth;

    std::size_t rows() const { return static_cast<std::size_t>(mean.size()); }
};

/// Evaluates bounds and sets for the current state. Expanders are resolved lazily
/// as in select_next; a stalled state exports no expanders.
GridExport export_grid(const opt::SafeOpt& state, const std::optional<Eigen::VectorXd>& truth);

/// CSV with header index,a0..a{d-1},mean,std,lower,upper,safe,maximizer,expander,expander_checked,truth.
/// Doubles use the shortest round-trip representation; truth is empty when unknown.
void write_grid_csv(const GridExport& grid, std::ostream& out);
GridExport read_grid_csv(std::istream& in);

}  // namespace safetune::harness
