#include "safetune/grid_export.hpp"

#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "safetune/errors.hpp"
#include "safetune/format.hpp"

namespace safetune::harness {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

bool parse_flag(const std::string& text) {
    if (text == "1") return true;
    if (text == "0") return false;
    throw std::invalid_argument("grid csv: expected 0 or 1, got '" + text + "'");
}

}  // namespace

GridExport export_grid(const opt::SafeOpt& state, const std::optional<Eigen::VectorXd>& truth) {
    const Eigen::Index n = static_cast<Eigen::Index>(state.domain().size());
    if (truth && truth->size() != n) {
        throw std::invalid_argument("export_grid: truth vector size does not match the grid");
    }
    GridExport out;
    out.coordinates = state.domain().grid();
    const opt::ConfidenceBounds bounds = state.bounds();
    out.mean = bounds.mean;
    out.std = bounds.variance.cwiseSqrt();
    out.lower = bounds.lower;
    out.upper = bounds.upper;
    out.safe = state.safe_set(bounds);
    out.maximizer = opt::maximizer_set(bounds, out.safe);
    try {
        const opt::Selection sel = opt::select_next(state.gp(), state.domain().grid(), bounds, out.safe,
                                                    state.beta(), state.config().j_min);
        out.expander = sel.sets.expanders;
        out.expander_checked = sel.sets.expander_checked;
    } catch (const AlgorithmStalled&) {
        out.expander = Mask::Constant(n, false);
        out.expander_checked = Mask::Constant(n, false);
    }
    out.truth = truth;
    return out;
}

void write_grid_csv(const GridExport& grid, std::ostream& out) {
    const Eigen::Index d = grid.coordinates.cols();
    out << "index";
    for (Eigen::Index a = 0; a < d; ++a) {
        out << ",a" << a;
    }
    out << ",mean,std,lower,upper,safe,maximizer,expander,expander_checked,truth\n";
    for (Eigen::Index i = 0; i < grid.mean.size(); ++i) {
        out << i;
        for (Eigen::Index a = 0; a < d; ++a) {
            out << ',' << format_double(grid.coordinates(i, a));
        }
        out << ',' << format_double(grid.mean[i]) << ',' << format_double(grid.std[i]) << ','
            << format_double(grid.lower[i]) << ',' << format_double(grid.upper[i]) << ',' << grid.safe[i] << ','
            << grid.maximizer[i] << ',' << grid.expander[i] << ',' << grid.expander_checked[i] << ',';
        if (grid.truth) {
            out << format_double((*grid.truth)[i]);
        }
        out << '\n';
    }
    if (!out) {
        throw std::runtime_error("write_grid_csv: stream write failed");
    }
}

GridExport read_grid_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw std::invalid_argument("grid csv: missing header");
    }
    const std::vector<std::string> header = split_csv(line);
    const Eigen::Index fixed = 10;  // index + 9 trailing columns
    if (static_cast<Eigen::Index>(header.size()) < fixed + 1 || header.front() != "index" || header.back() != "truth") {
        throw std::invalid_argument("grid csv: unexpected header");
    }
    const Eigen::Index d = static_cast<Eigen::Index>(header.size()) - fixed;

    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        rows.push_back(split_csv(line));
        if (rows.back().size() != header.size()) {
            throw std::invalid_argument("grid csv: row " + std::to_string(rows.size()) + " has " +
                                        std::to_string(rows.back().size()) + " fields");
        }
    }

    const auto n = static_cast<Eigen::Index>(rows.size());
    GridExport g;
    g.coordinates.resize(n, d);
    g.mean.resize(n);
    g.std.resize(n);
    g.lower.resize(n);
    g.upper.resize(n);
    g.safe.resize(n);
    g.maximizer.resize(n);
    g.expander.resize(n);
    g.expander_checked.resize(n);
    bool any_truth = false;
    Eigen::VectorXd truth(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        for (Eigen::Index a = 0; a < d; ++a) {
            g.coordinates(i, a) = parse_double(r[static_cast<std::size_t>(1 + a)]);
        }
        std::size_t c = static_cast<std::size_t>(1 + d);
        g.mean[i] = parse_double(r[c++]);
        g.std[i] = parse_double(r[c++]);
        g.lower[i] = parse_double(r[c++]);
        g.upper[i] = parse_double(r[c++]);
        g.safe[i] = parse_flag(r[c++]);
        g.maximizer[i] = parse_flag(r[c++]);
        g.expander[i] = parse_flag(r[c++]);
        g.expander_checked[i] = parse_flag(r[c++]);
        if (!r[c].empty()) {
            any_truth = true;
            truth[i] = parse_double(r[c]);
        }
    }
    if (any_truth) {
        g.truth = truth;
    }
    return g;
}

}  // namespace safetune::harness
