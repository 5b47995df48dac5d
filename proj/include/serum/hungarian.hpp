#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace serum {

/// Dense row-major cost matrix: rows are queries, columns are targets.
struct CostMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    CostMatrix() = default;
    CostMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), values(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct Assignment {
    /// (query, target) pairs sorted by target index.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    /// Queries left without a target (assigned the no-object class).
    std::vector<std::size_t> unmatched;
    /// Sum of the matched costs, accumulated in target order.
    double total_cost = 0.0;
};

/// Minimum-cost assignment of every target (column) to a distinct query
/// (row). O(m^2 n) shortest-augmenting-path with potentials.
/// Throws std::invalid_argument when rows < cols or a cost is not finite.
Assignment hungarian_match(const CostMatrix& cost);

}  // namespace serum
