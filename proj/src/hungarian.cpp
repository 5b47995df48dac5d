#include "serum/hungarian.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace serum {

Assignment hungarian_match(const CostMatrix& cost) {
    const std::size_t n = cost.rows;  // queries
    const std::size_t m = cost.cols;  // targets
    if (n < m) {
        throw std::invalid_argument("hungarian_match: " + std::to_string(m) +
                                    " targets cannot be matched to " + std::to_string(n) +
                                    " queries");
    }
    for (double v : cost.values) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("hungarian_match: non-finite cost");
        }
    }

    Assignment result;
    if (m > 0) {
        // Targets are the augmenting side (m <= n). Arrays are 1-based; index 0
        // is the virtual source column of the shortest-path formulation.
        constexpr double kInf = std::numeric_limits<double>::infinity();
        std::vector<double> u(m + 1, 0.0), v(n + 1, 0.0);
        std::vector<std::size_t> owner(n + 1, 0), way(n + 1, 0);
        for (std::size_t t = 1; t <= m; ++t) {
            owner[0] = t;
            std::size_t q0 = 0;
            std::vector<double> min_slack(n + 1, kInf);
            std::vector<bool> used(n + 1, false);
            do {
                used[q0] = true;
                const std::size_t t0 = owner[q0];
                double delta = kInf;
                std::size_t q1 = 0;
                for (std::size_t q = 1; q <= n; ++q) {
                    if (used[q]) {
                        continue;
                    }
                    const double reduced = cost.at(q - 1, t0 - 1) - u[t0] - v[q];
                    if (reduced < min_slack[q]) {
                        min_slack[q] = reduced;
                        way[q] = q0;
                    }
                    if (min_slack[q] < delta) {
                        delta = min_slack[q];
                        q1 = q;
                    }
                }
                for (std::size_t q = 0; q <= n; ++q) {
                    if (used[q]) {
                        u[owner[q]] += delta;
                        v[q] -= delta;
                    } else {
                        min_slack[q] -= delta;
                    }
                }
                q0 = q1;
            } while (owner[q0] != 0);
            do {
                const std::size_t q1 = way[q0];
                owner[q0] = owner[q1];
                q0 = q1;
            } while (q0 != 0);
        }
        std::vector<std::size_t> query_of_target(m, 0);
        for (std::size_t q = 1; q <= n; ++q) {
            if (owner[q] != 0) {
                query_of_target[owner[q] - 1] = q - 1;
            }
        }
        for (std::size_t t = 0; t < m; ++t) {
            result.pairs.emplace_back(query_of_target[t], t);
            result.total_cost += cost.at(query_of_target[t], t);
        }
    }
    std::vector<bool> matched(n, false);
    for (const auto& [q, t] : result.pairs) {
        matched[q] = true;
    }
    for (std::size_t q = 0; q < n; ++q) {
        if (!matched[q]) {
            result.unmatched.push_back(q);
        }
    }
    return result;
}

}  // namespace serum
