#pragma once

#include <cstddef>
#include <vector>

namespace jbsde {

// Partition 0 = t_0 < t_1 < ... < t_n = T. Steps are the half-open intervals
// [t_i, t_{i+1}); nodes are the t_i themselves (n_steps + 1 of them).
struct TimeGrid {
    double horizon = 0.0;
    std::vector<double> times;  // n_steps + 1 nodes

    std::size_t n_steps() const { return times.empty() ? 0 : times.size() - 1; }
    std::size_t n_nodes() const { return times.size(); }
    double dt(std::size_t i) const { return times[i + 1] - times[i]; }
};

// Uniform grid with n_steps steps. Throws std::invalid_argument on a
// nonpositive horizon or zero step count.
TimeGrid make_time_grid(double horizon, std::size_t n_steps);

}  // namespace jbsde
