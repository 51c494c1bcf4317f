#include "jbsde/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace jbsde {

TimeGrid make_time_grid(double horizon, std::size_t n_steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw std::invalid_argument("time grid horizon must be positive and finite, got " +
                                    std::to_string(horizon));
    if (n_steps == 0) throw std::invalid_argument("time grid needs at least one step");
    TimeGrid g;
    g.horizon = horizon;
    g.times.resize(n_steps + 1);
    for (std::size_t i = 0; i <= n_steps; ++i)
        g.times[i] = horizon * static_cast<double>(i) / static_cast<double>(n_steps);
    g.times.back() = horizon;
    return g;
}

}  // namespace jbsde
