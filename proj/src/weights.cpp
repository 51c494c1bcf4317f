#include "jbsde/weights.hpp"

#include <cmath>
#include <string>

#include "jbsde/errors.hpp"

namespace jbsde {

WeightPaths compute_weight_paths(const ProblemSpec& problem, const PathEnsemble& ens) {
    WeightPaths w;
    w.n_paths = ens.n_paths;
    w.n_nodes = ens.grid.n_nodes();
    w.p = problem.p;
    const std::size_t total = w.n_paths * w.n_nodes;
    w.alpha.resize(total);
    w.lip_z.resize(total);
    w.lip_u.resize(total);
    w.phi.resize(total);
    w.g.resize(total);
    w.a.resize(total);
    w.zeta.resize(total);
    w.A.resize(total);

    const bool p_ge_2 = problem.p >= 2.0;
    const double q = problem.p / (problem.p - 1.0);

    for (std::size_t path = 0; path < w.n_paths; ++path) {
        double clock = 0.0;
        for (std::size_t node = 0; node < w.n_nodes; ++node) {
            const double t = ens.grid.times[node];
            const auto xs = ens.x_node(path, node);
            const std::size_t k = w.idx(path, node);
            w.alpha[k] = problem.alpha ? problem.alpha(t, xs) : 0.0;
            w.lip_z[k] = problem.lipschitz_z ? problem.lipschitz_z(t, xs) : 0.0;
            w.lip_u[k] = problem.lipschitz_u ? problem.lipschitz_u(t, xs) : 0.0;
            w.phi[k] = problem.phi_growth ? problem.phi_growth(t, xs) : 1.0;
            w.g[k] = problem.g_growth ? problem.g_growth(t, xs) : 0.0;
            const double a2 = w.g[k] + w.lip_z[k] * w.lip_z[k] + w.lip_u[k] * w.lip_u[k];
            if (!(a2 >= problem.epsilon_floor) || !std::isfinite(a2))
                throw HypothesisViolationError(
                    "(H5) floor violated: a^2 = " + std::to_string(a2) + " < epsilon_floor = " +
                    std::to_string(problem.epsilon_floor) + " at t = " + std::to_string(t) +
                    ", path " + std::to_string(path));
            w.a[k] = std::sqrt(a2);
            const double zeta2 = p_ge_2 ? a2 : std::pow(w.a[k], q);
            w.zeta[k] = std::sqrt(zeta2);
            w.A[k] = clock;
            if (node + 1 < w.n_nodes) clock += zeta2 * ens.grid.dt(node);
        }
    }
    return w;
}

}  // namespace jbsde
