#pragma once

#include <cstddef>
#include <vector>

#include "jbsde/problem.hpp"

namespace jbsde {

// Coefficient processes along each simulated path, node-indexed, plus the
// clock A they induce:
//   a^2   = g + lipschitz_z^2 + lipschitz_u^2   (floored by H5)
//   zeta^2 = a^2        for p >= 2
//          = |a|^q      for p in (1,2), q = p/(p-1)
//   A_0 = 0, A_{i+1} = A_i + zeta_i^2 dt_i      (left endpoints)
struct WeightPaths {
    std::size_t n_paths = 0;
    std::size_t n_nodes = 0;
    double p = 2.0;

    std::vector<double> alpha, lip_z, lip_u, phi, g, a, zeta, A;  // each [path][node]

    std::size_t idx(std::size_t path, std::size_t node) const { return path * n_nodes + node; }
    double zeta2(std::size_t path, std::size_t node) const {
        const double z = zeta[idx(path, node)];
        return z * z;
    }
};

// Evaluates the problem's coefficient callbacks on every (path, node) and
// accumulates A. Throws HypothesisViolationError naming (H5) when the floor
// a^2 >= epsilon_floor fails anywhere.
WeightPaths compute_weight_paths(const ProblemSpec& problem, const PathEnsemble& ens);

}  // namespace jbsde
