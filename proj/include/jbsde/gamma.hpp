#pragma once

#include "jbsde/problem.hpp"
#include "jbsde/solution.hpp"
#include "jbsde/weights.hpp"

namespace jbsde {

// Exponential reweighting that trades the monotonicity coefficient alpha for
// the fixed margin -eps. Per path,
//   Gamma_0 = 1,  Gamma_{i+1} = Gamma_i exp((alpha_i + eps a_i^2 + eps) dt_i),
// and the transformed problem drives
//   f_hat(t,y,z,u) = Gamma f(t, y/Gamma, z/Gamma, u/Gamma) - (alpha + eps a^2 + eps) y,
//   xi_hat = Gamma_T xi,  alpha_hat = -eps a^2 - eps,
// so alpha_hat + eps a^2 = -eps at every node while a and zeta are unchanged.
struct GammaTransform {
    double eps = 0.0;
    std::size_t n_paths = 0;
    std::size_t n_nodes = 0;
    std::vector<double> gamma;  // [path][node]
    ProblemSpec transformed;

    double at(std::size_t path, std::size_t node) const { return gamma[path * n_nodes + node]; }
};

// Builds the per-path table and the wrapped problem. Throws
// TransformOverflowError when the table leaves the representable range.
GammaTransform make_gamma_transform(const ProblemSpec& problem, const PathEnsemble& ens,
                                    const WeightPaths& weights, double eps);

enum class GammaDirection { Forward, Inverse };

// Node-wise rescaling of a solution triple by Gamma (or its inverse).
DiscreteSolution gamma_apply(const GammaTransform& gt, const DiscreteSolution& sol,
                             GammaDirection direction);

}  // namespace jbsde
