#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jbsde/norms.hpp"
#include "jbsde/problem.hpp"
#include "jbsde/regression.hpp"
#include "jbsde/solution.hpp"
#include "jbsde/weights.hpp"

namespace jbsde {

// How the controls feed the implicit y-step at each node.
//   ExplicitZU: use the controls just regressed at this step.
//   FrozenZU:   use externally supplied control paths (Picard inner map).
enum class Coupling { ExplicitZU, FrozenZU };

struct FrozenControls {
    const std::vector<double>* z = nullptr;  // [path][step][d][k]
    const std::vector<double>* u = nullptr;  // [path][step][d][m]
};

// One backward sweep of the regression scheme:
//   terminal slice   Y_n = xi exactly
//   U_i(e_j) = fit( Y_{i+1} dNtilde_i[j] ) / (q_j lambda dt_i)   (0 when the mass is 0)
//   Z_i      = fit( Y_{i+1} dW_i^T ) / dt_i
//   Y_i solves y = fit(Y_{i+1}) + f(t_i, X_i, y, Z_i, U_i) dt_i  (damped fixed point)
// Throws ImplicitStepError with the step index and a local Lipschitz surrogate
// if the inner iteration fails to settle.
DiscreteSolution solve_backward(const ProblemSpec& problem, const PathEnsemble& ens,
                                const WeightPaths& weights, const RegressionConfig& cfg,
                                Coupling coupling, const FrozenControls& frozen = {});

struct PicardOptions {
    int max_iters = 20;
    double tol = 1e-6;
    RegressionConfig regression;
};

struct PicardTrace {
    std::vector<double> distances;  // successive-iterate distances in the B-metric
    bool converged = false;
    int iterations = 0;
    DiscreteSolution solution;
};

// Initial control paths for the Picard iteration (zero if null).
struct PicardStart {
    const std::vector<double>* z0 = nullptr;
    const std::vector<double>* u0 = nullptr;
    const std::vector<double>* y0 = nullptr;  // only enters the first distance
};

// Successive frozen-control sweeps. The iteration metric is the p-th root of
//   ||Y||^p_{S_pA} + ||Z||^p_{H_p} + ||U||^p_{L_pN} + ||U||^p_{L_pQ}
// on iterate differences.
PicardTrace picard_iterate(const ProblemSpec& problem, const PathEnsemble& ens,
                           const WeightPaths& weights, const PicardOptions& opt,
                           const PicardStart& start = {});

double picard_metric(const DiscreteSolution& diff, const WeightPaths& w, const PathEnsemble& ens,
                     const JumpMeasureSpec& spec, double p, double beta);

// Level-n localization: per path, tau_n is the first grid node where a >= n
// (capped at T); the localized driver is 1_{t <= tau_n} f, and the reported
// Lipschitz surrogates are capped at n.
struct LocalizedProblem {
    ProblemSpec problem;
    std::vector<std::size_t> tau_node;  // per path, first node with a >= n (or n_nodes-1)
    double level = 0.0;
};
LocalizedProblem localize_generator(const ProblemSpec& problem, const PathEnsemble& ens,
                                    const WeightPaths& weights, double level);

// Euclidean clamp onto the ball of radius n: x * n / max(|x|, n).
void radial_clamp(std::span<const double> x, double n, std::span<double> out);

// Level-n data truncation: terminal condition clamped radially; the driver is
// re-centered so only its y-free part is clamped:
//   f_n(t,y,z,u) = f(t,y,z,u) - f(t,0,z,u) + clamp_n(f(t,0,z,u)).
ProblemSpec truncate_data(const ProblemSpec& problem, double level);

// Per-node discrete equation residual
//   R_i = Y_i - [ Y_n + sum_{j>=i} f_j dt_j - sum_{j>=i} Z_j dW_j
//                 - sum_{j>=i} sum_m U_j(e_m) dNtilde_j[m] ],
// reported as the L2-over-paths profile and its max over nodes.
struct ResidualReport {
    std::vector<double> node_l2;  // per node
    double max_l2 = 0.0;
};
ResidualReport bsde_residual(const ProblemSpec& problem, const DiscreteSolution& sol,
                             const PathEnsemble& ens, const WeightPaths& weights);

}  // namespace jbsde
