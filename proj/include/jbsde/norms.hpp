#pragma once

#include <string>

#include "jbsde/problem.hpp"
#include "jbsde/solution.hpp"
#include "jbsde/weights.hpp"

namespace jbsde {

// Weighted norm families over the clock A (kappa := min(p/2, 1)):
//   S_p    sup_i   ( e^{kappa beta A_i} |Y_i|^p )
//   S_pA   sum_i     e^{kappa beta A_i} |Y_i|^p  zeta_i^2 dt_i
//   H_p   ( sum_i    e^{beta A_i} |Z_i|_F^2 dt_i )^{p/2}
//   L_pQ  ( sum_i    e^{beta A_i} |U_i|_Q^2 dt_i )^{p/2},  |u|_Q^2 = sum_j |u(e_j)|^2 q_j lambda
//   L_pN  ( sum_i    e^{beta A_i} sum_j |U_i(e_j)|^2 dN_i[j] )^{p/2}
// and the exact composites
//   B_p^p = S_p^p + S_pA^p,  frakL_p^p = L_pQ^p + L_pN^p,  E_p^p = B_p^p + H_p^p + frakL_p^p.
// A norm value is (mean over paths of the pathwise functional)^{1/p}; the
// standard error is delta-method propagated from the mean.
enum class NormKind { S_p, S_pA, H_p, L_pQ, L_pN, B_p, frakL_p, E_p };

enum class Component { Y, Z, U };

struct NormEstimate {
    double value = 0.0;
    double mc_std_error = 0.0;
    NormKind kind = NormKind::S_p;
    double p = 2.0;
    double beta = 1.0;
    std::size_t n_paths = 0;
};

std::string norm_kind_name(NormKind k);

// Pathwise functional (the p-th power contribution of one path).
double pathwise_norm_power(NormKind kind, Component comp, const DiscreteSolution& sol,
                           const WeightPaths& w, const PathEnsemble& ens,
                           const JumpMeasureSpec& spec, double p, double beta, std::size_t path);

// Monte Carlo estimate over all paths. Component is ignored for E_p (which
// consumes the whole triple); B_p requires Y, frakL_p requires U. Non-finite
// inputs raise NumericalBlowupError.
NormEstimate weighted_norm(NormKind kind, Component comp, const DiscreteSolution& sol,
                           const WeightPaths& w, const PathEnsemble& ens,
                           const JumpMeasureSpec& spec, double p, double beta);

// Squared kernel-weighted mark norm at a step: sum_j |u(e_j)|^2 q_j lambda.
double mark_norm_sq(const JumpMeasureSpec& spec, const PathEnsemble& ens, std::size_t path,
                    std::size_t step, const DiscreteSolution& sol);

// Two-sided comparison of the kernel (Q) and counting (N) views of the jump
// control. direction/constant depend on p:
//   p > 2 : Q-side <= (p/2)^{p/2} N-side      p = 2 : equality
//   p < 2 : N-side <= 2 Q-side
// The slack is 3 combined-MC sigma of the per-path difference.
struct JumpNormRelation {
    double q_side = 0.0, q_sigma = 0.0;
    double n_side = 0.0, n_sigma = 0.0;
    double constant = 1.0;
    double margin = 0.0;        // rhs_bound - lhs (positive = satisfied)
    double margin_sigma = 0.0;  // sigma of the margin estimator
    bool passed = false;
};
JumpNormRelation check_jump_norm_relation(const DiscreteSolution& sol, const WeightPaths& w,
                                          const PathEnsemble& ens, const JumpMeasureSpec& spec,
                                          double p, double beta);

}  // namespace jbsde
