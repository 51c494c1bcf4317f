#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jbsde/ensemble.hpp"
#include "jbsde/norms.hpp"
#include "jbsde/problem.hpp"
#include "jbsde/regression.hpp"
#include "jbsde/solution.hpp"
#include "jbsde/solver.hpp"
#include "jbsde/weights.hpp"

namespace jbsde {

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct CheckMeta {
    double p = 2.0;
    double beta = 1.0;
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::string problem;
};

// One verified estimate: an LHS/RHS pair of Monte Carlo (or deterministic)
// quantities, the measured ratio, and the pass decision. `slack_sigmas` is the
// number of combined standard errors of slack the decision used (0 for
// deterministic checks). Where a display's constant is not explicit the ratio
// itself is the recorded measurement.
struct EstimateReport {
    std::string name;
    double lhs = 0.0;
    double lhs_sigma = 0.0;
    double rhs = 0.0;
    double rhs_sigma = 0.0;
    double measured_ratio = 0.0;  // lhs / rhs, 0 when both vanish
    double slack_sigmas = 0.0;
    bool passed = false;
    CheckMeta meta;
};

// Least-squares slope of log(err) against log(dt): the empirical refinement
// order. All errors must be positive and sizes equal (>= 2).
double fit_refinement_order(std::span<const double> dt, std::span<const double> err);

// ---------------------------------------------------------------------------
// Power integral bound (exponent p > 2)
//   integral_0^1 (1 - r) |x + r y|^(p-2) dr  >=  3^(1-p) |x|^(p-2)
// ---------------------------------------------------------------------------

struct PowerIntegralSample {
    double lhs = 0.0;          // adaptive quadrature value (tolerance 1e-10)
    double rhs = 0.0;          // 3^(1-p) |x|^(p-2)
    double margin = 0.0;       // (lhs - rhs) / |x|^(p-2), or lhs - rhs when x = 0
    bool holds = false;        // with round-off slack 1e-9 |x|^(p-2)
};

// Evaluates both sides for one (x, y) pair. Throws std::invalid_argument for
// p <= 2 or mismatched dimensions; QuadratureToleranceError when the adaptive
// rule cannot certify the 1e-10 tolerance.
PowerIntegralSample check_power_integral_bound(std::span<const double> x,
                                               std::span<const double> y, double p);

struct PowerIntegralSweep {
    std::size_t n_samples = 0;
    std::size_t n_violations = 0;
    double worst_margin = 0.0;  // minimum normalized margin seen
    EstimateReport report;      // lhs/rhs of the worst-margin sample
};

// Randomized sweep with p ~ U(2, p_max]. Samples are constructed to cover the
// degenerate cases x = 0 and y = 0 plus all three dilation regimes of the
// ratio r0 = 2|x| / (3|y|): r0 < 1/2, r0 in [1/2, 1), and r0 >= 1.
PowerIntegralSweep sweep_power_integral_bound(std::size_t n_samples, int dim,
                                              std::uint64_t seed, double p_max = 6.0);

// ---------------------------------------------------------------------------
// Jump Taylor bound (exponent p in (1,2))
//   |x+y|^p - |x|^p - p |x|^(p-1) x_dir . y
//     >=  b_p |y|^2 ( |x|^2 v |x+y|^2 )^((p-2)/2),   b_p = p(p-1)/2
// ---------------------------------------------------------------------------

// The curvature constant b_p = p (p - 1) / 2.
double jump_curvature_constant(double p);

struct JumpTaylorSample {
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;  // lhs - rhs
    bool holds = false;   // up to a machine-epsilon round-off guard only
};

// Evaluates both sides for one (x, y) pair; p must lie in (1,2).
JumpTaylorSample check_jump_taylor_bound(std::span<const double> x,
                                         std::span<const double> y_jump, double p);

struct JumpTaylorSweep {
    std::size_t n_jumps = 0;
    std::size_t n_violations = 0;
    double worst_margin = 0.0;
    std::vector<std::string> witnesses;  // first few violating (path, step, mark)
    EstimateReport report;               // worst-margin jump
};

// Checks the bound at every simulated jump of the solution: for each
// (path, step, mark) with a positive count, x is the node value of Y before
// the jump and y is the jump control U(e_mark) at that step. Deterministic:
// no Monte Carlo slack enters the decision.
JumpTaylorSweep sweep_jump_taylor_bound(const DiscreteSolution& sol, const PathEnsemble& ens,
                                        double p);

// ---------------------------------------------------------------------------
// Discrete weighted-power transformation identity (exponent p in (1,2))
// ---------------------------------------------------------------------------

// Step-indexed decomposition dX = F dt + Z dW + U dN~ with a shared start
// value. Empty coefficient arrays mean identically zero.
struct DiscreteSemimartingale {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    int dim_d = 1;
    int dim_k = 1;
    int n_marks = 1;

    std::vector<double> x0;     // [d]
    std::vector<double> drift;  // [path][step][d]
    std::vector<double> vol;    // [path][step][d][k]
    std::vector<double> jump;   // [path][step][d][m]

    std::size_t drift_idx(std::size_t path, std::size_t step, int c = 0) const {
        return (path * n_steps + step) * static_cast<std::size_t>(dim_d) +
               static_cast<std::size_t>(c);
    }
    std::size_t vol_idx(std::size_t path, std::size_t step, int c = 0, int k = 0) const {
        return ((path * n_steps + step) * static_cast<std::size_t>(dim_d) +
                static_cast<std::size_t>(c)) *
                   static_cast<std::size_t>(dim_k) +
               static_cast<std::size_t>(k);
    }
    std::size_t jump_idx(std::size_t path, std::size_t step, int c = 0, int m = 0) const {
        return ((path * n_steps + step) * static_cast<std::size_t>(dim_d) +
                static_cast<std::size_t>(c)) *
                   static_cast<std::size_t>(n_marks) +
               static_cast<std::size_t>(m);
    }
};

// Rolls the decomposition forward on the ensemble's noise:
//   X_{i+1} = X_i + F_i dt_i + Z_i dW_i + sum_j U_i(e_j) (dN_i[j] - q_j lambda dt_i),
// compensator masses frozen at the left node. Returns [path][node][d].
std::vector<double> roll_semimartingale(const DiscreteSemimartingale& semi,
                                        const PathEnsemble& ens, const JumpMeasureSpec& spec);

struct ItoIdentityReport {
    std::vector<double> node_discrepancy;  // L2 over paths of the cumulative gap
    double max_discrepancy = 0.0;
    double scale = 0.0;         // L2 over paths of the terminal weighted power change
    double max_relative = 0.0;  // max_discrepancy / max(scale, 1)
    CheckMeta meta;
};

// Verifies, pathwise and cumulatively at every node, the discrete analogue of
// the weighted power transformation of w_t |X_t|^p with weight
// w = exp((p/2) beta A + mu t) and p in (1,2):
//   d(w |X|^p) = w [ (p/2) beta |X|^p dA + mu |X|^p dt
//                    + p |X|^(p-2) X . (F dt + Z dW + U dN~)
//                    + (p/2) |X|^(p-2) 1_{X!=0} ((2-p)(|Z|^2 - |Z* x_dir|^2)
//                                                + (p-1) |Z|^2) dt ]
//              + w [ |X + U|^p - |X|^p - p |X|^(p-2) X . U ] dN.
// Lebesgue terms use left endpoints; the jump curvature term uses actual
// counts. Jump-only decompositions (no drift/diffusion, zero compensator,
// single jumps) telescope exactly; diffusion cases converge at order ~ 1/2.
ItoIdentityReport verify_power_ito_identity(const DiscreteSemimartingale& semi,
                                            const PathEnsemble& ens, const JumpMeasureSpec& spec,
                                            const WeightPaths& w, double p, double beta,
                                            double mu = 0.0);

// ---------------------------------------------------------------------------
// A priori estimate bundles
// ---------------------------------------------------------------------------

// Which display to check. P2 is the squared difference estimate; Pgt2_Y and
// Pgt2_ZU are the p > 2 difference estimates for the state and for the
// controls; Plt2 is the p in (1,2) difference estimate (generator of the
// first problem must not depend on the jump control); DataPge2 / DataPlt2
// bound a single solution by its data (terminal condition and the growth
// envelope phi).
enum class AprioriCase { P2, Pgt2_Y, Pgt2_ZU, Plt2, DataPge2, DataPlt2 };

std::string apriori_case_name(AprioriCase c);

// Difference (or single-solution) data entering an a priori display.
struct DifferenceData {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    int dim_d = 1;
    int dim_k = 1;
    int n_marks = 1;

    std::vector<double> dy;   // [path][node][d]
    std::vector<double> dz;   // [path][step][d][k]
    std::vector<double> du;   // [path][step][d][m]
    std::vector<double> dxi;  // [path][d]
    std::vector<double> df;   // [path][step][d], driver discrepancy (or phi, 0, ...)

    std::size_t n_nodes() const { return n_steps + 1; }
    std::size_t y_idx(std::size_t path, std::size_t node, int c = 0) const {
        return (path * n_nodes() + node) * static_cast<std::size_t>(dim_d) +
               static_cast<std::size_t>(c);
    }
    std::size_t z_idx(std::size_t path, std::size_t step, int c = 0, int k = 0) const {
        return ((path * n_steps + step) * static_cast<std::size_t>(dim_d) +
                static_cast<std::size_t>(c)) *
                   static_cast<std::size_t>(dim_k) +
               static_cast<std::size_t>(k);
    }
    std::size_t u_idx(std::size_t path, std::size_t step, int c = 0, int m = 0) const {
        return ((path * n_steps + step) * static_cast<std::size_t>(dim_d) +
                static_cast<std::size_t>(c)) *
                   static_cast<std::size_t>(n_marks) +
               static_cast<std::size_t>(m);
    }
    std::size_t f_idx(std::size_t path, std::size_t step, int c = 0) const {
        return (path * n_steps + step) * static_cast<std::size_t>(dim_d) +
               static_cast<std::size_t>(c);
    }
};

// Difference data of two solutions of two problems on one ensemble. The
// driver discrepancy f_hat is (f1 - f2) evaluated along the second solution;
// the terminal discrepancy is xi1 - xi2 pathwise.
DifferenceData make_difference_data(const ProblemSpec& p1, const ProblemSpec& p2,
                                    const DiscreteSolution& s1, const DiscreteSolution& s2,
                                    const PathEnsemble& ens);

// Single-solution data: dY = Y, dZ = Z, dU = U, dxi = xi, and df carries the
// growth envelope (phi, 0, ..., 0) so |df| = phi.
DifferenceData make_single_data(const ProblemSpec& problem, const DiscreteSolution& sol,
                                const PathEnsemble& ens);

// Exact degree-p scaling of every field by lambda.
DifferenceData scale_difference_data(const DifferenceData& d, double lambda);

// Monte Carlo evaluation of the requested display's LHS and RHS bundles.
// Throws std::invalid_argument when p is incompatible with the case, and
// PreconditionError when a p < 2 case is requested for a generator that
// depends on the jump control (pass the first problem to enable the check;
// the p < 2 cases require it).
EstimateReport apriori_check(AprioriCase c, const DifferenceData& d, const WeightPaths& w,
                             const PathEnsemble& ens, const JumpMeasureSpec& spec, double p,
                             double beta, const ProblemSpec* problem1 = nullptr);

// ---------------------------------------------------------------------------
// Contraction of the frozen-control sweep
// ---------------------------------------------------------------------------

// The proof-side lower bound on beta for a contraction, given the free Young
// parameter rho:  beta >= 1 + 2 (p - 1) rho^(1/(p-1)).
double contraction_beta_threshold(double p, double rho);

struct ContractionEstimate {
    double factor = 0.0;        // worst output/input distance ratio over pairs
    double factor_sigma = 0.0;  // delta-method sigma of the worst pair's ratio
    std::size_t argmax_pair = 0;
    std::vector<double> per_pair;
    double beta = 1.0;
};

// Applies one frozen-control backward sweep to both members of every input
// pair and measures the Lipschitz ratio in the iteration metric (the B-norm
// used by the Picard loop). Throws DegeneratePairError when an input pair has
// zero distance.
ContractionEstimate estimate_contraction_factor(
    const ProblemSpec& problem, const PathEnsemble& ens, const WeightPaths& w,
    const RegressionConfig& cfg, double beta,
    std::span<const std::pair<DiscreteSolution, DiscreteSolution>> pairs);

// ---------------------------------------------------------------------------
// Localization convergence
// ---------------------------------------------------------------------------

struct LocalizationReport {
    std::vector<double> levels;
    std::vector<double> e2_distances;           // consecutive-level distance, E-norm at p = 2
    std::vector<double> driver_discrepancies;   // E sum e^{beta A} |f_n - f_m|^2 / a^2 dt
    std::vector<DiscreteSolution> solutions;    // one per level
    bool nonincreasing(double slack_fraction) const;
};

// Solves the localized problem at each level (levels must be increasing,
// p >= 2) and reports the distances between consecutive levels. Both reported
// sequences are expected to be nonincreasing up to Monte Carlo noise; levels
// at or beyond the realized maximum of a coincide exactly.
LocalizationReport verify_localization_convergence(const ProblemSpec& problem,
                                                   const PathEnsemble& ens, const WeightPaths& w,
                                                   std::span<const double> levels, double p,
                                                   double beta, const RegressionConfig& cfg);

}  // namespace jbsde
