#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "jbsde/ensemble.hpp"

namespace jbsde {

// Driver evaluation context. (path, step) identify the trajectory so wrapped
// generators (weight-rescaled, localized) can consult per-path tables; plain
// problems ignore them.
struct GeneratorArgs {
    double t = 0.0;
    std::size_t path = 0;
    std::size_t step = 0;
    std::span<const double> x;  // factor state, dim_x
    std::span<const double> y;  // dim_d
    std::span<const double> z;  // dim_d x dim_k, row-major
    std::span<const double> u;  // dim_d x n_marks, row-major
};

struct TerminalArgs {
    std::size_t path = 0;
    std::span<const double> x;                   // terminal factor state
    std::span<const double> jump_totals;         // per mark, sum of counts
    std::span<const double> compensator_totals;  // per mark, sum of q*lambda*dt
};

using GeneratorFn = std::function<void(const GeneratorArgs&, std::span<double> out)>;
using TerminalFn = std::function<void(const TerminalArgs&, std::span<double> out)>;
using CoefficientFn = std::function<double(double t, std::span<const double> x)>;

// Data of one equation: exponents, dimensions, driver, terminal condition and
// the coefficient processes entering the admissibility hypotheses
//   H1 terminal integrability          H2 monotonicity in y (coefficient alpha)
//   H3 Lipschitz in (z, u)             H4 growth |f(t,y,0,0)| <= phi + g|y|
//   H5 floor a^2 = g + lz^2 + lu^2 >= epsilon_floor
//   H6 continuity in y.
struct ProblemSpec {
    std::string name;
    int dim_d = 1;
    int dim_k = 1;
    double p = 2.0;
    double beta = 1.0;
    double epsilon_floor = 1e-8;

    GeneratorFn generator;  // null means f = 0
    TerminalFn terminal;    // null means xi = 0

    CoefficientFn alpha;        // H2 coefficient
    CoefficientFn lipschitz_z;  // H3, z side
    CoefficientFn lipschitz_u;  // H3, u side (against the kernel-weighted norm)
    CoefficientFn phi_growth;   // H4 additive term, >= 1
    CoefficientFn g_growth;     // H4 coefficient of |y|

    JumpMeasureSpec jump_spec;

    // Structural metadata used by preconditions and shortcut logic.
    bool depends_on_z = false;
    bool depends_on_u = false;

    // Declared probe box for the numeric hypothesis checks.
    double probe_y_radius = 2.0;
    double probe_z_radius = 2.0;
    double probe_u_radius = 2.0;
};

void evaluate_generator(const ProblemSpec& problem, const GeneratorArgs& args,
                        std::span<double> out);
void evaluate_terminal(const ProblemSpec& problem, const TerminalArgs& args,
                       std::span<double> out);

// Per-path terminal data assembled from an ensemble (terminal factor state,
// total jump counts, total compensator masses along the left endpoints).
struct TerminalData {
    std::vector<double> jump_totals;         // [path][mark]
    std::vector<double> compensator_totals;  // [path][mark]
};
TerminalData accumulate_terminal_data(const JumpMeasureSpec& spec, const PathEnsemble& ens);

// A problem together with the factor dynamics that make it simulable.
struct BuiltProblem {
    ProblemSpec problem;
    FactorConfig factor;
    std::string description;
};

// Named test problems addressable by key:
//   zero               f = 0, xi = 0
//   linear_y           f = 0.5 y, xi = 1, closed-form initial value e^{0.5}
//   brownian_terminal  f = 0, xi = W_T^(1)
//   jump_terminal      f = 0, xi = compensated terminal count of mark 1
//   monotone_cubic     f = -y^3 (componentwise), xi = W_T^(1)
//   lipschitz_zu       f = -0.5 y + 0.25 z + 0.2 u(e_1)
//   state_dependent_a  f = -(1 + x^2) y, xi = W_T^(1), growth g = 1 + x^2
BuiltProblem make_builtin_problem(const std::string& key, double p = 2.0, double beta = 1.0);

std::vector<std::string> builtin_problem_keys();

// Single mark e_1 = (1) with constant kernel mass and intensity.
JumpMeasureSpec unit_mark_spec(double kernel_mass = 1.0, double intensity = 1.0);

// Ensemble with the problem's own jump measure and factor dynamics.
PathEnsemble make_problem_ensemble(const BuiltProblem& bp, const TimeGrid& grid,
                                   std::size_t n_paths, std::uint64_t seed);

}  // namespace jbsde
