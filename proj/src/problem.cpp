#include "jbsde/problem.hpp"

#include <cmath>
#include <stdexcept>

#include "jbsde/errors.hpp"
#include "jbsde/math_util.hpp"

namespace jbsde {

namespace {

std::string describe_point(const GeneratorArgs& a) {
    std::string s = "t=" + std::to_string(a.t) + " path=" + std::to_string(a.path) +
                    " step=" + std::to_string(a.step) + " |y|=";
    s += std::to_string(vec_norm(a.y));
    s += " |z|=" + std::to_string(vec_norm(a.z));
    s += " |u|=" + std::to_string(vec_norm(a.u));
    return s;
}

CoefficientFn constant_coeff(double v) {
    return [v](double, std::span<const double>) { return v; };
}

FactorConfig brownian_factor() {
    FactorConfig f;
    f.dim = 1;
    f.x0 = {0.0};
    f.diffusion = [](double, std::span<const double>, std::span<double> out) { out[0] = 1.0; };
    return f;
}

FactorConfig counting_factor() {
    FactorConfig f;
    f.dim = 1;
    f.x0 = {0.0};
    f.jump_coeff = [](double, std::span<const double>, std::size_t, std::span<double> out) {
        out[0] = 1.0;
    };
    return f;
}

}  // namespace

JumpMeasureSpec unit_mark_spec(double kernel_mass, double intensity) {
    JumpMeasureSpec spec;
    spec.marks = {{1.0}};
    spec.kernel_mass = [kernel_mass](std::size_t, double, std::span<const double>) {
        return kernel_mass;
    };
    spec.jump_intensity = [intensity](double, std::span<const double>) { return intensity; };
    return spec;
}

namespace {

void set_common(ProblemSpec& pr, double p, double beta) {
    pr.p = p;
    pr.beta = beta;
    pr.epsilon_floor = 1e-8;
    pr.alpha = constant_coeff(0.0);
    pr.lipschitz_z = constant_coeff(0.0);
    pr.lipschitz_u = constant_coeff(0.0);
    pr.phi_growth = constant_coeff(1.0);
    pr.g_growth = constant_coeff(1.0);
}

}  // namespace

void evaluate_generator(const ProblemSpec& problem, const GeneratorArgs& args,
                        std::span<double> out) {
    if (!problem.generator) {
        for (auto& v : out) v = 0.0;
        return;
    }
    problem.generator(args, out);
    if (!all_finite(out))
        throw GeneratorEvaluationError("generator returned a non-finite value at " +
                                       describe_point(args));
}

void evaluate_terminal(const ProblemSpec& problem, const TerminalArgs& args,
                       std::span<double> out) {
    if (!problem.terminal) {
        for (auto& v : out) v = 0.0;
        return;
    }
    problem.terminal(args, out);
    if (!all_finite(out))
        throw GeneratorEvaluationError("terminal condition returned a non-finite value at path " +
                                       std::to_string(args.path));
}

TerminalData accumulate_terminal_data(const JumpMeasureSpec& spec, const PathEnsemble& ens) {
    TerminalData td;
    const std::size_t m = spec.n_marks();
    td.jump_totals.assign(ens.n_paths * m, 0.0);
    td.compensator_totals.assign(ens.n_paths * m, 0.0);
    for (std::size_t p = 0; p < ens.n_paths; ++p) {
        for (std::size_t i = 0; i < ens.n_steps(); ++i) {
            const double t = ens.grid.times[i];
            const auto xs = ens.x_node(p, i);
            for (std::size_t j = 0; j < m; ++j) {
                td.jump_totals[p * m + j] += ens.dn_at(p, i, static_cast<int>(j));
                td.compensator_totals[p * m + j] +=
                    compensator_rate(spec, j, t, xs) * ens.grid.dt(i);
            }
        }
    }
    return td;
}

BuiltProblem make_builtin_problem(const std::string& key, double p, double beta) {
    BuiltProblem bp;
    ProblemSpec& pr = bp.problem;
    pr.name = key;
    pr.dim_d = 1;
    pr.dim_k = 1;
    set_common(pr, p, beta);
    pr.jump_spec = unit_mark_spec(1.0, 1.0);
    bp.factor = brownian_factor();

    if (key == "zero") {
        bp.description = "f = 0, xi = 0";
        pr.g_growth = constant_coeff(1.0);
    } else if (key == "linear_y") {
        bp.description = "f = 0.5 y, xi = 1; initial value e^{0.5}";
        pr.generator = [](const GeneratorArgs& a, std::span<double> out) { out[0] = 0.5 * a.y[0]; };
        pr.terminal = [](const TerminalArgs&, std::span<double> out) { out[0] = 1.0; };
        pr.alpha = constant_coeff(0.5);
        pr.g_growth = constant_coeff(0.5);
    } else if (key == "brownian_terminal") {
        bp.description = "f = 0, xi = terminal Brownian factor";
        pr.terminal = [](const TerminalArgs& a, std::span<double> out) { out[0] = a.x[0]; };
    } else if (key == "jump_terminal") {
        bp.description = "f = 0, xi = compensated terminal count of mark 1";
        pr.terminal = [](const TerminalArgs& a, std::span<double> out) {
            out[0] = a.jump_totals[0] - a.compensator_totals[0];
        };
        bp.factor = counting_factor();
    } else if (key == "monotone_cubic") {
        bp.description = "f = -y^3, xi = terminal Brownian factor";
        pr.generator = [](const GeneratorArgs& a, std::span<double> out) {
            for (std::size_t c = 0; c < out.size(); ++c) out[c] = -a.y[c] * a.y[c] * a.y[c];
        };
        pr.terminal = [](const TerminalArgs& a, std::span<double> out) { out[0] = a.x[0]; };
        // |{-y^3}| <= 1 + 4|y| holds on the declared probe box |y| <= 2.
        pr.g_growth = constant_coeff(4.0);
        pr.probe_y_radius = 2.0;
    } else if (key == "lipschitz_zu") {
        bp.description = "f = -0.5 y + 0.25 z + 0.2 u(e_1), xi = terminal Brownian factor";
        pr.generator = [](const GeneratorArgs& a, std::span<double> out) {
            out[0] = -0.5 * a.y[0] + 0.25 * a.z[0] + 0.2 * a.u[0];
        };
        pr.terminal = [](const TerminalArgs& a, std::span<double> out) { out[0] = a.x[0]; };
        pr.lipschitz_z = constant_coeff(0.25);
        // Kernel-weighted u-norm has q*lambda = 1, so the plain coefficient carries over.
        pr.lipschitz_u = constant_coeff(0.2);
        pr.g_growth = constant_coeff(0.5);
        pr.depends_on_z = true;
        pr.depends_on_u = true;
    } else if (key == "state_dependent_a") {
        bp.description = "f = -(1 + x^2) y, xi = terminal Brownian factor";
        pr.generator = [](const GeneratorArgs& a, std::span<double> out) {
            out[0] = -(1.0 + a.x[0] * a.x[0]) * a.y[0];
        };
        pr.terminal = [](const TerminalArgs& a, std::span<double> out) { out[0] = a.x[0]; };
        pr.g_growth = [](double, std::span<const double> x) { return 1.0 + x[0] * x[0]; };
    } else {
        throw std::invalid_argument("unknown problem key '" + key + "'");
    }
    return bp;
}

std::vector<std::string> builtin_problem_keys() {
    return {"zero",           "linear_y",     "brownian_terminal", "jump_terminal",
            "monotone_cubic", "lipschitz_zu", "state_dependent_a"};
}

PathEnsemble make_problem_ensemble(const BuiltProblem& bp, const TimeGrid& grid,
                                   std::size_t n_paths, std::uint64_t seed) {
    return make_ensemble(grid, bp.problem.jump_spec, bp.factor, n_paths, bp.problem.dim_k, seed);
}

}  // namespace jbsde
