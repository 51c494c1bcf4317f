#include "jbsde/solver.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "jbsde/errors.hpp"
#include "jbsde/math_util.hpp"

namespace jbsde {

namespace {

// Damped fixed point for y = m + f(t, x, y, z, u) dt. Returns the settled y in
// place; throws ImplicitStepError with a local Lipschitz surrogate on failure.
void implicit_y_step(const ProblemSpec& problem, const RegressionConfig& cfg,
                     const GeneratorArgs& base_args, std::span<const double> m, double dt,
                     std::span<double> y, std::span<double> f_out, std::size_t step) {
    const int d = problem.dim_d;
    for (int c = 0; c < d; ++c) y[c] = m[c];
    if (!problem.generator) return;

    GeneratorArgs args = base_args;
    args.y = std::span<const double>(y.data(), static_cast<std::size_t>(d));

    std::vector<double> y_prev(static_cast<std::size_t>(d));
    std::vector<double> f_prev(static_cast<std::size_t>(d));
    const double theta = cfg.implicit_damping;
    double last_dy = 0.0, last_df = 0.0;
    for (int it = 0; it < cfg.implicit_max_iters; ++it) {
        evaluate_generator(problem, args, f_out);
        double delta = 0.0, ynorm = 0.0;
        for (int c = 0; c < d; ++c) {
            const double target = m[c] + f_out[c] * dt;
            const double next = (1.0 - theta) * y[c] + theta * target;
            delta += sq(next - y[c]);
            y_prev[c] = y[c];
            y[c] = next;
            ynorm += sq(next);
        }
        delta = std::sqrt(delta);
        ynorm = std::sqrt(ynorm);
        if (!std::isfinite(delta) || !std::isfinite(ynorm))
            throw ImplicitStepError(
                "implicit y-step diverged at step " + std::to_string(step) +
                " (iterate overflow); reduce the step size or relax the driver");
        if (it > 0) {
            double dy = 0.0, df = 0.0;
            for (int c = 0; c < d; ++c) {
                dy += sq(y_prev[c] - y[c]);
                df += sq(f_prev[c] - f_out[c]);
            }
            last_dy = std::sqrt(dy);
            last_df = std::sqrt(df);
        }
        for (int c = 0; c < d; ++c) f_prev[c] = f_out[c];
        if (delta <= cfg.implicit_tol * (1.0 + ynorm)) return;
    }
    const double surrogate = last_dy > 0.0 ? dt * last_df / last_dy : 0.0;
    throw ImplicitStepError("implicit y-step failed to settle at step " + std::to_string(step) +
                            " (local Lipschitz surrogate dt*L ~ " + std::to_string(surrogate) +
                            "); reduce the step size or relax the driver");
}

std::shared_ptr<std::vector<double>> clone_or_zero(const std::vector<double>* src,
                                                   std::size_t size) {
    auto out = std::make_shared<std::vector<double>>(size, 0.0);
    if (src) {
        if (src->size() != size)
            throw std::invalid_argument("frozen control block has wrong size");
        *out = *src;
    }
    return out;
}

}  // namespace

DiscreteSolution solve_backward(const ProblemSpec& problem, const PathEnsemble& ens,
                                const WeightPaths& weights, const RegressionConfig& cfg,
                                Coupling coupling, const FrozenControls& frozen) {
    (void)weights;
    const std::size_t n_paths = ens.n_paths;
    const std::size_t n_steps = ens.n_steps();
    const int d = problem.dim_d;
    const int k = problem.dim_k;
    const int m = static_cast<int>(problem.jump_spec.n_marks());
    if (ens.dim_k != k) throw std::invalid_argument("ensemble Brownian dimension mismatch");
    if (ens.n_marks != m) throw std::invalid_argument("ensemble mark count mismatch");
    if (coupling == Coupling::FrozenZU && (!frozen.z || !frozen.u))
        throw std::invalid_argument("frozen coupling requires control paths");

    DiscreteSolution sol;
    sol.n_paths = n_paths;
    sol.n_steps = n_steps;
    sol.dim_d = d;
    sol.dim_k = k;
    sol.n_marks = m;
    sol.problem_name = problem.name;
    sol.scheme_summary = "regression degree " + std::to_string(cfg.basis_degree) + ", ridge " +
                         std::to_string(cfg.ridge);
    sol.allocate();

    // Terminal slice is the terminal condition exactly.
    const TerminalData td = accumulate_terminal_data(problem.jump_spec, ens);
    {
        std::vector<double> xi(static_cast<std::size_t>(d));
        for (std::size_t path = 0; path < n_paths; ++path) {
            TerminalArgs ta;
            ta.path = path;
            ta.x = ens.x_node(path, n_steps);
            ta.jump_totals = std::span<const double>(td.jump_totals.data() + path * m,
                                                     static_cast<std::size_t>(m));
            ta.compensator_totals = std::span<const double>(
                td.compensator_totals.data() + path * m, static_cast<std::size_t>(m));
            evaluate_terminal(problem, ta, xi);
            for (int c = 0; c < d; ++c) sol.y[sol.y_idx(path, n_steps, c)] = xi[c];
        }
    }

    std::vector<double> target(n_paths), fitted(n_paths);
    std::vector<double> rate(n_paths * static_cast<std::size_t>(m));
    std::vector<double> mcond(n_paths * static_cast<std::size_t>(d));
    std::vector<double> yv(static_cast<std::size_t>(d)), fv(static_cast<std::size_t>(d));

    for (std::size_t i = n_steps; i-- > 0;) {
        const double t = ens.grid.times[i];
        const double dt = ens.grid.dt(i);

        // The operator only reads node-i states. Dimensions that carry no
        // spread across paths (deterministic factors, the initial node) would
        // make the polynomial design rank-deficient, so they are dropped and
        // the fit degrades gracefully toward the plain mean.
        std::vector<int> kept;
        for (int c = 0; c < ens.dim_x; ++c) {
            double lo = ens.x_node(0, i)[static_cast<std::size_t>(c)], hi = lo;
            for (std::size_t path = 1; path < n_paths; ++path) {
                const double v = ens.x_node(path, i)[static_cast<std::size_t>(c)];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (hi - lo > 1e-12 * (1.0 + std::abs(lo) + std::abs(hi))) kept.push_back(c);
        }
        const int dim_s = static_cast<int>(kept.size());
        std::vector<double> state_i(n_paths * static_cast<std::size_t>(dim_s));
        for (std::size_t path = 0; path < n_paths; ++path) {
            const auto xs = ens.x_node(path, i);
            for (int c = 0; c < dim_s; ++c)
                state_i[path * static_cast<std::size_t>(dim_s) + static_cast<std::size_t>(c)] =
                    xs[static_cast<std::size_t>(kept[static_cast<std::size_t>(c)])];
        }
        RegressionOperator op(state_i, n_paths, dim_s, cfg);

        // Compensator rates frozen at the left endpoint.
        for (std::size_t path = 0; path < n_paths; ++path) {
            const auto xs = ens.x_node(path, i);
            for (int j = 0; j < m; ++j)
                rate[path * static_cast<std::size_t>(m) + static_cast<std::size_t>(j)] =
                    compensator_rate(problem.jump_spec, static_cast<std::size_t>(j), t, xs);
        }

        // U from compensated-increment projections.
        for (int c = 0; c < d; ++c) {
            for (int j = 0; j < m; ++j) {
                for (std::size_t path = 0; path < n_paths; ++path) {
                    const double comp =
                        rate[path * static_cast<std::size_t>(m) + static_cast<std::size_t>(j)] * dt;
                    const double dntilde =
                        static_cast<double>(ens.dn_at(path, i, j)) - comp;
                    target[path] = sol.y[sol.y_idx(path, i + 1, c)] * dntilde;
                }
                op.fit(target, fitted);
                for (std::size_t path = 0; path < n_paths; ++path) {
                    const double comp =
                        rate[path * static_cast<std::size_t>(m) + static_cast<std::size_t>(j)] * dt;
                    sol.u[sol.u_idx(path, i, c, j)] = comp > 0.0 ? fitted[path] / comp : 0.0;
                }
            }
        }

        // Z from Brownian projections.
        for (int c = 0; c < d; ++c) {
            for (int kk = 0; kk < k; ++kk) {
                for (std::size_t path = 0; path < n_paths; ++path)
                    target[path] =
                        sol.y[sol.y_idx(path, i + 1, c)] * ens.dw_at(path, i, kk) / dt;
                op.fit(target, fitted);
                for (std::size_t path = 0; path < n_paths; ++path)
                    sol.z[sol.z_idx(path, i, c, kk)] = fitted[path];
            }
        }

        // Conditional mean of the next slice.
        for (int c = 0; c < d; ++c) {
            for (std::size_t path = 0; path < n_paths; ++path)
                target[path] = sol.y[sol.y_idx(path, i + 1, c)];
            op.fit(target, fitted);
            for (std::size_t path = 0; path < n_paths; ++path)
                mcond[path * static_cast<std::size_t>(d) + static_cast<std::size_t>(c)] =
                    fitted[path];
        }

        // Implicit y-step per path.
        for (std::size_t path = 0; path < n_paths; ++path) {
            GeneratorArgs args;
            args.t = t;
            args.path = path;
            args.step = i;
            args.x = ens.x_node(path, i);
            if (coupling == Coupling::ExplicitZU) {
                args.z = std::span<const double>(sol.z.data() + sol.z_idx(path, i),
                                                 static_cast<std::size_t>(d * k));
                args.u = std::span<const double>(sol.u.data() + sol.u_idx(path, i),
                                                 static_cast<std::size_t>(d * m));
            } else {
                args.z = std::span<const double>(frozen.z->data() + sol.z_idx(path, i),
                                                 static_cast<std::size_t>(d * k));
                args.u = std::span<const double>(frozen.u->data() + sol.u_idx(path, i),
                                                 static_cast<std::size_t>(d * m));
            }
            const std::span<const double> mrow(
                mcond.data() + path * static_cast<std::size_t>(d), static_cast<std::size_t>(d));
            implicit_y_step(problem, cfg, args, mrow, dt, yv, fv, i);
            for (int c = 0; c < d; ++c) sol.y[sol.y_idx(path, i, c)] = yv[static_cast<std::size_t>(c)];
        }
    }
    return sol;
}

double picard_metric(const DiscreteSolution& diff, const WeightPaths& w, const PathEnsemble& ens,
                     const JumpMeasureSpec& spec, double p, double beta) {
    std::vector<double> powers(diff.n_paths);
    for (std::size_t path = 0; path < diff.n_paths; ++path) {
        powers[path] =
            pathwise_norm_power(NormKind::S_pA, Component::Y, diff, w, ens, spec, p, beta, path) +
            pathwise_norm_power(NormKind::H_p, Component::Z, diff, w, ens, spec, p, beta, path) +
            pathwise_norm_power(NormKind::L_pN, Component::U, diff, w, ens, spec, p, beta, path) +
            pathwise_norm_power(NormKind::L_pQ, Component::U, diff, w, ens, spec, p, beta, path);
    }
    const double mean = pairwise_sum(powers) / static_cast<double>(powers.size());
    return std::pow(mean, 1.0 / p);
}

PicardTrace picard_iterate(const ProblemSpec& problem, const PathEnsemble& ens,
                           const WeightPaths& weights, const PicardOptions& opt,
                           const PicardStart& start) {
    PicardTrace trace;
    const std::size_t n_paths = ens.n_paths;
    const std::size_t n_steps = ens.n_steps();
    const std::size_t zsize = n_paths * n_steps * static_cast<std::size_t>(problem.dim_d) *
                              static_cast<std::size_t>(problem.dim_k);
    const std::size_t usize = n_paths * n_steps * static_cast<std::size_t>(problem.dim_d) *
                              problem.jump_spec.n_marks();

    auto z_cur = clone_or_zero(start.z0, zsize);
    auto u_cur = clone_or_zero(start.u0, usize);

    DiscreteSolution prev;
    prev.n_paths = n_paths;
    prev.n_steps = n_steps;
    prev.dim_d = problem.dim_d;
    prev.dim_k = problem.dim_k;
    prev.n_marks = static_cast<int>(problem.jump_spec.n_marks());
    prev.allocate();
    prev.z = *z_cur;
    prev.u = *u_cur;
    if (start.y0) {
        if (start.y0->size() != prev.y.size())
            throw std::invalid_argument("initial y block has wrong size");
        prev.y = *start.y0;
    }

    const bool constant_map = !problem.depends_on_z && !problem.depends_on_u;
    const int iter_cap = constant_map ? 1 : opt.max_iters;

    for (int it = 0; it < iter_cap; ++it) {
        FrozenControls frozen;
        frozen.z = z_cur.get();
        frozen.u = u_cur.get();
        DiscreteSolution next =
            solve_backward(problem, ens, weights, opt.regression, Coupling::FrozenZU, frozen);
        const DiscreteSolution diff = solution_difference(next, prev);
        const double dist =
            picard_metric(diff, weights, ens, problem.jump_spec, problem.p, problem.beta);
        trace.distances.push_back(dist);
        trace.iterations = it + 1;
        prev = std::move(next);
        *z_cur = prev.z;
        *u_cur = prev.u;
        if (constant_map || dist <= opt.tol) {
            trace.converged = true;
            break;
        }
    }
    trace.solution = std::move(prev);
    return trace;
}

LocalizedProblem localize_generator(const ProblemSpec& problem, const PathEnsemble& ens,
                                    const WeightPaths& weights, double level) {
    if (!(level > 0.0)) throw std::invalid_argument("localization level must be positive");
    LocalizedProblem loc;
    loc.level = level;
    loc.tau_node.resize(ens.n_paths);
    for (std::size_t path = 0; path < ens.n_paths; ++path) {
        std::size_t tau = weights.n_nodes - 1;
        for (std::size_t node = 0; node < weights.n_nodes; ++node) {
            if (weights.a[weights.idx(path, node)] >= level) {
                tau = node;
                break;
            }
        }
        loc.tau_node[path] = tau;
    }
    loc.problem = problem;
    loc.problem.name = problem.name + "_loc" + std::to_string(static_cast<int>(level));
    auto tau = std::make_shared<std::vector<std::size_t>>(loc.tau_node);
    if (problem.generator) {
        GeneratorFn base = problem.generator;
        loc.problem.generator = [base, tau](const GeneratorArgs& a, std::span<double> out) {
            if (a.step <= (*tau)[a.path]) {
                base(a, out);
            } else {
                for (auto& v : out) v = 0.0;
            }
        };
    }
    CoefficientFn lz = problem.lipschitz_z, lu = problem.lipschitz_u;
    loc.problem.lipschitz_z = [lz, level](double t, std::span<const double> x) {
        return std::min(lz ? lz(t, x) : 0.0, level);
    };
    loc.problem.lipschitz_u = [lu, level](double t, std::span<const double> x) {
        return std::min(lu ? lu(t, x) : 0.0, level);
    };
    return loc;
}

void radial_clamp(std::span<const double> x, double n, std::span<double> out) {
    const double nx = vec_norm(x);
    const double denom = std::max(nx, n);
    double scale = denom > 0.0 ? n / denom : 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) out[c] = x[c] * scale;
    // Rounding in the scaled components can leave the recomputed norm a few
    // ulps outside the ball; back the scale off until |out| <= n holds in the
    // arithmetic every caller uses. Inside the ball scale is exactly 1, so the
    // loop never runs and out == x bitwise.
    while (scale > 0.0 && vec_norm(out) > n) {
        scale = std::nextafter(scale, 0.0);
        for (std::size_t c = 0; c < x.size(); ++c) out[c] = x[c] * scale;
    }
}

ProblemSpec truncate_data(const ProblemSpec& problem, double level) {
    if (!(level > 0.0)) throw std::invalid_argument("truncation level must be positive");
    ProblemSpec tr = problem;
    tr.name = problem.name + "_trunc" + std::to_string(static_cast<int>(level));
    if (problem.terminal) {
        TerminalFn base = problem.terminal;
        tr.terminal = [base, level](const TerminalArgs& a, std::span<double> out) {
            base(a, out);
            std::vector<double> tmp(out.begin(), out.end());
            radial_clamp(tmp, level, out);
        };
    }
    if (problem.generator) {
        GeneratorFn base = problem.generator;
        const int d = problem.dim_d;
        tr.generator = [base, level, d](const GeneratorArgs& a, std::span<double> out) {
            base(a, out);
            std::vector<double> zero_y(static_cast<std::size_t>(d), 0.0);
            std::vector<double> f0(static_cast<std::size_t>(d));
            GeneratorArgs a0 = a;
            a0.y = zero_y;
            base(a0, f0);
            std::vector<double> f0c(static_cast<std::size_t>(d));
            radial_clamp(f0, level, f0c);
            for (int c = 0; c < d; ++c) out[c] += f0c[c] - f0[c];
        };
    }
    return tr;
}

ResidualReport bsde_residual(const ProblemSpec& problem, const DiscreteSolution& sol,
                             const PathEnsemble& ens, const WeightPaths& weights) {
    (void)weights;
    const std::size_t n_paths = sol.n_paths;
    const std::size_t n_steps = sol.n_steps;
    const int d = sol.dim_d;
    const int k = sol.dim_k;
    const int m = sol.n_marks;

    std::vector<std::vector<double>> rsq(sol.n_nodes(), std::vector<double>(n_paths, 0.0));
    std::vector<double> acc(static_cast<std::size_t>(d));
    std::vector<double> fv(static_cast<std::size_t>(d));

    for (std::size_t path = 0; path < n_paths; ++path) {
        // acc carries xi + sum f dt - sum Z dW - sum U dNtilde from node i upward.
        for (int c = 0; c < d; ++c) acc[static_cast<std::size_t>(c)] = sol.y[sol.y_idx(path, n_steps, c)];
        for (std::size_t node = n_steps + 1; node-- > 0;) {
            if (node < n_steps) {
                const std::size_t i = node;
                const double t = ens.grid.times[i];
                const double dt = ens.grid.dt(i);
                GeneratorArgs args;
                args.t = t;
                args.path = path;
                args.step = i;
                args.x = ens.x_node(path, i);
                args.y = std::span<const double>(sol.y.data() + sol.y_idx(path, i),
                                                 static_cast<std::size_t>(d));
                args.z = std::span<const double>(sol.z.data() + sol.z_idx(path, i),
                                                 static_cast<std::size_t>(d * k));
                args.u = std::span<const double>(sol.u.data() + sol.u_idx(path, i),
                                                 static_cast<std::size_t>(d * m));
                evaluate_generator(problem, args, fv);
                for (int c = 0; c < d; ++c) {
                    double zdw = 0.0;
                    for (int kk = 0; kk < k; ++kk)
                        zdw += sol.z[sol.z_idx(path, i, c, kk)] * ens.dw_at(path, i, kk);
                    double undn = 0.0;
                    for (int j = 0; j < m; ++j) {
                        const double comp = compensator_rate(problem.jump_spec,
                                                             static_cast<std::size_t>(j), t,
                                                             ens.x_node(path, i)) *
                                            dt;
                        const double dntilde = static_cast<double>(ens.dn_at(path, i, j)) - comp;
                        undn += sol.u[sol.u_idx(path, i, c, j)] * dntilde;
                    }
                    acc[static_cast<std::size_t>(c)] +=
                        fv[static_cast<std::size_t>(c)] * dt - zdw - undn;
                }
            }
            double r2 = 0.0;
            for (int c = 0; c < d; ++c)
                r2 += sq(sol.y[sol.y_idx(path, node, c)] - acc[static_cast<std::size_t>(c)]);
            rsq[node][path] = r2;
        }
    }

    ResidualReport rep;
    rep.node_l2.resize(sol.n_nodes());
    for (std::size_t node = 0; node < sol.n_nodes(); ++node) {
        rep.node_l2[node] =
            std::sqrt(pairwise_sum(rsq[node]) / static_cast<double>(n_paths));
        rep.max_l2 = std::max(rep.max_l2, rep.node_l2[node]);
    }
    return rep;
}

}  // namespace jbsde
