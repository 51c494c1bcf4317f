#include "jbsde/conditions.hpp"

#include <algorithm>
#include <cmath>

#include "jbsde/math_util.hpp"
#include "jbsde/rng.hpp"

namespace jbsde {

namespace {

void fill_box(Xoshiro256pp& rng, double radius, std::span<double> out) {
    for (auto& v : out) v = radius * (2.0 * rng.uniform() - 1.0);
}

struct Worst {
    double excess = 0.0;
    std::string witness;
    std::size_t violations = 0;

    void update(double e, const std::string& w) {
        if (e > 0.0) {
            ++violations;
            if (e > excess) {
                excess = e;
                witness = w;
            }
        }
    }
};

HypothesisResult finish(const std::string& name, std::size_t n, const Worst& w) {
    HypothesisResult r;
    r.name = name;
    r.n_probes = n;
    r.n_violations = w.violations;
    r.worst = w.excess;
    r.witness = w.witness;
    return r;
}

}  // namespace

const HypothesisResult* ConditionReport::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

ConditionReport probe_conditions(const ProblemSpec& problem, const PathEnsemble& ens,
                                 const WeightPaths& weights, const ProbeSpec& spec) {
    const int d = problem.dim_d;
    const int k = problem.dim_k;
    const int m = static_cast<int>(problem.jump_spec.n_marks());
    const std::size_t dz = static_cast<std::size_t>(d * k);
    const std::size_t du = static_cast<std::size_t>(d * m);

    Xoshiro256pp rng(spec.seed, kSaltProbe, 0);
    std::vector<double> y(static_cast<std::size_t>(d)), y2(static_cast<std::size_t>(d));
    std::vector<double> z(dz), z2(dz), u(du), u2(du);
    std::vector<double> f1(static_cast<std::size_t>(d)), f2(static_cast<std::size_t>(d));
    std::vector<double> zero_z(dz, 0.0), zero_u(du, 0.0);

    Worst w2, w3, w4, w6;

    for (std::size_t s = 0; s < spec.n_samples; ++s) {
        const std::size_t path = static_cast<std::size_t>(rng.next() % ens.n_paths);
        const std::size_t node = static_cast<std::size_t>(rng.next() % ens.n_steps());
        const double t = ens.grid.times[node];
        const auto xs = ens.x_node(path, node);
        const std::string where = "t=" + std::to_string(t) + " path=" + std::to_string(path);

        fill_box(rng, problem.probe_y_radius, y);
        fill_box(rng, problem.probe_y_radius, y2);
        fill_box(rng, problem.probe_z_radius, z);
        fill_box(rng, problem.probe_z_radius, z2);
        fill_box(rng, problem.probe_u_radius, u);
        fill_box(rng, problem.probe_u_radius, u2);

        GeneratorArgs a;
        a.t = t;
        a.path = path;
        a.step = node;
        a.x = xs;

        // H2: <y - y', f(y) - f(y')> <= alpha |y - y'|^2 at shared (z, u).
        {
            a.z = z;
            a.u = u;
            a.y = y;
            evaluate_generator(problem, a, f1);
            a.y = y2;
            evaluate_generator(problem, a, f2);
            double lhs = 0.0, dy2 = 0.0;
            for (int c = 0; c < d; ++c) {
                const double dy = y[static_cast<std::size_t>(c)] - y2[static_cast<std::size_t>(c)];
                lhs += dy * (f1[static_cast<std::size_t>(c)] - f2[static_cast<std::size_t>(c)]);
                dy2 += dy * dy;
            }
            const double alpha = problem.alpha ? problem.alpha(t, xs) : 0.0;
            const double rhs = alpha * dy2 + spec.tolerance * (1.0 + dy2);
            w2.update(lhs - rhs, where);
        }

        // H3: |f(y,z,u) - f(y,z',u')| <= lz |z - z'|_F + lu |u - u'|_Q.
        {
            a.y = y;
            a.z = z;
            a.u = u;
            evaluate_generator(problem, a, f1);
            a.z = z2;
            a.u = u2;
            evaluate_generator(problem, a, f2);
            double df = 0.0;
            for (int c = 0; c < d; ++c)
                df += sq(f1[static_cast<std::size_t>(c)] - f2[static_cast<std::size_t>(c)]);
            df = std::sqrt(df);
            double dzf = 0.0;
            for (std::size_t i = 0; i < dz; ++i) dzf += sq(z[i] - z2[i]);
            double duq = 0.0;
            for (int j = 0; j < m; ++j) {
                double comp = 0.0;
                for (int c = 0; c < d; ++c)
                    comp += sq(u[static_cast<std::size_t>(c * m + j)] -
                               u2[static_cast<std::size_t>(c * m + j)]);
                duq += comp * compensator_rate(problem.jump_spec, static_cast<std::size_t>(j), t, xs);
            }
            const double lz = problem.lipschitz_z ? problem.lipschitz_z(t, xs) : 0.0;
            const double lu = problem.lipschitz_u ? problem.lipschitz_u(t, xs) : 0.0;
            const double rhs =
                lz * std::sqrt(dzf) + lu * std::sqrt(duq) + spec.tolerance * (1.0 + df);
            w3.update(df - rhs, where);
        }

        // H4: |f(y, 0, 0)| <= phi + g |y|.
        {
            a.y = y;
            a.z = zero_z;
            a.u = zero_u;
            evaluate_generator(problem, a, f1);
            const double lhs = vec_norm(f1);
            const double phi = problem.phi_growth ? problem.phi_growth(t, xs) : 1.0;
            const double g = problem.g_growth ? problem.g_growth(t, xs) : 0.0;
            const double rhs = phi + g * vec_norm(y) + spec.tolerance * (1.0 + lhs);
            w4.update(lhs - rhs, where);
        }

        // H6: continuity in y. Bisect a random segment into the half with the
        // larger driver deviation; once the bracket is below h_floor, the
        // deviation across it must have vanished. Continuous drivers pass
        // because the bracket endpoints converge; a step keeps its gap inside
        // the bracket and is flagged.
        {
            a.z = z;
            a.u = u;
            std::vector<double> lo = y, hi(static_cast<std::size_t>(d));
            fill_box(rng, problem.probe_y_radius, hi);
            a.y = lo;
            evaluate_generator(problem, a, f1);  // f(lo)
            a.y = hi;
            evaluate_generator(problem, a, f2);  // f(hi)
            std::vector<double> mid(static_cast<std::size_t>(d)),
                fm(static_cast<std::size_t>(d));
            double seg = 0.0;
            for (int c = 0; c < d; ++c)
                seg += sq(hi[static_cast<std::size_t>(c)] - lo[static_cast<std::size_t>(c)]);
            seg = std::sqrt(seg);
            while (seg > spec.h_floor) {
                for (int c = 0; c < d; ++c)
                    mid[static_cast<std::size_t>(c)] = 0.5 * (lo[static_cast<std::size_t>(c)] +
                                                              hi[static_cast<std::size_t>(c)]);
                a.y = mid;
                evaluate_generator(problem, a, fm);
                double dev_lo = 0.0, dev_hi = 0.0;
                for (int c = 0; c < d; ++c) {
                    dev_lo += sq(fm[static_cast<std::size_t>(c)] - f1[static_cast<std::size_t>(c)]);
                    dev_hi += sq(f2[static_cast<std::size_t>(c)] - fm[static_cast<std::size_t>(c)]);
                }
                if (dev_lo >= dev_hi) {
                    hi = mid;
                    f2 = fm;
                } else {
                    lo = mid;
                    f1 = fm;
                }
                seg *= 0.5;
            }
            double gap = 0.0;
            for (int c = 0; c < d; ++c)
                gap += sq(f2[static_cast<std::size_t>(c)] - f1[static_cast<std::size_t>(c)]);
            gap = std::sqrt(gap);
            const double allowance = 1e-3 * (1.0 + vec_norm(f1)) + spec.tolerance;
            w6.update(gap - allowance, where);
        }
    }

    ConditionReport rep;
    rep.entries.push_back(finish("H2", spec.n_samples, w2));
    rep.entries.push_back(finish("H3", spec.n_samples, w3));
    rep.entries.push_back(finish("H4", spec.n_samples, w4));
    rep.entries.push_back(finish("H6", spec.n_samples, w6));

    // Integrability estimates under the hypothesis weights.
    const double p = problem.p;
    const double w_term = std::max(p - 1.0, p / 2.0);
    const double w_grow = std::max(p - 1.0, 1.0);
    const TerminalData td = accumulate_terminal_data(problem.jump_spec, ens);
    std::vector<double> xi(static_cast<std::size_t>(d));
    std::vector<double> term_vals(ens.n_paths), grow_vals(ens.n_paths);
    for (std::size_t path = 0; path < ens.n_paths; ++path) {
        TerminalArgs ta;
        ta.path = path;
        ta.x = ens.x_node(path, ens.n_steps());
        ta.jump_totals = std::span<const double>(
            td.jump_totals.data() + path * static_cast<std::size_t>(m), static_cast<std::size_t>(m));
        ta.compensator_totals = std::span<const double>(
            td.compensator_totals.data() + path * static_cast<std::size_t>(m),
            static_cast<std::size_t>(m));
        evaluate_terminal(problem, ta, xi);
        const double aT = weights.A[weights.idx(path, weights.n_nodes - 1)];
        term_vals[path] =
            std::exp(w_term * problem.beta * aT) * std::pow(vec_norm(xi), p);
        double acc = 0.0;
        for (std::size_t i = 0; i < ens.n_steps(); ++i) {
            const std::size_t idx = weights.idx(path, i);
            acc += std::exp(w_grow * problem.beta * weights.A[idx]) *
                   std::pow(std::abs(weights.phi[idx]), p) * ens.grid.dt(i);
        }
        grow_vals[path] = acc;
    }
    rep.h1_terminal_estimate = mean_std_error(term_vals).mean;
    rep.h4_growth_estimate = mean_std_error(grow_vals).mean;

    rep.all_passed = true;
    for (const auto& e : rep.entries)
        if (e.n_violations > 0) rep.all_passed = false;
    return rep;
}

}  // namespace jbsde
