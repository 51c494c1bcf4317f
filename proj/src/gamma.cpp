#include "jbsde/gamma.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "jbsde/errors.hpp"

namespace jbsde {

namespace {

double coeff_a2(const ProblemSpec& pr, double t, std::span<const double> x) {
    const double g = pr.g_growth ? pr.g_growth(t, x) : 0.0;
    const double lz = pr.lipschitz_z ? pr.lipschitz_z(t, x) : 0.0;
    const double lu = pr.lipschitz_u ? pr.lipschitz_u(t, x) : 0.0;
    return g + lz * lz + lu * lu;
}

}  // namespace

GammaTransform make_gamma_transform(const ProblemSpec& problem, const PathEnsemble& ens,
                                    const WeightPaths& weights, double eps) {
    if (!(eps >= 0.0)) throw std::invalid_argument("transform margin eps must be nonnegative");
    GammaTransform gt;
    gt.eps = eps;
    gt.n_paths = ens.n_paths;
    gt.n_nodes = ens.grid.n_nodes();
    gt.gamma.assign(gt.n_paths * gt.n_nodes, 1.0);
    for (std::size_t path = 0; path < gt.n_paths; ++path) {
        double g = 1.0;
        for (std::size_t node = 0; node + 1 < gt.n_nodes; ++node) {
            gt.gamma[path * gt.n_nodes + node] = g;
            const std::size_t k = weights.idx(path, node);
            const double a2 = weights.a[k] * weights.a[k];
            const double rate = weights.alpha[k] + eps * a2 + eps;
            g *= std::exp(rate * ens.grid.dt(node));
            if (!std::isfinite(g) || g == 0.0)
                throw TransformOverflowError(
                    "reweighting factor left the representable range at path " +
                    std::to_string(path) + ", node " + std::to_string(node + 1) +
                    "; rescale the horizon or the coefficients");
        }
        gt.gamma[path * gt.n_nodes + (gt.n_nodes - 1)] = g;
    }

    gt.transformed = problem;
    gt.transformed.name = problem.name + "_gamma";
    auto table = std::make_shared<std::vector<double>>(gt.gamma);
    const std::size_t n_nodes = gt.n_nodes;
    const int d = problem.dim_d;

    CoefficientFn base_alpha = problem.alpha;
    ProblemSpec base = problem;  // copy with the original callbacks for wrapping
    gt.transformed.alpha = [base, eps](double t, std::span<const double> x) {
        return -eps * coeff_a2(base, t, x) - eps;
    };

    GeneratorFn base_gen = problem.generator;
    gt.transformed.generator = [base, base_gen, base_alpha, table, n_nodes, d, eps](
                                   const GeneratorArgs& a, std::span<double> out) {
        const double g = (*table)[a.path * n_nodes + a.step];
        const double rate =
            (base_alpha ? base_alpha(a.t, a.x) : 0.0) + eps * coeff_a2(base, a.t, a.x) + eps;
        if (base_gen) {
            std::vector<double> ys(a.y.begin(), a.y.end());
            std::vector<double> zs(a.z.begin(), a.z.end());
            std::vector<double> us(a.u.begin(), a.u.end());
            for (auto& v : ys) v /= g;
            for (auto& v : zs) v /= g;
            for (auto& v : us) v /= g;
            GeneratorArgs scaled = a;
            scaled.y = ys;
            scaled.z = zs;
            scaled.u = us;
            base_gen(scaled, out);
            for (auto& v : out) v *= g;
        } else {
            for (auto& v : out) v = 0.0;
        }
        for (int c = 0; c < d; ++c) out[c] -= rate * a.y[c];
    };

    TerminalFn base_term = problem.terminal;
    gt.transformed.terminal = [base_term, table, n_nodes](const TerminalArgs& a,
                                                          std::span<double> out) {
        if (base_term) {
            base_term(a, out);
        } else {
            for (auto& v : out) v = 0.0;
        }
        const double g = (*table)[a.path * n_nodes + (n_nodes - 1)];
        for (auto& v : out) v *= g;
    };
    return gt;
}

DiscreteSolution gamma_apply(const GammaTransform& gt, const DiscreteSolution& sol,
                             GammaDirection direction) {
    if (sol.n_paths != gt.n_paths || sol.n_nodes() != gt.n_nodes)
        throw std::invalid_argument("solution and transform disagree on shape");
    DiscreteSolution out = sol;
    out.problem_name = sol.problem_name + (direction == GammaDirection::Forward ? "+g" : "-g");
    for (std::size_t path = 0; path < sol.n_paths; ++path) {
        for (std::size_t node = 0; node < sol.n_nodes(); ++node) {
            const double g = gt.at(path, node);
            const double s = direction == GammaDirection::Forward ? g : 1.0 / g;
            for (int c = 0; c < sol.dim_d; ++c) out.y[sol.y_idx(path, node, c)] *= s;
            if (node < sol.n_steps) {
                for (int c = 0; c < sol.dim_d; ++c) {
                    for (int k = 0; k < sol.dim_k; ++k) out.z[sol.z_idx(path, node, c, k)] *= s;
                    for (int m = 0; m < sol.n_marks; ++m) out.u[sol.u_idx(path, node, c, m)] *= s;
                }
            }
        }
    }
    return out;
}

}  // namespace jbsde
