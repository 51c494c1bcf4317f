#include "jbsde/norms.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "jbsde/errors.hpp"
#include "jbsde/math_util.hpp"

namespace jbsde {

namespace {

double kappa(double p) { return std::min(p / 2.0, 1.0); }

void require_finite(double v, const char* what) {
    if (!std::isfinite(v))
        throw NumericalBlowupError(std::string("non-finite value while accumulating ") + what);
}

double sup_y_power(const DiscreteSolution& sol, const WeightPaths& w, double p, double beta,
                   std::size_t path) {
    const double kap = kappa(p);
    double best = 0.0;
    for (std::size_t node = 0; node < sol.n_nodes(); ++node) {
        double ysq = 0.0;
        for (int c = 0; c < sol.dim_d; ++c) ysq += sq(sol.y[sol.y_idx(path, node, c)]);
        const double v = std::exp(kap * beta * w.A[w.idx(path, node)]) * std::pow(std::sqrt(ysq), p);
        require_finite(v, "the weighted supremum of |Y|^p");
        best = std::max(best, v);
    }
    return best;
}

double clock_y_power(const DiscreteSolution& sol, const WeightPaths& w, const PathEnsemble& ens,
                     double p, double beta, std::size_t path) {
    const double kap = kappa(p);
    double acc = 0.0;
    for (std::size_t i = 0; i < sol.n_steps; ++i) {
        double ysq = 0.0;
        for (int c = 0; c < sol.dim_d; ++c) ysq += sq(sol.y[sol.y_idx(path, i, c)]);
        acc += std::exp(kap * beta * w.A[w.idx(path, i)]) * std::pow(std::sqrt(ysq), p) *
               w.zeta2(path, i) * ens.grid.dt(i);
    }
    return acc;
}

double z_quadratic(const DiscreteSolution& sol, const WeightPaths& w, const PathEnsemble& ens,
                   double beta, std::size_t path) {
    double acc = 0.0;
    for (std::size_t i = 0; i < sol.n_steps; ++i) {
        double zsq = 0.0;
        for (int c = 0; c < sol.dim_d; ++c)
            for (int k = 0; k < sol.dim_k; ++k) zsq += sq(sol.z[sol.z_idx(path, i, c, k)]);
        acc += std::exp(beta * w.A[w.idx(path, i)]) * zsq * ens.grid.dt(i);
    }
    return acc;
}

double u_kernel_quadratic(const DiscreteSolution& sol, const WeightPaths& w,
                          const PathEnsemble& ens, const JumpMeasureSpec& spec, double beta,
                          std::size_t path) {
    double acc = 0.0;
    for (std::size_t i = 0; i < sol.n_steps; ++i) {
        acc += std::exp(beta * w.A[w.idx(path, i)]) * mark_norm_sq(spec, ens, path, i, sol) *
               ens.grid.dt(i);
    }
    return acc;
}

double u_counting_quadratic(const DiscreteSolution& sol, const WeightPaths& w,
                            const PathEnsemble& ens, double beta, std::size_t path) {
    double acc = 0.0;
    for (std::size_t i = 0; i < sol.n_steps; ++i) {
        double inner = 0.0;
        for (int j = 0; j < sol.n_marks; ++j) {
            const auto cnt = ens.dn_at(path, i, j);
            if (cnt == 0) continue;
            double usq = 0.0;
            for (int c = 0; c < sol.dim_d; ++c) usq += sq(sol.u[sol.u_idx(path, i, c, j)]);
            inner += usq * static_cast<double>(cnt);
        }
        acc += std::exp(beta * w.A[w.idx(path, i)]) * inner;
    }
    return acc;
}

}  // namespace

std::string norm_kind_name(NormKind k) {
    switch (k) {
        case NormKind::S_p: return "S_p";
        case NormKind::S_pA: return "S_pA";
        case NormKind::H_p: return "H_p";
        case NormKind::L_pQ: return "L_pQ";
        case NormKind::L_pN: return "L_pN";
        case NormKind::B_p: return "B_p";
        case NormKind::frakL_p: return "frakL_p";
        case NormKind::E_p: return "E_p";
    }
    return "?";
}

double mark_norm_sq(const JumpMeasureSpec& spec, const PathEnsemble& ens, std::size_t path,
                    std::size_t step, const DiscreteSolution& sol) {
    const double t = ens.grid.times[step];
    const auto xs = ens.x_node(path, step);
    double acc = 0.0;
    for (std::size_t j = 0; j < spec.n_marks(); ++j) {
        double usq = 0.0;
        for (int c = 0; c < sol.dim_d; ++c)
            usq += sq(sol.u[sol.u_idx(path, step, c, static_cast<int>(j))]);
        acc += usq * compensator_rate(spec, j, t, xs);
    }
    return acc;
}

double pathwise_norm_power(NormKind kind, Component comp, const DiscreteSolution& sol,
                           const WeightPaths& w, const PathEnsemble& ens,
                           const JumpMeasureSpec& spec, double p, double beta, std::size_t path) {
    (void)comp;
    switch (kind) {
        case NormKind::S_p:
            return sup_y_power(sol, w, p, beta, path);
        case NormKind::S_pA:
            return clock_y_power(sol, w, ens, p, beta, path);
        case NormKind::H_p:
            return std::pow(z_quadratic(sol, w, ens, beta, path), p / 2.0);
        case NormKind::L_pQ:
            return std::pow(u_kernel_quadratic(sol, w, ens, spec, beta, path), p / 2.0);
        case NormKind::L_pN:
            return std::pow(u_counting_quadratic(sol, w, ens, beta, path), p / 2.0);
        case NormKind::B_p:
            return sup_y_power(sol, w, p, beta, path) + clock_y_power(sol, w, ens, p, beta, path);
        case NormKind::frakL_p:
            return std::pow(u_kernel_quadratic(sol, w, ens, spec, beta, path), p / 2.0) +
                   std::pow(u_counting_quadratic(sol, w, ens, beta, path), p / 2.0);
        case NormKind::E_p:
            return sup_y_power(sol, w, p, beta, path) + clock_y_power(sol, w, ens, p, beta, path) +
                   std::pow(z_quadratic(sol, w, ens, beta, path), p / 2.0) +
                   std::pow(u_kernel_quadratic(sol, w, ens, spec, beta, path), p / 2.0) +
                   std::pow(u_counting_quadratic(sol, w, ens, beta, path), p / 2.0);
    }
    throw std::logic_error("unreachable norm kind");
}

NormEstimate weighted_norm(NormKind kind, Component comp, const DiscreteSolution& sol,
                           const WeightPaths& w, const PathEnsemble& ens,
                           const JumpMeasureSpec& spec, double p, double beta) {
    if (!(p > 1.0)) throw std::invalid_argument("p must exceed 1");
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
    if (kind == NormKind::B_p && comp != Component::Y)
        throw std::invalid_argument("composite B_p norm applies to the Y component");
    if (kind == NormKind::frakL_p && comp != Component::U)
        throw std::invalid_argument("composite frakL_p norm applies to the U component");
    if (sol.n_paths != w.n_paths || sol.n_nodes() != w.n_nodes)
        throw std::invalid_argument("solution and weight paths disagree on shape");

    std::vector<double> powers(sol.n_paths);
    for (std::size_t path = 0; path < sol.n_paths; ++path) {
        powers[path] = pathwise_norm_power(kind, comp, sol, w, ens, spec, p, beta, path);
        require_finite(powers[path], norm_kind_name(kind).c_str());
    }
    const MeanStdErr ms = mean_std_error(powers);
    NormEstimate est;
    est.kind = kind;
    est.p = p;
    est.beta = beta;
    est.n_paths = sol.n_paths;
    est.value = std::pow(ms.mean, 1.0 / p);
    est.mc_std_error =
        ms.mean > 0.0 ? ms.std_error * est.value / (p * ms.mean) : ms.std_error;
    require_finite(est.value, "norm value");
    return est;
}

JumpNormRelation check_jump_norm_relation(const DiscreteSolution& sol, const WeightPaths& w,
                                          const PathEnsemble& ens, const JumpMeasureSpec& spec,
                                          double p, double beta) {
    if (!(p > 1.0)) throw std::invalid_argument("p must exceed 1");
    JumpNormRelation rel;
    std::vector<double> qp(sol.n_paths), np(sol.n_paths), margin(sol.n_paths);
    for (std::size_t path = 0; path < sol.n_paths; ++path) {
        qp[path] = std::pow(u_kernel_quadratic(sol, w, ens, spec, beta, path), p / 2.0);
        np[path] = std::pow(u_counting_quadratic(sol, w, ens, beta, path), p / 2.0);
    }
    const MeanStdErr qm = mean_std_error(qp);
    const MeanStdErr nm = mean_std_error(np);
    rel.q_side = qm.mean;
    rel.q_sigma = qm.std_error;
    rel.n_side = nm.mean;
    rel.n_sigma = nm.std_error;

    // Margin is estimated on per-path differences so shared randomness cancels.
    if (p > 2.0) {
        rel.constant = std::pow(p / 2.0, p / 2.0);
        for (std::size_t i = 0; i < margin.size(); ++i) margin[i] = rel.constant * np[i] - qp[i];
    } else if (p == 2.0) {
        rel.constant = 1.0;
        for (std::size_t i = 0; i < margin.size(); ++i) margin[i] = np[i] - qp[i];
    } else {
        rel.constant = 2.0;
        for (std::size_t i = 0; i < margin.size(); ++i) margin[i] = rel.constant * qp[i] - np[i];
    }
    const MeanStdErr mm = mean_std_error(margin);
    rel.margin = mm.mean;
    rel.margin_sigma = mm.std_error;
    const double scale = std::max({rel.q_side, rel.n_side, 1.0});
    const double slack = 3.0 * mm.std_error + 1e-12 * scale;
    rel.passed = (p == 2.0) ? std::abs(rel.margin) <= slack : rel.margin >= -slack;
    return rel;
}

}  // namespace jbsde
