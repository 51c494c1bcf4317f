#include "jbsde/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "jbsde/errors.hpp"
#include "jbsde/math_util.hpp"
#include "jbsde/rng.hpp"

namespace jbsde {

namespace {

constexpr double kQuadratureTol = 1e-10;
constexpr double kBoundSlack = 1e-9;

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

double fit_refinement_order(std::span<const double> dt, std::span<const double> err) {
    require(dt.size() == err.size() && dt.size() >= 2,
            "refinement fit needs matching lists of at least two points");
    double mx = 0.0, my = 0.0;
    const auto n = static_cast<double>(dt.size());
    std::vector<double> lx(dt.size()), ly(dt.size());
    for (std::size_t i = 0; i < dt.size(); ++i) {
        require(dt[i] > 0.0 && err[i] > 0.0, "refinement fit needs positive steps and errors");
        lx[i] = std::log(dt[i]);
        ly[i] = std::log(err[i]);
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < dt.size(); ++i) {
        sxx += sq(lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    require(sxx > 0.0, "refinement fit needs at least two distinct step sizes");
    return sxy / sxx;
}

// ---------------------------------------------------------------------------
// Power integral bound
// ---------------------------------------------------------------------------

PowerIntegralSample check_power_integral_bound(std::span<const double> x,
                                               std::span<const double> y, double p) {
    require(p > 2.0, "the power integral bound needs p > 2");
    require(!x.empty() && x.size() == y.size(),
            "the power integral bound needs matching nonempty vectors");

    const double q = p - 2.0;
    const double xnorm = vec_norm(x);

    double lhs = 0.0;
    if (xnorm == 0.0) {
        // The integrand reduces to (1 - r) r^q |y|^q whose integral is the
        // beta value 1/((q+1)(q+2)); the r^q endpoint cusp defeats the
        // quadrature error estimator, so use the exact value instead.
        lhs = std::pow(vec_norm(y), q) / ((q + 1.0) * (q + 2.0));
    } else {
        const auto integrand = [&](double r) {
            double s = 0.0;
            for (std::size_t c = 0; c < x.size(); ++c) s += sq(x[c] + r * y[c]);
            return (1.0 - r) * std::pow(s, 0.5 * q);
        };

        // For q < 1 the integrand has a kink where |x + r y| is smallest;
        // adaptive rules converge geometrically toward interval endpoints, so
        // split there.
        const double ynorm2 = dot(y, y);
        double split = ynorm2 > 0.0 ? -dot(x, y) / ynorm2 : 0.0;
        if (!(split > 0.0 && split < 1.0)) split = 0.0;

        using rule = boost::math::quadrature::gauss_kronrod<double, 31>;
        double est_error = 0.0;
        if (split > 0.0) {
            double e1 = 0.0, e2 = 0.0;
            lhs = rule::integrate(integrand, 0.0, split, 20, kQuadratureTol, &e1) +
                  rule::integrate(integrand, split, 1.0, 20, kQuadratureTol, &e2);
            est_error = e1 + e2;
        } else {
            lhs = rule::integrate(integrand, 0.0, 1.0, 20, kQuadratureTol, &est_error);
        }
        if (!(est_error <= kQuadratureTol * (1.0 + std::abs(lhs))))
            throw QuadratureToleranceError(
                "adaptive quadrature could not certify the 1e-10 tolerance (estimated error " +
                std::to_string(est_error) + ")");
    }

    const double xpow = std::pow(xnorm, q);  // 0 for x = 0 since q > 0
    PowerIntegralSample out;
    out.lhs = lhs;
    out.rhs = std::pow(3.0, 1.0 - p) * xpow;
    out.margin = xpow > 0.0 ? (lhs - out.rhs) / xpow : lhs - out.rhs;
    out.holds = lhs >= out.rhs - kBoundSlack * xpow;
    return out;
}

PowerIntegralSweep sweep_power_integral_bound(std::size_t n_samples, int dim, std::uint64_t seed,
                                              double p_max) {
    require(n_samples > 0 && dim > 0, "sweep needs positive sample count and dimension");
    require(p_max > 2.0, "sweep needs p_max > 2");

    Xoshiro256pp rng(seed, kSaltProbe, 0xb0u);
    GaussianSampler gauss(rng);
    const auto d = static_cast<std::size_t>(dim);
    std::vector<double> x(d), y(d);

    PowerIntegralSweep sweep;
    sweep.n_samples = n_samples;
    sweep.worst_margin = std::numeric_limits<double>::infinity();

    for (std::size_t s = 0; s < n_samples; ++s) {
        const double p = 2.0 + (p_max - 2.0) * rng.uniform_pos();
        for (auto& v : x) v = gauss();
        for (auto& v : y) v = gauss();

        // Regime rotation: y = 0; x = 0; then the three dilation regimes of
        // r0 = 2|x|/(3|y|) hit by rescaling y against the drawn x.
        const int regime = static_cast<int>(s % 5);
        if (regime == 0) {
            std::fill(y.begin(), y.end(), 0.0);
        } else if (regime == 1) {
            std::fill(x.begin(), x.end(), 0.0);
        } else {
            const double xn = vec_norm(x);
            const double yn = vec_norm(y);
            if (xn > 0.0 && yn > 0.0) {
                double r0 = 1.0;
                if (regime == 2) r0 = 0.05 + 0.44 * rng.uniform();        // r0 < 1/2
                else if (regime == 3) r0 = 0.5 + 0.49 * rng.uniform();    // r0 in [1/2, 1)
                else r0 = 1.0 + 3.0 * rng.uniform();                      // r0 >= 1
                const double target = 2.0 * xn / (3.0 * r0);
                for (auto& v : y) v *= target / yn;
            }
        }

        const PowerIntegralSample sample = check_power_integral_bound(x, y, p);
        if (!sample.holds) ++sweep.n_violations;
        if (sample.margin < sweep.worst_margin) {
            sweep.worst_margin = sample.margin;
            sweep.report.lhs = sample.lhs;
            sweep.report.rhs = sample.rhs;
            sweep.report.meta.p = p;
        }
    }

    sweep.report.name = "power_integral_bound";
    sweep.report.measured_ratio =
        sweep.report.rhs > 0.0 ? sweep.report.lhs / sweep.report.rhs : 0.0;
    sweep.report.slack_sigmas = 0.0;
    sweep.report.passed = sweep.n_violations == 0;
    sweep.report.meta.n_paths = n_samples;
    return sweep;
}

// ---------------------------------------------------------------------------
// Jump Taylor bound
// ---------------------------------------------------------------------------

double jump_curvature_constant(double p) {
    require(p > 1.0 && p < 2.0, "the jump curvature constant is defined for p in (1,2)");
    return 0.5 * p * (p - 1.0);
}

JumpTaylorSample check_jump_taylor_bound(std::span<const double> x,
                                         std::span<const double> y_jump, double p) {
    require(p > 1.0 && p < 2.0, "the jump Taylor bound needs p in (1,2)");
    require(!x.empty() && x.size() == y_jump.size(),
            "the jump Taylor bound needs matching nonempty vectors");

    const double xn = vec_norm(x);
    std::vector<double> xy(x.size());
    for (std::size_t c = 0; c < x.size(); ++c) xy[c] = x[c] + y_jump[c];
    const double xyn = vec_norm(xy);
    const double yn = vec_norm(y_jump);

    const double first_order = p * power_dir_weight(x, p) * dot(x, y_jump);
    const double a_new = std::pow(xyn, p);
    const double a_old = std::pow(xn, p);

    JumpTaylorSample out;
    out.lhs = a_new - a_old - first_order;
    const double big = std::max(xn, xyn);
    out.rhs = yn > 0.0 && big > 0.0
                  ? jump_curvature_constant(p) * sq(yn) * std::pow(big, p - 2.0)
                  : 0.0;
    out.margin = out.lhs - out.rhs;
    // Pure round-off guard at machine-epsilon scale; not a statistical slack.
    const double scale =
        std::abs(a_new) + std::abs(a_old) + std::abs(first_order) + std::abs(out.rhs);
    out.holds = out.margin >= -64.0 * std::numeric_limits<double>::epsilon() * scale;
    return out;
}

JumpTaylorSweep sweep_jump_taylor_bound(const DiscreteSolution& sol, const PathEnsemble& ens,
                                        double p) {
    require(p > 1.0 && p < 2.0, "the jump Taylor sweep needs p in (1,2)");
    require(sol.n_paths == ens.n_paths && sol.n_steps == ens.n_steps() &&
                sol.n_marks == ens.n_marks,
            "solution and ensemble shapes must match");

    const int d = sol.dim_d;
    std::vector<double> xv(static_cast<std::size_t>(d)), yv(static_cast<std::size_t>(d));

    JumpTaylorSweep sweep;
    sweep.worst_margin = std::numeric_limits<double>::infinity();
    bool any = false;

    for (std::size_t path = 0; path < sol.n_paths; ++path) {
        for (std::size_t step = 0; step < sol.n_steps; ++step) {
            for (int m = 0; m < sol.n_marks; ++m) {
                if (ens.dn_at(path, step, m) == 0) continue;
                for (int c = 0; c < d; ++c) {
                    xv[static_cast<std::size_t>(c)] = sol.y[sol.y_idx(path, step, c)];
                    yv[static_cast<std::size_t>(c)] = sol.u[sol.u_idx(path, step, c, m)];
                }
                const JumpTaylorSample sample = check_jump_taylor_bound(xv, yv, p);
                ++sweep.n_jumps;
                if (!sample.holds) {
                    ++sweep.n_violations;
                    if (sweep.witnesses.size() < 8)
                        sweep.witnesses.push_back(
                            "path " + std::to_string(path) + ", step " + std::to_string(step) +
                            ", mark " + std::to_string(m) + ", margin " +
                            std::to_string(sample.margin));
                }
                if (!any || sample.margin < sweep.worst_margin) {
                    any = true;
                    sweep.worst_margin = sample.margin;
                    sweep.report.lhs = sample.lhs;
                    sweep.report.rhs = sample.rhs;
                }
            }
        }
    }
    if (!any) sweep.worst_margin = 0.0;

    sweep.report.name = "jump_taylor_bound";
    sweep.report.measured_ratio =
        sweep.report.rhs != 0.0 ? sweep.report.lhs / sweep.report.rhs : 0.0;
    sweep.report.slack_sigmas = 0.0;
    sweep.report.passed = sweep.n_violations == 0;
    sweep.report.meta.p = p;
    sweep.report.meta.n_paths = sol.n_paths;
    sweep.report.meta.n_steps = sol.n_steps;
    sweep.report.meta.problem = sol.problem_name;
    return sweep;
}

// ---------------------------------------------------------------------------
// Discrete weighted-power identity
// ---------------------------------------------------------------------------

namespace {

void validate_semimartingale(const DiscreteSemimartingale& semi, const PathEnsemble& ens,
                             const JumpMeasureSpec& spec) {
    require(semi.n_paths == ens.n_paths && semi.n_steps == ens.n_steps(),
            "semimartingale and ensemble shapes must match");
    require(semi.dim_k == ens.dim_k && semi.n_marks == ens.n_marks,
            "semimartingale noise dimensions must match the ensemble");
    require(semi.n_marks == static_cast<int>(spec.n_marks()),
            "semimartingale mark count must match the jump measure");
    require(static_cast<int>(semi.x0.size()) == semi.dim_d,
            "semimartingale start value has wrong dimension");
    const auto np = semi.n_paths, ns = semi.n_steps;
    const auto d = static_cast<std::size_t>(semi.dim_d);
    require(semi.drift.empty() || semi.drift.size() == np * ns * d,
            "semimartingale drift block has wrong size");
    require(semi.vol.empty() ||
                semi.vol.size() == np * ns * d * static_cast<std::size_t>(semi.dim_k),
            "semimartingale volatility block has wrong size");
    require(semi.jump.empty() ||
                semi.jump.size() == np * ns * d * static_cast<std::size_t>(semi.n_marks),
            "semimartingale jump block has wrong size");
}

}  // namespace

std::vector<double> roll_semimartingale(const DiscreteSemimartingale& semi,
                                        const PathEnsemble& ens, const JumpMeasureSpec& spec) {
    validate_semimartingale(semi, ens, spec);
    const std::size_t np = semi.n_paths, ns = semi.n_steps;
    const int d = semi.dim_d;
    const auto dsz = static_cast<std::size_t>(d);

    std::vector<double> xpath(np * (ns + 1) * dsz, 0.0);
    for (std::size_t path = 0; path < np; ++path) {
        for (int c = 0; c < d; ++c) xpath[(path * (ns + 1)) * dsz + static_cast<std::size_t>(c)] =
            semi.x0[static_cast<std::size_t>(c)];
        for (std::size_t i = 0; i < ns; ++i) {
            const double t = ens.grid.times[i];
            const double dt = ens.grid.dt(i);
            const std::size_t base = (path * (ns + 1) + i) * dsz;
            const std::size_t next = base + dsz;
            for (int c = 0; c < d; ++c) {
                double inc = 0.0;
                if (!semi.drift.empty()) inc += semi.drift[semi.drift_idx(path, i, c)] * dt;
                if (!semi.vol.empty())
                    for (int k = 0; k < semi.dim_k; ++k)
                        inc += semi.vol[semi.vol_idx(path, i, c, k)] * ens.dw_at(path, i, k);
                if (!semi.jump.empty())
                    for (int m = 0; m < semi.n_marks; ++m) {
                        const double rate = compensator_rate(
                            spec, static_cast<std::size_t>(m), t, ens.x_node(path, i));
                        const double dntil =
                            static_cast<double>(ens.dn_at(path, i, m)) - rate * dt;
                        inc += semi.jump[semi.jump_idx(path, i, c, m)] * dntil;
                    }
                xpath[next + static_cast<std::size_t>(c)] =
                    xpath[base + static_cast<std::size_t>(c)] + inc;
            }
        }
    }
    return xpath;
}

ItoIdentityReport verify_power_ito_identity(const DiscreteSemimartingale& semi,
                                            const PathEnsemble& ens, const JumpMeasureSpec& spec,
                                            const WeightPaths& w, double p, double beta,
                                            double mu) {
    require(p > 1.0 && p < 2.0, "the weighted power identity needs p in (1,2)");
    validate_semimartingale(semi, ens, spec);
    require(w.n_paths == semi.n_paths && w.n_nodes == semi.n_steps + 1,
            "weight paths must match the semimartingale shape");

    const std::size_t np = semi.n_paths, ns = semi.n_steps;
    const int d = semi.dim_d;
    const auto dsz = static_cast<std::size_t>(d);
    const std::vector<double> xpath = roll_semimartingale(semi, ens, spec);

    std::vector<double> gap_sq(ns + 1, 0.0);
    std::vector<double> terminal_sq(np, 0.0);

    std::vector<double> xi(dsz), xj(dsz), uvec(dsz);
    for (std::size_t path = 0; path < np; ++path) {
        const auto weight_at = [&](std::size_t node) {
            return std::exp(0.5 * p * beta * w.A[w.idx(path, node)] +
                            mu * ens.grid.times[node]);
        };
        const double w0 = weight_at(0);
        for (int c = 0; c < d; ++c) xi[static_cast<std::size_t>(c)] =
            xpath[(path * (ns + 1)) * dsz + static_cast<std::size_t>(c)];
        const double start_power = w0 * std::pow(vec_norm(xi), p);

        double rhs_cum = 0.0;
        for (std::size_t i = 0; i < ns; ++i) {
            const double t = ens.grid.times[i];
            const double dt = ens.grid.dt(i);
            const double dA = w.A[w.idx(path, i + 1)] - w.A[w.idx(path, i)];
            const double wi = weight_at(i);
            const std::size_t base = (path * (ns + 1) + i) * dsz;
            for (int c = 0; c < d; ++c) xi[static_cast<std::size_t>(c)] = xpath[base + static_cast<std::size_t>(c)];
            const double xn = vec_norm(xi);
            const double xp = std::pow(xn, p);
            const double dirw = power_dir_weight(xi, p);  // |x|^{p-2}, 0 at x = 0

            // Clock and time decay of the weight.
            rhs_cum += wi * xp * (0.5 * p * beta * dA + mu * dt);

            // First-order terms against the decomposition of dX.
            if (!semi.drift.empty()) {
                double xdotf = 0.0;
                for (int c = 0; c < d; ++c)
                    xdotf += xi[static_cast<std::size_t>(c)] * semi.drift[semi.drift_idx(path, i, c)];
                rhs_cum += wi * p * dirw * xdotf * dt;
            }
            if (!semi.vol.empty()) {
                double xdotz = 0.0;
                for (int k = 0; k < semi.dim_k; ++k) {
                    double col = 0.0;
                    for (int c = 0; c < d; ++c)
                        col += xi[static_cast<std::size_t>(c)] * semi.vol[semi.vol_idx(path, i, c, k)];
                    xdotz += col * ens.dw_at(path, i, k);
                }
                rhs_cum += wi * p * dirw * xdotz;

                // Second-order diffusion correction.
                if (xn > 0.0) {
                    double frob = 0.0, proj = 0.0;
                    for (int k = 0; k < semi.dim_k; ++k) {
                        double col = 0.0;
                        for (int c = 0; c < d; ++c) {
                            const double z = semi.vol[semi.vol_idx(path, i, c, k)];
                            frob += sq(z);
                            col += xi[static_cast<std::size_t>(c)] * z / xn;
                        }
                        proj += sq(col);
                    }
                    rhs_cum += wi * 0.5 * p * dirw *
                               ((2.0 - p) * (frob - proj) + (p - 1.0) * frob) * dt;
                }
            }
            if (!semi.jump.empty()) {
                for (int m = 0; m < semi.n_marks; ++m) {
                    const double rate =
                        compensator_rate(spec, static_cast<std::size_t>(m), t, ens.x_node(path, i));
                    const double count = static_cast<double>(ens.dn_at(path, i, m));
                    const double dntil = count - rate * dt;
                    double xdotu = 0.0;
                    for (int c = 0; c < d; ++c) {
                        uvec[static_cast<std::size_t>(c)] = semi.jump[semi.jump_idx(path, i, c, m)];
                        xdotu += xi[static_cast<std::size_t>(c)] * uvec[static_cast<std::size_t>(c)];
                    }
                    rhs_cum += wi * p * dirw * xdotu * dntil;
                    if (count > 0.0) {
                        for (int c = 0; c < d; ++c)
                            xj[static_cast<std::size_t>(c)] = xi[static_cast<std::size_t>(c)] + uvec[static_cast<std::size_t>(c)];
                        const double curv =
                            std::pow(vec_norm(xj), p) - xp - p * dirw * xdotu;
                        rhs_cum += wi * curv * count;
                    }
                }
            }

            // Cumulative two-side gap at the right node.
            const std::size_t nxt = base + dsz;
            for (int c = 0; c < d; ++c) xj[static_cast<std::size_t>(c)] = xpath[nxt + static_cast<std::size_t>(c)];
            const double lhs_cum = weight_at(i + 1) * std::pow(vec_norm(xj), p) - start_power;
            if (i + 1 == ns) terminal_sq[path] = sq(lhs_cum);
            gap_sq[i + 1] += sq(lhs_cum - rhs_cum);
        }
    }

    ItoIdentityReport rep;
    rep.node_discrepancy.resize(ns + 1, 0.0);
    for (std::size_t i = 0; i <= ns; ++i) {
        rep.node_discrepancy[i] = std::sqrt(gap_sq[i] / static_cast<double>(np));
        rep.max_discrepancy = std::max(rep.max_discrepancy, rep.node_discrepancy[i]);
    }
    rep.scale = std::sqrt(pairwise_sum(terminal_sq) / static_cast<double>(np));
    rep.max_relative = rep.max_discrepancy / std::max(rep.scale, 1e-300);
    if (rep.scale == 0.0 && rep.max_discrepancy == 0.0) rep.max_relative = 0.0;
    rep.meta.p = p;
    rep.meta.beta = beta;
    rep.meta.n_paths = np;
    rep.meta.n_steps = ns;
    return rep;
}

// ---------------------------------------------------------------------------
// A priori estimate bundles
// ---------------------------------------------------------------------------

std::string apriori_case_name(AprioriCase c) {
    switch (c) {
        case AprioriCase::P2: return "P2";
        case AprioriCase::Pgt2_Y: return "Pgt2_Y";
        case AprioriCase::Pgt2_ZU: return "Pgt2_ZU";
        case AprioriCase::Plt2: return "Plt2";
        case AprioriCase::DataPge2: return "DataPge2";
        case AprioriCase::DataPlt2: return "DataPlt2";
    }
    return "unknown";
}

namespace {

void validate_difference_data(const DifferenceData& d, const PathEnsemble& ens,
                              const WeightPaths& w) {
    require(d.n_paths == ens.n_paths && d.n_steps == ens.n_steps(),
            "difference data and ensemble shapes must match");
    require(d.dim_k == ens.dim_k && d.n_marks == ens.n_marks,
            "difference data noise dimensions must match the ensemble");
    require(w.n_paths == d.n_paths && w.n_nodes == d.n_nodes(),
            "weight paths must match the difference data shape");
    const auto dsz = static_cast<std::size_t>(d.dim_d);
    require(d.dy.size() == d.n_paths * d.n_nodes() * dsz, "dY block has wrong size");
    require(d.dz.size() == d.n_paths * d.n_steps * dsz * static_cast<std::size_t>(d.dim_k),
            "dZ block has wrong size");
    require(d.du.size() == d.n_paths * d.n_steps * dsz * static_cast<std::size_t>(d.n_marks),
            "dU block has wrong size");
    require(d.dxi.size() == d.n_paths * dsz, "terminal block has wrong size");
    require(d.df.size() == d.n_paths * d.n_steps * dsz, "driver block has wrong size");
}

struct PathBundle {
    double lhs = 0.0;
    double rhs = 0.0;
};

PathBundle apriori_path_bundle(AprioriCase c, const DifferenceData& d, const WeightPaths& w,
                               const PathEnsemble& ens, const JumpMeasureSpec& spec, double p,
                               double beta, std::size_t path) {
    const int dim = d.dim_d;
    const auto dsz = static_cast<std::size_t>(dim);
    const bool sub2 = c == AprioriCase::Plt2 || c == AprioriCase::DataPlt2;
    const double kappa_y = sub2 ? 0.5 * p : 1.0;

    // Per-path building blocks.
    double sup_y = 0.0;
    double int_y_dA = 0.0;
    double int_z = 0.0, int_uq = 0.0, int_un = 0.0;
    double rhs_driver = 0.0;

    const double driver_exp = c == AprioriCase::Pgt2_ZU ? (p - 1.0) * beta : beta;
    const double terminal_exp = c == AprioriCase::Pgt2_ZU ? (p - 1.0) * beta
                                : sub2                    ? 0.5 * p * beta
                                                          : beta;

    std::vector<double> buf(dsz);
    for (std::size_t node = 0; node < d.n_nodes(); ++node) {
        const double A = w.A[w.idx(path, node)];
        for (int cc = 0; cc < dim; ++cc) buf[static_cast<std::size_t>(cc)] = d.dy[d.y_idx(path, node, cc)];
        const double ypow = std::pow(vec_norm(buf), p);
        sup_y = std::max(sup_y, std::exp(kappa_y * beta * A) * ypow);
        if (node < d.n_steps) {
            const double dA = w.A[w.idx(path, node + 1)] - w.A[w.idx(path, node)];
            int_y_dA += std::exp(kappa_y * beta * A) * ypow * dA;
        }
    }

    for (std::size_t i = 0; i < d.n_steps; ++i) {
        const double t = ens.grid.times[i];
        const double dt = ens.grid.dt(i);
        const double A = w.A[w.idx(path, i)];
        const double ew = std::exp(beta * A);

        double zfrob = 0.0;
        for (int cc = 0; cc < dim; ++cc)
            for (int k = 0; k < d.dim_k; ++k) zfrob += sq(d.dz[d.z_idx(path, i, cc, k)]);
        int_z += ew * zfrob * dt;

        double uq = 0.0, un = 0.0;
        for (int m = 0; m < d.n_marks; ++m) {
            double usq = 0.0;
            for (int cc = 0; cc < dim; ++cc) usq += sq(d.du[d.u_idx(path, i, cc, m)]);
            const double rate =
                compensator_rate(spec, static_cast<std::size_t>(m), t, ens.x_node(path, i));
            uq += usq * rate;
            un += usq * static_cast<double>(ens.dn_at(path, i, m));
        }
        int_uq += ew * uq * dt;
        int_un += ew * un;

        for (int cc = 0; cc < dim; ++cc) buf[static_cast<std::size_t>(cc)] = d.df[d.f_idx(path, i, cc)];
        rhs_driver += std::exp(driver_exp * A) * std::pow(vec_norm(buf), p) * dt;
    }

    for (int cc = 0; cc < dim; ++cc) buf[static_cast<std::size_t>(cc)] = d.dxi[path * dsz + static_cast<std::size_t>(cc)];
    const double A_T = w.A[w.idx(path, d.n_steps)];
    const double rhs_terminal = std::exp(terminal_exp * A_T) * std::pow(vec_norm(buf), p);

    const double half_p = 0.5 * p;
    PathBundle out;
    switch (c) {
        case AprioriCase::P2:
            out.lhs = sup_y + int_y_dA + int_z + int_uq;
            break;
        case AprioriCase::Pgt2_Y:
        case AprioriCase::DataPge2:
            out.lhs = sup_y + int_y_dA;
            break;
        case AprioriCase::Pgt2_ZU:
            out.lhs = std::pow(int_z, half_p) + std::pow(int_uq, half_p) +
                      std::pow(int_un, half_p);
            break;
        case AprioriCase::Plt2:
            out.lhs = sup_y + int_y_dA + std::pow(int_z, half_p) + std::pow(int_uq, half_p) +
                      std::pow(int_un, half_p);
            break;
        case AprioriCase::DataPlt2:
            out.lhs = sup_y + std::pow(int_z, half_p) + std::pow(int_uq, half_p) +
                      std::pow(int_un, half_p);
            break;
    }
    out.rhs = rhs_terminal + rhs_driver;
    return out;
}

}  // namespace

DifferenceData make_difference_data(const ProblemSpec& p1, const ProblemSpec& p2,
                                    const DiscreteSolution& s1, const DiscreteSolution& s2,
                                    const PathEnsemble& ens) {
    require(s1.n_paths == s2.n_paths && s1.n_steps == s2.n_steps && s1.dim_d == s2.dim_d &&
                s1.dim_k == s2.dim_k && s1.n_marks == s2.n_marks,
            "solutions must share a shape");
    require(p1.dim_d == s1.dim_d && p2.dim_d == s2.dim_d,
            "problems and solutions must share the state dimension");

    DifferenceData d;
    d.n_paths = s1.n_paths;
    d.n_steps = s1.n_steps;
    d.dim_d = s1.dim_d;
    d.dim_k = s1.dim_k;
    d.n_marks = s1.n_marks;

    d.dy.resize(s1.y.size());
    for (std::size_t i = 0; i < s1.y.size(); ++i) d.dy[i] = s1.y[i] - s2.y[i];
    d.dz.resize(s1.z.size());
    for (std::size_t i = 0; i < s1.z.size(); ++i) d.dz[i] = s1.z[i] - s2.z[i];
    d.du.resize(s1.u.size());
    for (std::size_t i = 0; i < s1.u.size(); ++i) d.du[i] = s1.u[i] - s2.u[i];

    const auto dsz = static_cast<std::size_t>(d.dim_d);
    const int m = d.n_marks;

    // Terminal discrepancy xi1 - xi2 pathwise.
    d.dxi.assign(d.n_paths * dsz, 0.0);
    const TerminalData td1 = accumulate_terminal_data(p1.jump_spec, ens);
    const TerminalData td2 = accumulate_terminal_data(p2.jump_spec, ens);
    std::vector<double> xi1(dsz), xi2(dsz);
    for (std::size_t path = 0; path < d.n_paths; ++path) {
        TerminalArgs ta;
        ta.path = path;
        ta.x = ens.x_node(path, d.n_steps);
        ta.jump_totals = std::span<const double>(
            td1.jump_totals.data() + path * static_cast<std::size_t>(m),
            static_cast<std::size_t>(m));
        ta.compensator_totals = std::span<const double>(
            td1.compensator_totals.data() + path * static_cast<std::size_t>(m),
            static_cast<std::size_t>(m));
        evaluate_terminal(p1, ta, xi1);
        ta.jump_totals = std::span<const double>(
            td2.jump_totals.data() + path * static_cast<std::size_t>(m),
            static_cast<std::size_t>(m));
        ta.compensator_totals = std::span<const double>(
            td2.compensator_totals.data() + path * static_cast<std::size_t>(m),
            static_cast<std::size_t>(m));
        evaluate_terminal(p2, ta, xi2);
        for (std::size_t c = 0; c < dsz; ++c) d.dxi[path * dsz + c] = xi1[c] - xi2[c];
    }

    // Driver discrepancy (f1 - f2) along the second solution.
    d.df.assign(d.n_paths * d.n_steps * dsz, 0.0);
    std::vector<double> f1(dsz), f2(dsz);
    for (std::size_t path = 0; path < d.n_paths; ++path) {
        for (std::size_t i = 0; i < d.n_steps; ++i) {
            GeneratorArgs ga;
            ga.t = ens.grid.times[i];
            ga.path = path;
            ga.step = i;
            ga.x = ens.x_node(path, i);
            ga.y = std::span<const double>(s2.y.data() + s2.y_idx(path, i), dsz);
            ga.z = std::span<const double>(s2.z.data() + s2.z_idx(path, i),
                                           dsz * static_cast<std::size_t>(d.dim_k));
            ga.u = std::span<const double>(s2.u.data() + s2.u_idx(path, i),
                                           dsz * static_cast<std::size_t>(m));
            evaluate_generator(p1, ga, f1);
            evaluate_generator(p2, ga, f2);
            for (std::size_t c = 0; c < dsz; ++c)
                d.df[d.f_idx(path, i, static_cast<int>(c))] = f1[c] - f2[c];
        }
    }
    return d;
}

DifferenceData make_single_data(const ProblemSpec& problem, const DiscreteSolution& sol,
                                const PathEnsemble& ens) {
    DifferenceData d;
    d.n_paths = sol.n_paths;
    d.n_steps = sol.n_steps;
    d.dim_d = sol.dim_d;
    d.dim_k = sol.dim_k;
    d.n_marks = sol.n_marks;
    d.dy = sol.y;
    d.dz = sol.z;
    d.du = sol.u;

    const auto dsz = static_cast<std::size_t>(d.dim_d);
    const int m = d.n_marks;
    d.dxi.assign(d.n_paths * dsz, 0.0);
    const TerminalData td = accumulate_terminal_data(problem.jump_spec, ens);
    std::vector<double> xi(dsz);
    for (std::size_t path = 0; path < d.n_paths; ++path) {
        TerminalArgs ta;
        ta.path = path;
        ta.x = ens.x_node(path, d.n_steps);
        ta.jump_totals = std::span<const double>(
            td.jump_totals.data() + path * static_cast<std::size_t>(m),
            static_cast<std::size_t>(m));
        ta.compensator_totals = std::span<const double>(
            td.compensator_totals.data() + path * static_cast<std::size_t>(m),
            static_cast<std::size_t>(m));
        evaluate_terminal(problem, ta, xi);
        for (std::size_t c = 0; c < dsz; ++c) d.dxi[path * dsz + c] = xi[c];
    }

    d.df.assign(d.n_paths * d.n_steps * dsz, 0.0);
    for (std::size_t path = 0; path < d.n_paths; ++path)
        for (std::size_t i = 0; i < d.n_steps; ++i) {
            const double phi = problem.phi_growth
                                   ? problem.phi_growth(ens.grid.times[i], ens.x_node(path, i))
                                   : 0.0;
            d.df[d.f_idx(path, i, 0)] = phi;
        }
    return d;
}

DifferenceData scale_difference_data(const DifferenceData& d, double lambda) {
    DifferenceData out = d;
    for (auto& v : out.dy) v *= lambda;
    for (auto& v : out.dz) v *= lambda;
    for (auto& v : out.du) v *= lambda;
    for (auto& v : out.dxi) v *= lambda;
    for (auto& v : out.df) v *= lambda;
    return out;
}

EstimateReport apriori_check(AprioriCase c, const DifferenceData& d, const WeightPaths& w,
                             const PathEnsemble& ens, const JumpMeasureSpec& spec, double p,
                             double beta, const ProblemSpec* problem1) {
    validate_difference_data(d, ens, w);
    require(beta > 0.0, "beta must be positive");
    // The clock convention (zeta^2 = a^2 vs a^q) must match the exponent.
    if (p < 2.0)
        require(std::abs(w.p - p) < 1e-12,
                "weight clock was built for a different sub-2 exponent");
    else
        require(w.p >= 2.0, "weight clock was built with the sub-2 convention");
    switch (c) {
        case AprioriCase::P2:
            require(p == 2.0, "the squared difference estimate needs p = 2");
            break;
        case AprioriCase::Pgt2_Y:
        case AprioriCase::Pgt2_ZU:
            require(p > 2.0, "the p > 2 difference estimates need p > 2");
            break;
        case AprioriCase::DataPge2:
            require(p >= 2.0, "the p >= 2 data estimate needs p >= 2");
            break;
        case AprioriCase::Plt2:
        case AprioriCase::DataPlt2:
            require(p > 1.0 && p < 2.0, "the p < 2 estimates need p in (1,2)");
            if (!problem1)
                throw std::invalid_argument(
                    "the p < 2 cases need the generator's problem description to check the "
                    "jump-control precondition");
            if (problem1->depends_on_u)
                throw PreconditionError(
                    "the p < 2 estimate requires a generator that does not depend on the jump "
                    "control u");
            break;
    }

    std::vector<double> lhs_paths(d.n_paths), rhs_paths(d.n_paths);
    for (std::size_t path = 0; path < d.n_paths; ++path) {
        const PathBundle b = apriori_path_bundle(c, d, w, ens, spec, p, beta, path);
        lhs_paths[path] = b.lhs;
        rhs_paths[path] = b.rhs;
    }
    const MeanStdErr lhs = mean_std_error(lhs_paths);
    const MeanStdErr rhs = mean_std_error(rhs_paths);

    EstimateReport rep;
    rep.name = "apriori_" + apriori_case_name(c);
    rep.lhs = lhs.mean;
    rep.lhs_sigma = lhs.std_error;
    rep.rhs = rhs.mean;
    rep.rhs_sigma = rhs.std_error;
    rep.measured_ratio = rhs.mean > 0.0 ? lhs.mean / rhs.mean : (lhs.mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    rep.slack_sigmas = 0.0;
    rep.passed = std::isfinite(lhs.mean) && std::isfinite(rhs.mean) &&
                 std::isfinite(rep.measured_ratio);
    rep.meta.p = p;
    rep.meta.beta = beta;
    rep.meta.n_paths = d.n_paths;
    rep.meta.n_steps = d.n_steps;
    if (problem1) rep.meta.problem = problem1->name;
    return rep;
}

// ---------------------------------------------------------------------------
// Contraction
// ---------------------------------------------------------------------------

double contraction_beta_threshold(double p, double rho) {
    require(p > 1.0, "p must exceed 1");
    require(rho > 0.0, "rho must be positive");
    return 1.0 + 2.0 * (p - 1.0) * std::pow(rho, 1.0 / (p - 1.0));
}

namespace {

// Per-path power of the Picard iteration metric (the B-norm):
//   S_pA(Y) + H_p(Z) + L_pN(U) + L_pQ(U).
std::vector<double> iteration_metric_powers(const DiscreteSolution& diff, const WeightPaths& w,
                                            const PathEnsemble& ens, const JumpMeasureSpec& spec,
                                            double p, double beta) {
    std::vector<double> powers(diff.n_paths, 0.0);
    for (std::size_t path = 0; path < diff.n_paths; ++path) {
        double v = 0.0;
        v += pathwise_norm_power(NormKind::S_pA, Component::Y, diff, w, ens, spec, p, beta, path);
        v += pathwise_norm_power(NormKind::H_p, Component::Z, diff, w, ens, spec, p, beta, path);
        v += pathwise_norm_power(NormKind::L_pN, Component::U, diff, w, ens, spec, p, beta, path);
        v += pathwise_norm_power(NormKind::L_pQ, Component::U, diff, w, ens, spec, p, beta, path);
        powers[path] = v;
    }
    return powers;
}

}  // namespace

ContractionEstimate estimate_contraction_factor(
    const ProblemSpec& problem, const PathEnsemble& ens, const WeightPaths& w,
    const RegressionConfig& cfg, double beta,
    std::span<const std::pair<DiscreteSolution, DiscreteSolution>> pairs) {
    require(pairs.size() >= 2, "the contraction estimate needs at least two input pairs");

    ContractionEstimate est;
    est.beta = beta;
    est.per_pair.reserve(pairs.size());
    const double p = problem.p;

    double best_sigma = 0.0;
    for (std::size_t idx = 0; idx < pairs.size(); ++idx) {
        const auto& [lhs_in, rhs_in] = pairs[idx];
        const DiscreteSolution in_diff = solution_difference(lhs_in, rhs_in);
        const std::vector<double> in_pow =
            iteration_metric_powers(in_diff, w, ens, problem.jump_spec, p, beta);
        const MeanStdErr in_stats = mean_std_error(in_pow);
        if (!(in_stats.mean > 0.0))
            throw DegeneratePairError("input pair " + std::to_string(idx) +
                                      " has zero distance in the iteration metric");

        const FrozenControls fa{&lhs_in.z, &lhs_in.u};
        const FrozenControls fb{&rhs_in.z, &rhs_in.u};
        const DiscreteSolution out_a =
            solve_backward(problem, ens, w, cfg, Coupling::FrozenZU, fa);
        const DiscreteSolution out_b =
            solve_backward(problem, ens, w, cfg, Coupling::FrozenZU, fb);
        const DiscreteSolution out_diff = solution_difference(out_a, out_b);
        const std::vector<double> out_pow =
            iteration_metric_powers(out_diff, w, ens, problem.jump_spec, p, beta);
        const MeanStdErr out_stats = mean_std_error(out_pow);

        const double ratio =
            std::pow(out_stats.mean / in_stats.mean, 1.0 / p);
        est.per_pair.push_back(ratio);

        if (ratio >= est.factor) {
            est.factor = ratio;
            est.argmax_pair = idx;
            if (out_stats.mean > 0.0) {
                // Delta-method sigma of (m_out / m_in)^{1/p} with paired paths.
                const auto n = static_cast<double>(in_pow.size());
                double cov = 0.0;
                for (std::size_t i = 0; i < in_pow.size(); ++i)
                    cov += (out_pow[i] - out_stats.mean) * (in_pow[i] - in_stats.mean);
                cov /= std::max(1.0, n - 1.0) * n;
                const double rel = sq(out_stats.std_error / out_stats.mean) +
                                   sq(in_stats.std_error / in_stats.mean) -
                                   2.0 * cov / (out_stats.mean * in_stats.mean);
                best_sigma = ratio / p * std::sqrt(std::max(0.0, rel));
            } else {
                best_sigma = 0.0;
            }
        }
    }
    est.factor_sigma = best_sigma;
    return est;
}

// ---------------------------------------------------------------------------
// Localization convergence
// ---------------------------------------------------------------------------

bool LocalizationReport::nonincreasing(double slack_fraction) const {
    const auto check = [&](const std::vector<double>& seq) {
        for (std::size_t i = 1; i < seq.size(); ++i)
            if (seq[i] > seq[i - 1] * (1.0 + slack_fraction) + 1e-300) return false;
        return true;
    };
    return check(e2_distances) && check(driver_discrepancies);
}

LocalizationReport verify_localization_convergence(const ProblemSpec& problem,
                                                   const PathEnsemble& ens, const WeightPaths& w,
                                                   std::span<const double> levels, double p,
                                                   double beta, const RegressionConfig& cfg) {
    require(p >= 2.0, "localization convergence is checked for p >= 2");
    require(levels.size() >= 2, "localization needs at least two levels");
    for (std::size_t i = 1; i < levels.size(); ++i)
        require(levels[i] > levels[i - 1], "levels must be strictly increasing");

    LocalizationReport rep;
    rep.levels.assign(levels.begin(), levels.end());

    std::vector<LocalizedProblem> locs;
    locs.reserve(levels.size());
    for (const double level : levels) {
        locs.push_back(localize_generator(problem, ens, w, level));
        rep.solutions.push_back(
            solve_backward(locs.back().problem, ens, w, cfg, Coupling::ExplicitZU));
    }

    const auto dsz = static_cast<std::size_t>(problem.dim_d);
    std::vector<double> fn(dsz), fm(dsz);
    for (std::size_t l = 1; l < locs.size(); ++l) {
        const DiscreteSolution diff = solution_difference(rep.solutions[l - 1], rep.solutions[l]);
        rep.e2_distances.push_back(weighted_norm(NormKind::E_p, Component::Y, diff, w, ens,
                                                 problem.jump_spec, 2.0, beta)
                                       .value);

        // Driver discrepancy along the finer solution.
        const DiscreteSolution& fine = rep.solutions[l];
        std::vector<double> per_path(ens.n_paths, 0.0);
        for (std::size_t path = 0; path < ens.n_paths; ++path) {
            double acc = 0.0;
            for (std::size_t i = 0; i < ens.n_steps(); ++i) {
                GeneratorArgs ga;
                ga.t = ens.grid.times[i];
                ga.path = path;
                ga.step = i;
                ga.x = ens.x_node(path, i);
                ga.y = std::span<const double>(fine.y.data() + fine.y_idx(path, i), dsz);
                ga.z = std::span<const double>(fine.z.data() + fine.z_idx(path, i),
                                               dsz * static_cast<std::size_t>(fine.dim_k));
                ga.u = std::span<const double>(fine.u.data() + fine.u_idx(path, i),
                                               dsz * static_cast<std::size_t>(fine.n_marks));
                evaluate_generator(locs[l - 1].problem, ga, fn);
                evaluate_generator(locs[l].problem, ga, fm);
                double gap = 0.0;
                for (std::size_t cc = 0; cc < dsz; ++cc) gap += sq(fn[cc] - fm[cc]);
                const double a = w.a[w.idx(path, i)];
                acc += std::exp(beta * w.A[w.idx(path, i)]) * gap / sq(a) * ens.grid.dt(i);
            }
            per_path[path] = acc;
        }
        rep.driver_discrepancies.push_back(pairwise_sum(per_path) /
                                           static_cast<double>(ens.n_paths));
    }
    return rep;
}

}  // namespace jbsde
