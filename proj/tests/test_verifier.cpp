#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <utility>
#include <vector>

#include "jbsde/errors.hpp"
#include "jbsde/rng.hpp"
#include "jbsde/verifier.hpp"

using namespace jbsde;

namespace {

struct Solved {
    BuiltProblem bp;
    PathEnsemble ens;
    WeightPaths w;
    DiscreteSolution sol;
};

Solved solve_builtin(const std::string& key, double p, std::size_t n_paths, std::size_t n_steps,
                     std::uint64_t seed, int degree = 1) {
    Solved s{make_builtin_problem(key, p, 1.0), {}, {}, {}};
    s.ens = make_problem_ensemble(s.bp, make_time_grid(1.0, n_steps), n_paths, seed);
    s.w = compute_weight_paths(s.bp.problem, s.ens);
    RegressionConfig cfg;
    cfg.basis_degree = degree;
    s.sol = solve_backward(s.bp.problem, s.ens, s.w, cfg, Coupling::ExplicitZU);
    return s;
}

// Hand-filled ensemble with no noise (all increments zero) and no factor.
PathEnsemble flat_ensemble(std::size_t n_paths, std::size_t n_steps, double horizon, int dim_k,
                           int n_marks) {
    PathEnsemble ens;
    ens.grid = make_time_grid(horizon, n_steps);
    ens.n_paths = n_paths;
    ens.dim_k = dim_k;
    ens.n_marks = n_marks;
    ens.dim_x = 0;
    ens.dw.assign(n_paths * n_steps * static_cast<std::size_t>(dim_k), 0.0);
    ens.dn.assign(n_paths * n_steps * static_cast<std::size_t>(n_marks), 0u);
    return ens;
}

// Unit coefficients and a chosen clock profile (A = scale * t by default 0).
WeightPaths flat_weights(const PathEnsemble& ens, double p, double clock_scale = 0.0) {
    WeightPaths w;
    w.n_paths = ens.n_paths;
    w.n_nodes = ens.n_steps() + 1;
    w.p = p;
    const std::size_t total = w.n_paths * w.n_nodes;
    w.alpha.assign(total, 0.0);
    w.lip_z.assign(total, 0.0);
    w.lip_u.assign(total, 0.0);
    w.phi.assign(total, 1.0);
    w.g.assign(total, 1.0);
    w.a.assign(total, 1.0);
    w.zeta.assign(total, 1.0);
    w.A.assign(total, 0.0);
    for (std::size_t path = 0; path < w.n_paths; ++path)
        for (std::size_t node = 0; node < w.n_nodes; ++node)
            w.A[w.idx(path, node)] = clock_scale * ens.grid.times[node];
    return w;
}

PathEnsemble brownian_only_ensemble(std::size_t n_paths, std::size_t n_steps, double horizon,
                                    std::uint64_t seed) {
    PathEnsemble ens = flat_ensemble(n_paths, n_steps, horizon, 1, 1);
    ens.seed = seed;
    ens.dw = simulate_brownian(ens.grid, n_paths, 1, seed);
    return ens;
}

DiscreteSolution random_controls(std::size_t n_paths, std::size_t n_steps, std::uint64_t seed,
                                 double amplitude) {
    DiscreteSolution sol;
    sol.n_paths = n_paths;
    sol.n_steps = n_steps;
    sol.dim_d = 1;
    sol.dim_k = 1;
    sol.n_marks = 1;
    sol.allocate();
    Xoshiro256pp rng(seed, kSaltProbe, 0xc0u);
    GaussianSampler gauss(rng);
    for (auto& v : sol.z) v = amplitude * gauss();
    for (auto& v : sol.u) v = amplitude * gauss();
    return sol;
}

}  // namespace

// ---------------------------------------------------------------------------
// Refinement-order fit
// ---------------------------------------------------------------------------

TEST_CASE("the refinement fit recovers an exact power law") {
    const std::vector<double> dt{0.1, 0.05, 0.025, 0.0125};
    std::vector<double> err(dt.size());
    for (std::size_t i = 0; i < dt.size(); ++i) err[i] = 3.0 * std::pow(dt[i], 0.7);
    CHECK(fit_refinement_order(dt, err) == doctest::Approx(0.7).epsilon(1e-12));

    CHECK_THROWS_AS(fit_refinement_order(std::vector<double>{0.1}, std::vector<double>{1.0}),
                    std::invalid_argument);
    CHECK_THROWS_AS(fit_refinement_order(dt, std::vector<double>{1.0, 0.0, 1.0, 1.0}),
                    std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Power integral bound
// ---------------------------------------------------------------------------

TEST_CASE("zero dilation makes the power integral exactly half the base power") {
    const std::vector<double> x{2.0, 0.0};
    const std::vector<double> y{0.0, 0.0};
    const auto s = check_power_integral_bound(x, y, 3.0);
    CHECK(s.lhs == doctest::Approx(1.0).epsilon(1e-10));  // |x|^{p-2} / 2
    CHECK(s.holds);
}

TEST_CASE("the scalar opposite-direction case integrates in closed form") {
    const std::vector<double> x{1.0};
    const std::vector<double> y{-1.0};
    const auto s = check_power_integral_bound(x, y, 3.0);
    // integral_0^1 (1-r)^2 dr = 1/3 against threshold 3^{-2} = 1/9.
    CHECK(s.lhs == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
    CHECK(s.rhs == doctest::Approx(1.0 / 9.0).epsilon(1e-14));
    CHECK(s.holds);
    CHECK(s.margin == doctest::Approx(2.0 / 9.0).epsilon(1e-9));
}

TEST_CASE("an orthogonal dilation matches the hand quadrature") {
    const std::vector<double> x{1.0, 0.0};
    const std::vector<double> y{0.0, 1.0};
    const auto s = check_power_integral_bound(x, y, 4.0);
    // integral_0^1 (1-r)(1+r^2) dr = 1/2 + 1/12 = 7/12.
    CHECK(s.lhs == doctest::Approx(7.0 / 12.0).epsilon(1e-10));
    CHECK(s.holds);
}

TEST_CASE("a vanishing base point degenerates the bound to nonnegativity") {
    const std::vector<double> x{0.0, 0.0};
    const std::vector<double> y{1.0, -2.0};
    const auto s = check_power_integral_bound(x, y, 2.5);
    CHECK(s.rhs == 0.0);
    CHECK(s.lhs >= 0.0);
    CHECK(s.holds);
}

TEST_CASE("the power integral bound rejects exponents at or below two") {
    const std::vector<double> x{1.0};
    CHECK_THROWS_AS(check_power_integral_bound(x, x, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(check_power_integral_bound(x, x, 1.5), std::invalid_argument);
}

TEST_CASE("a randomized sweep over all dilation regimes finds no violation") {
    const auto sweep = sweep_power_integral_bound(2000, 2, 424242);
    CHECK(sweep.n_samples == 2000);
    CHECK(sweep.n_violations == 0);
    CHECK(sweep.report.passed);
    CHECK(sweep.worst_margin > -1e-9);
    // The worst margin still certifies the strict form of the bound.
    CHECK(sweep.report.lhs >= sweep.report.rhs - 1e-9 * (1.0 + sweep.report.rhs));
}

// ---------------------------------------------------------------------------
// Jump Taylor bound
// ---------------------------------------------------------------------------

TEST_CASE("the jump curvature constant is p (p - 1) / 2") {
    CHECK(jump_curvature_constant(1.5) == doctest::Approx(0.375).epsilon(1e-15));
    CHECK_THROWS_AS(jump_curvature_constant(2.0), std::invalid_argument);
    CHECK_THROWS_AS(jump_curvature_constant(1.0), std::invalid_argument);
}

TEST_CASE("the scalar jump Taylor oracle evaluates both sides exactly") {
    const std::vector<double> x{1.0};
    const std::vector<double> y{-2.0};
    const auto s = check_jump_taylor_bound(x, y, 1.5);
    // |x+y|^p - |x|^p - p|x|^{p-1} sign(x) y = 1 - 1 + 3 = 3
    // b_p |y|^2 (|x|^2 v |x+y|^2)^{(p-2)/2} = 0.375 * 4 * 1 = 1.5.
    CHECK(s.lhs == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(s.rhs == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(s.holds);
}

TEST_CASE("a zero jump makes both sides of the Taylor bound vanish") {
    const std::vector<double> x{0.7, -0.2};
    const std::vector<double> y{0.0, 0.0};
    const auto s = check_jump_taylor_bound(x, y, 1.2);
    CHECK(s.lhs == 0.0);
    CHECK(s.rhs == 0.0);
    CHECK(s.holds);
}

TEST_CASE("a jump from the origin satisfies the Taylor bound strictly") {
    const std::vector<double> x{0.0};
    const std::vector<double> y{3.0};
    const auto s = check_jump_taylor_bound(x, y, 1.5);
    CHECK(s.lhs == doctest::Approx(std::pow(3.0, 1.5)).epsilon(1e-14));
    CHECK(s.rhs == doctest::Approx(0.375 * 9.0 * std::pow(3.0, -0.5)).epsilon(1e-14));
    CHECK(s.holds);
}

TEST_CASE("every simulated jump of a solved problem satisfies the Taylor bound") {
    for (const char* key : {"lipschitz_zu", "jump_terminal"}) {
        for (double p : {1.2, 1.5, 1.8}) {
            const auto s = solve_builtin(key, p, 512, 16, 91);
            const auto sweep = sweep_jump_taylor_bound(s.sol, s.ens, p);
            CAPTURE(key);
            CAPTURE(p);
            CHECK(sweep.n_jumps > 0);
            CHECK(sweep.n_violations == 0);
            CHECK(sweep.witnesses.empty());
            CHECK(sweep.report.passed);
        }
    }
}

// ---------------------------------------------------------------------------
// Discrete weighted-power identity
// ---------------------------------------------------------------------------

TEST_CASE("the forward roll reproduces drift, diffusion and jump increments") {
    PathEnsemble ens = flat_ensemble(1, 4, 1.0, 1, 1);
    ens.dw[1] = 0.5;  // step 1
    ens.dn[2] = 1;    // step 2
    const JumpMeasureSpec spec = unit_mark_spec(0.0, 0.0);  // zero compensator

    DiscreteSemimartingale semi;
    semi.n_paths = 1;
    semi.n_steps = 4;
    semi.x0 = {1.0};
    semi.drift.assign(4, 2.0);  // dX += 2 dt
    semi.vol.assign(4, 1.0);    // dX += dW
    semi.jump.assign(4, 3.0);   // dX += 3 dN~

    const auto x = roll_semimartingale(semi, ens, spec);
    CHECK(x[0] == 1.0);
    CHECK(x[1] == doctest::Approx(1.5).epsilon(1e-15));              // drift only
    CHECK(x[2] == doctest::Approx(2.5).epsilon(1e-15));              // + dW
    CHECK(x[3] == doctest::Approx(2.5 + 0.5 + 3.0).epsilon(1e-15));  // + jump
    CHECK(x[4] == doctest::Approx(6.5).epsilon(1e-15));
}

TEST_CASE("a zero semimartingale satisfies the power identity with zero discrepancy") {
    PathEnsemble ens = flat_ensemble(3, 5, 1.0, 1, 1);
    const JumpMeasureSpec spec = unit_mark_spec(0.0, 0.0);
    const WeightPaths w = flat_weights(ens, 1.5);

    DiscreteSemimartingale semi;
    semi.n_paths = 3;
    semi.n_steps = 5;
    semi.dim_d = 2;
    semi.x0 = {0.0, 0.0};

    const auto rep = verify_power_ito_identity(semi, ens, spec, w, 1.5, 1.0, 0.0);
    CHECK(rep.max_discrepancy == 0.0);
    CHECK(rep.max_relative == 0.0);
    CHECK(rep.node_discrepancy.size() == 6);
}

TEST_CASE("a pure-jump decomposition with single jumps telescopes exactly") {
    PathEnsemble ens = flat_ensemble(4, 6, 1.0, 1, 1);
    const JumpMeasureSpec spec = unit_mark_spec(0.0, 0.0);  // dN~ = dN
    // Scatter single jumps: (path, step) pairs.
    const auto put = [&](std::size_t path, std::size_t step) {
        ens.dn[(path * 6 + step) * 1] = 1;
    };
    put(0, 1);
    put(0, 4);
    put(2, 0);
    put(3, 5);

    DiscreteSemimartingale semi;
    semi.n_paths = 4;
    semi.n_steps = 6;
    semi.x0 = {1.0};
    semi.jump.resize(4 * 6, 0.0);
    for (std::size_t path = 0; path < 4; ++path)
        for (std::size_t step = 0; step < 6; ++step)
            semi.jump[semi.jump_idx(path, step)] = 0.3 + 0.1 * static_cast<double>(step);

    const WeightPaths w = flat_weights(ens, 1.7);
    const auto rep = verify_power_ito_identity(semi, ens, spec, w, 1.7, 0.0, 0.0);
    CHECK(rep.max_relative <= 1e-10);
    CHECK(rep.node_discrepancy[0] == 0.0);
    CHECK(rep.scale > 0.0);
}

TEST_CASE("the identity rejects exponents outside the open interval (1,2)") {
    PathEnsemble ens = flat_ensemble(1, 2, 1.0, 1, 1);
    const JumpMeasureSpec spec = unit_mark_spec(0.0, 0.0);
    const WeightPaths w = flat_weights(ens, 1.5);
    DiscreteSemimartingale semi;
    semi.n_paths = 1;
    semi.n_steps = 2;
    semi.x0 = {1.0};
    CHECK_THROWS_AS(verify_power_ito_identity(semi, ens, spec, w, 2.0, 1.0, 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(verify_power_ito_identity(semi, ens, spec, w, 0.9, 1.0, 0.0),
                    std::invalid_argument);
}

TEST_CASE("diffusion discrepancies shrink at roughly half order under refinement") {
    const double p = 1.5, beta = 0.8, mu = 0.5;
    std::vector<double> dts, errs;
    for (std::size_t n_steps : {16, 32, 64, 128}) {
        PathEnsemble ens = brownian_only_ensemble(1500, n_steps, 1.0, 2024);
        const JumpMeasureSpec spec = unit_mark_spec(0.0, 0.0);
        const WeightPaths w = flat_weights(ens, p, /*clock_scale=*/1.0);

        DiscreteSemimartingale semi;
        semi.n_paths = ens.n_paths;
        semi.n_steps = n_steps;
        semi.x0 = {5.0};  // stay away from the power kink at the origin
        semi.vol.assign(ens.n_paths * n_steps, 1.0);

        const auto rep = verify_power_ito_identity(semi, ens, spec, w, p, beta, mu);
        dts.push_back(1.0 / static_cast<double>(n_steps));
        errs.push_back(rep.max_discrepancy);
    }
    for (std::size_t i = 1; i < errs.size(); ++i) CHECK(errs[i] < errs[i - 1]);
    const double order = fit_refinement_order(dts, errs);
    CHECK(order >= 0.4);
    CHECK(order <= 1.6);
}

// ---------------------------------------------------------------------------
// A priori bundles
// ---------------------------------------------------------------------------

namespace {

DifferenceData zero_data(const PathEnsemble& ens) {
    DifferenceData d;
    d.n_paths = ens.n_paths;
    d.n_steps = ens.n_steps();
    d.dim_d = 1;
    d.dim_k = ens.dim_k;
    d.n_marks = ens.n_marks;
    d.dy.assign(d.n_paths * d.n_nodes(), 0.0);
    d.dz.assign(d.n_paths * d.n_steps * static_cast<std::size_t>(d.dim_k), 0.0);
    d.du.assign(d.n_paths * d.n_steps * static_cast<std::size_t>(d.n_marks), 0.0);
    d.dxi.assign(d.n_paths, 0.0);
    d.df.assign(d.n_paths * d.n_steps, 0.0);
    return d;
}

DifferenceData gaussian_data(const PathEnsemble& ens, std::uint64_t seed) {
    DifferenceData d = zero_data(ens);
    Xoshiro256pp rng(seed, kSaltProbe, 0xd1u);
    GaussianSampler gauss(rng);
    for (auto& v : d.dy) v = gauss();
    for (auto& v : d.dz) v = gauss();
    for (auto& v : d.du) v = gauss();
    for (auto& v : d.dxi) v = gauss();
    for (auto& v : d.df) v = gauss();
    return d;
}

}  // namespace

TEST_CASE("zero data collapses every a priori bundle to zero") {
    const auto ge2 = solve_builtin("linear_y", 2.0, 64, 8, 31, 0);
    const auto lt2 = solve_builtin("linear_y", 1.5, 64, 8, 31, 0);
    const DifferenceData d2 = zero_data(ge2.ens);

    const auto run = [&](AprioriCase c, double p, const Solved& s) {
        return apriori_check(c, d2, s.w, s.ens, s.bp.problem.jump_spec, p, 1.0,
                             &s.bp.problem);
    };
    for (const auto& [c, p] : std::vector<std::pair<AprioriCase, double>>{
             {AprioriCase::P2, 2.0},
             {AprioriCase::Pgt2_Y, 2.5},
             {AprioriCase::Pgt2_ZU, 2.5},
             {AprioriCase::DataPge2, 3.0}}) {
        const auto rep = run(c, p, ge2);
        CAPTURE(rep.name);
        CHECK(rep.lhs == 0.0);
        CHECK(rep.rhs == 0.0);
        CHECK(rep.measured_ratio == 0.0);
        CHECK(rep.passed);
    }
    for (const auto c : {AprioriCase::Plt2, AprioriCase::DataPlt2}) {
        const auto rep = run(c, 1.5, lt2);
        CAPTURE(rep.name);
        CHECK(rep.lhs == 0.0);
        CHECK(rep.rhs == 0.0);
        CHECK(rep.passed);
    }
}

TEST_CASE("identical solutions produce an exactly zero difference bundle") {
    const auto s = solve_builtin("lipschitz_zu", 2.0, 128, 8, 33);
    const DifferenceData d =
        make_difference_data(s.bp.problem, s.bp.problem, s.sol, s.sol, s.ens);
    const auto rep =
        apriori_check(AprioriCase::P2, d, s.w, s.ens, s.bp.problem.jump_spec, 2.0, 1.0);
    CHECK(rep.lhs == 0.0);
    CHECK(rep.rhs == 0.0);
    CHECK(rep.passed);
}

TEST_CASE("every a priori bundle scales with exact degree-p homogeneity") {
    const auto ge2 = solve_builtin("linear_y", 2.0, 64, 8, 35, 0);
    const auto lt2 = solve_builtin("linear_y", 1.5, 64, 8, 35, 0);
    const double lambda = 2.0;

    const auto check_case = [&](AprioriCase c, double p, const Solved& s) {
        const DifferenceData d = gaussian_data(s.ens, 77);
        const DifferenceData ds = scale_difference_data(d, lambda);
        const auto r1 = apriori_check(c, d, s.w, s.ens, s.bp.problem.jump_spec, p, 1.0,
                                      &s.bp.problem);
        const auto r2 = apriori_check(c, ds, s.w, s.ens, s.bp.problem.jump_spec, p, 1.0,
                                      &s.bp.problem);
        const double scale = std::pow(lambda, p);
        CAPTURE(r1.name);
        CAPTURE(p);
        CHECK(r2.lhs == doctest::Approx(scale * r1.lhs).epsilon(1e-12));
        CHECK(r2.rhs == doctest::Approx(scale * r1.rhs).epsilon(1e-12));
        CHECK(r2.measured_ratio == doctest::Approx(r1.measured_ratio).epsilon(1e-12));
    };
    check_case(AprioriCase::P2, 2.0, ge2);
    check_case(AprioriCase::Pgt2_Y, 2.5, ge2);
    check_case(AprioriCase::Pgt2_ZU, 2.5, ge2);
    check_case(AprioriCase::DataPge2, 3.0, ge2);
    check_case(AprioriCase::Plt2, 1.5, lt2);
    check_case(AprioriCase::DataPlt2, 1.5, lt2);
}

TEST_CASE("the p below two cases enforce the jump-control precondition") {
    const auto lt2 = solve_builtin("linear_y", 1.5, 32, 4, 36, 0);
    const DifferenceData d = zero_data(lt2.ens);

    ProblemSpec with_u = lt2.bp.problem;
    with_u.depends_on_u = true;
    CHECK_THROWS_AS(apriori_check(AprioriCase::Plt2, d, lt2.w, lt2.ens,
                                  lt2.bp.problem.jump_spec, 1.5, 1.0, &with_u),
                    PreconditionError);
    CHECK_THROWS_AS(apriori_check(AprioriCase::DataPlt2, d, lt2.w, lt2.ens,
                                  lt2.bp.problem.jump_spec, 1.5, 1.0, &with_u),
                    PreconditionError);
    // The check cannot run blind: the problem description is required.
    CHECK_THROWS_AS(apriori_check(AprioriCase::Plt2, d, lt2.w, lt2.ens,
                                  lt2.bp.problem.jump_spec, 1.5, 1.0, nullptr),
                    std::invalid_argument);
}

TEST_CASE("each a priori case validates its exponent range") {
    const auto s = solve_builtin("linear_y", 2.0, 32, 4, 37, 0);
    const DifferenceData d = zero_data(s.ens);
    const auto& spec = s.bp.problem.jump_spec;
    CHECK_THROWS_AS(apriori_check(AprioriCase::P2, d, s.w, s.ens, spec, 2.5, 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(apriori_check(AprioriCase::Pgt2_Y, d, s.w, s.ens, spec, 2.0, 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(apriori_check(AprioriCase::DataPge2, d, s.w, s.ens, spec, 1.9, 1.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        apriori_check(AprioriCase::Plt2, d, s.w, s.ens, spec, 2.0, 1.0, &s.bp.problem),
        std::invalid_argument);
}

TEST_CASE("a linear difference pair yields a finite and path-stable ratio") {
    const auto zero_pb = make_builtin_problem("zero", 2.0, 1.0);
    std::vector<double> ratios;
    for (std::size_t n_paths : {std::size_t{500}, std::size_t{2000}}) {
        const auto s = solve_builtin("linear_y", 2.0, n_paths, 16, 39, 0);
        DiscreteSolution zero_sol = s.sol;
        std::fill(zero_sol.y.begin(), zero_sol.y.end(), 0.0);
        std::fill(zero_sol.z.begin(), zero_sol.z.end(), 0.0);
        std::fill(zero_sol.u.begin(), zero_sol.u.end(), 0.0);
        const DifferenceData d =
            make_difference_data(s.bp.problem, zero_pb.problem, s.sol, zero_sol, s.ens);
        const auto rep = apriori_check(AprioriCase::P2, d, s.w, s.ens,
                                       s.bp.problem.jump_spec, 2.0, 1.0, &s.bp.problem);
        CHECK(rep.passed);
        CHECK(rep.lhs > 0.0);
        CHECK(rep.rhs > 0.0);
        ratios.push_back(rep.measured_ratio);
    }
    CHECK(std::abs(ratios[1] - ratios[0]) < 0.05 * ratios[0]);
}

// ---------------------------------------------------------------------------
// Contraction
// ---------------------------------------------------------------------------

TEST_CASE("the contraction threshold formula matches hand values") {
    // 1 + 2 (p-1) rho^{1/(p-1)}
    CHECK(contraction_beta_threshold(2.0, 4.0) == doctest::Approx(9.0).epsilon(1e-15));
    CHECK(contraction_beta_threshold(1.5, 4.0) == doctest::Approx(17.0).epsilon(1e-15));
    CHECK_THROWS_AS(contraction_beta_threshold(1.0, 1.0), std::invalid_argument);
}

TEST_CASE("identical inputs in a pair raise the degenerate-pair error") {
    const auto s = solve_builtin("lipschitz_zu", 2.0, 64, 4, 41);
    const DiscreteSolution a = random_controls(64, 4, 1, 1.0);
    std::vector<std::pair<DiscreteSolution, DiscreteSolution>> pairs;
    pairs.emplace_back(a, random_controls(64, 4, 2, 1.0));
    pairs.emplace_back(a, a);
    RegressionConfig cfg;
    CHECK_THROWS_AS(
        estimate_contraction_factor(s.bp.problem, s.ens, s.w, cfg, 2.0, pairs),
        DegeneratePairError);

    pairs.pop_back();
    CHECK_THROWS_AS(
        estimate_contraction_factor(s.bp.problem, s.ens, s.w, cfg, 2.0, pairs),
        std::invalid_argument);
}

TEST_CASE("a driver without controls makes the sweep map exactly constant") {
    const auto s = solve_builtin("linear_y", 2.0, 128, 8, 43, 0);
    std::vector<std::pair<DiscreteSolution, DiscreteSolution>> pairs;
    pairs.emplace_back(random_controls(128, 8, 3, 1.0), random_controls(128, 8, 4, 1.0));
    pairs.emplace_back(random_controls(128, 8, 5, 0.5), random_controls(128, 8, 6, 0.5));
    RegressionConfig cfg;
    cfg.basis_degree = 0;
    const auto est = estimate_contraction_factor(s.bp.problem, s.ens, s.w, cfg, 2.0, pairs);
    CHECK(est.factor == 0.0);
    CHECK(est.per_pair.size() == 2);
}

TEST_CASE("the contraction factor decreases along a beta ladder and dips below one") {
    const auto s = solve_builtin("lipschitz_zu", 2.0, 1024, 16, 45);
    std::vector<std::pair<DiscreteSolution, DiscreteSolution>> pairs;
    pairs.emplace_back(random_controls(1024, 16, 7, 1.0), random_controls(1024, 16, 8, 1.0));
    pairs.emplace_back(random_controls(1024, 16, 9, 2.0), random_controls(1024, 16, 10, 0.5));
    RegressionConfig cfg;

    std::vector<double> factors;
    double top_sigma = 0.0;
    for (const double beta : {2.0, 8.0, 20.0}) {
        const auto est =
            estimate_contraction_factor(s.bp.problem, s.ens, s.w, cfg, beta, pairs);
        factors.push_back(est.factor);
        top_sigma = est.factor_sigma;
    }
    CHECK(factors[1] <= factors[0] * 1.05 + 1e-12);
    CHECK(factors[2] <= factors[1] * 1.05 + 1e-12);
    CHECK(factors[2] + 3.0 * top_sigma < 1.0);
}

// ---------------------------------------------------------------------------
// Localization convergence
// ---------------------------------------------------------------------------

TEST_CASE("levels beyond a bounded coefficient localize nothing") {
    const auto s = solve_builtin("linear_y", 2.0, 64, 8, 47, 0);  // a constant < 1
    RegressionConfig cfg;
    cfg.basis_degree = 0;
    const std::vector<double> levels{2.0, 4.0};
    const auto rep = verify_localization_convergence(s.bp.problem, s.ens, s.w, levels, 2.0,
                                                     1.0, cfg);
    REQUIRE(rep.e2_distances.size() == 1);
    CHECK(rep.e2_distances[0] == 0.0);
    CHECK(rep.driver_discrepancies[0] == 0.0);
    CHECK(rep.nonincreasing(0.10));
}

TEST_CASE("a state-dependent coefficient yields shrinking localization distances") {
    const auto s = solve_builtin("state_dependent_a", 2.0, 512, 16, 49);
    RegressionConfig cfg;
    // A moderate weight keeps the exponential clock from amplifying the rare
    // tail paths where consecutive levels differ.
    const double beta = 0.25;
    const std::vector<double> levels{1.0, 2.0, 4.0, 8.0};
    const auto rep = verify_localization_convergence(s.bp.problem, s.ens, s.w, levels, 2.0,
                                                     beta, cfg);
    REQUIRE(rep.e2_distances.size() == 3);
    CHECK(rep.e2_distances[0] > 0.0);
    CHECK(rep.nonincreasing(0.10));
    // The realized coefficient tops out below 4, so the last two levels
    // localize nothing and their distance vanishes identically.
    CHECK(rep.e2_distances[2] == 0.0);
    CHECK(rep.driver_discrepancies[2] == 0.0);

    // A level beyond every realized coefficient value reproduces the plain
    // solve bit for bit.
    const std::vector<double> wide{1.0, 1e6};
    const auto rep2 = verify_localization_convergence(s.bp.problem, s.ens, s.w, wide, 2.0,
                                                      beta, cfg);
    const auto plain = solve_backward(s.bp.problem, s.ens, s.w, cfg, Coupling::ExplicitZU);
    CHECK(rep2.solutions[1].y == plain.y);
    CHECK(rep2.solutions[1].z == plain.z);
    CHECK(rep2.solutions[1].u == plain.u);
}

TEST_CASE("localization validates its exponent and level preconditions") {
    const auto s = solve_builtin("linear_y", 2.0, 16, 4, 51, 0);
    RegressionConfig cfg;
    const std::vector<double> ok{1.0, 2.0};
    CHECK_THROWS_AS(verify_localization_convergence(s.bp.problem, s.ens, s.w, ok, 1.5, 1.0,
                                                    cfg),
                    std::invalid_argument);
    const std::vector<double> bad{2.0, 2.0};
    CHECK_THROWS_AS(verify_localization_convergence(s.bp.problem, s.ens, s.w, bad, 2.0, 1.0,
                                                    cfg),
                    std::invalid_argument);
}
