#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "jbsde/errors.hpp"
#include "jbsde/norms.hpp"
#include "jbsde/problem.hpp"
#include "jbsde/rng.hpp"
#include "jbsde/weights.hpp"

using namespace jbsde;

namespace {

// A fully fabricated single-path world with flat clock (A = 0, zeta = 1), unit
// mark, and hand-placed jump counts so every norm has a pencil-and-paper value.
struct FlatWorld {
    PathEnsemble ens;
    WeightPaths w;
    JumpMeasureSpec spec;
    DiscreteSolution sol;

    explicit FlatWorld(std::size_t n_paths = 1, std::size_t n_steps = 4, double horizon = 1.0,
                       double p = 2.0) {
        spec = unit_mark_spec();
        ens.grid = make_time_grid(horizon, n_steps);
        ens.seed = 0;
        ens.n_paths = n_paths;
        ens.dim_k = 1;
        ens.n_marks = 1;
        ens.dim_x = 1;
        ens.dw.assign(n_paths * n_steps, 0.0);
        ens.dn.assign(n_paths * n_steps, 0);
        ens.x.assign(n_paths * (n_steps + 1), 0.0);

        w.n_paths = n_paths;
        w.n_nodes = n_steps + 1;
        w.p = p;
        const std::size_t total = n_paths * w.n_nodes;
        w.alpha.assign(total, 0.0);
        w.lip_z.assign(total, 0.0);
        w.lip_u.assign(total, 0.0);
        w.phi.assign(total, 1.0);
        w.g.assign(total, 1.0);
        w.a.assign(total, 1.0);
        w.zeta.assign(total, 1.0);
        w.A.assign(total, 0.0);

        sol.n_paths = n_paths;
        sol.n_steps = n_steps;
        sol.dim_d = 1;
        sol.dim_k = 1;
        sol.n_marks = 1;
        sol.allocate();
    }
};

DiscreteSolution random_solution(std::size_t n_paths, std::size_t n_steps, std::uint64_t seed) {
    DiscreteSolution s;
    s.n_paths = n_paths;
    s.n_steps = n_steps;
    s.dim_d = 1;
    s.dim_k = 1;
    s.n_marks = 1;
    s.allocate();
    Xoshiro256pp rng(seed, 0x5eedull, 0);
    for (auto& v : s.y) v = 2.0 * rng.uniform() - 1.0;
    for (auto& v : s.z) v = 2.0 * rng.uniform() - 1.0;
    for (auto& v : s.u) v = 2.0 * rng.uniform() - 1.0;
    return s;
}

}  // namespace

TEST_CASE("zero solution has zero norm of every kind") {
    FlatWorld fw;
    for (auto kind : {NormKind::S_p, NormKind::S_pA, NormKind::H_p, NormKind::L_pQ,
                      NormKind::L_pN, NormKind::B_p, NormKind::frakL_p, NormKind::E_p}) {
        Component comp = Component::Y;
        if (kind == NormKind::H_p) comp = Component::Z;
        if (kind == NormKind::L_pQ || kind == NormKind::L_pN || kind == NormKind::frakL_p)
            comp = Component::U;
        const auto est = weighted_norm(kind, comp, fw.sol, fw.w, fw.ens, fw.spec, 2.0, 1.0);
        CHECK(est.value == 0.0);
    }
}

TEST_CASE("constant values against closed forms on the flat clock") {
    const double p = 2.5, beta = 1.7;  // beta is inert when A = 0
    FlatWorld fw(1, 4, 1.0, p);
    for (auto& v : fw.sol.y) v = -3.0;
    for (auto& v : fw.sol.z) v = std::sqrt(2.0);
    for (auto& v : fw.sol.u) v = 0.5;
    fw.ens.dn[2] = 1;  // single jump in step 2

    const auto sp = weighted_norm(NormKind::S_p, Component::Y, fw.sol, fw.w, fw.ens, fw.spec, p, beta);
    CHECK(sp.value == doctest::Approx(3.0).epsilon(1e-13));

    // sum |c|^p zeta^2 dt = |c|^p T
    const auto spa =
        weighted_norm(NormKind::S_pA, Component::Y, fw.sol, fw.w, fw.ens, fw.spec, p, beta);
    CHECK(spa.value == doctest::Approx(3.0).epsilon(1e-13));

    // (sum |Z|^2 dt)^{p/2} = (2T)^{p/2}
    const auto hp = weighted_norm(NormKind::H_p, Component::Z, fw.sol, fw.w, fw.ens, fw.spec, p, beta);
    CHECK(hp.value == doctest::Approx(std::sqrt(2.0)).epsilon(1e-13));

    // (sum |u|^2 q lambda dt)^{p/2} = (0.25 T)^{p/2}
    const auto lq = weighted_norm(NormKind::L_pQ, Component::U, fw.sol, fw.w, fw.ens, fw.spec, p, beta);
    CHECK(lq.value == doctest::Approx(0.5).epsilon(1e-13));

    // one jump: (|u|^2 * 1)^{p/2} -> |u|
    const auto ln = weighted_norm(NormKind::L_pN, Component::U, fw.sol, fw.w, fw.ens, fw.spec, p, beta);
    CHECK(ln.value == doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("terminal-dominated supremum picks up the clock weight") {
    // Real weights with a = 1 make A_i = t_i; constant |Y| = c puts the sup at
    // the terminal node: S_p^p = e^{kappa beta T} c^p.
    const auto bp = make_builtin_problem("zero", 3.0, 1.0);
    const auto ens = make_problem_ensemble(bp, make_time_grid(1.0, 8), 4, 7);
    const auto w = compute_weight_paths(bp.problem, ens);
    DiscreteSolution sol;
    sol.n_paths = 4;
    sol.n_steps = 8;
    sol.dim_d = 1;
    sol.dim_k = 1;
    sol.n_marks = 1;
    sol.allocate();
    for (auto& v : sol.y) v = 2.0;
    const double p = 3.0, beta = 0.9, kappa = 1.0;
    const auto est = weighted_norm(NormKind::S_p, Component::Y, sol, w, ens, bp.problem.jump_spec,
                                   p, beta);
    CHECK(est.value == doctest::Approx(std::exp(kappa * beta / p) * 2.0).epsilon(1e-12));
    CHECK(est.mc_std_error == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("composite powers decompose exactly") {
    const auto bp = make_builtin_problem("jump_terminal", 2.5, 1.0);
    const auto ens = make_problem_ensemble(bp, make_time_grid(1.0, 8), 32, 13);
    const auto w = compute_weight_paths(bp.problem, ens);
    const auto sol = random_solution(32, 8, 99);
    const double p = 2.5, beta = 1.0;
    const auto& js = bp.problem.jump_spec;

    auto pw = [&](NormKind k, Component c) {
        return weighted_norm(k, c, sol, w, ens, js, p, beta).value;
    };
    const double sp = pw(NormKind::S_p, Component::Y);
    const double spa = pw(NormKind::S_pA, Component::Y);
    const double hp = pw(NormKind::H_p, Component::Z);
    const double lq = pw(NormKind::L_pQ, Component::U);
    const double ln = pw(NormKind::L_pN, Component::U);
    const double bpv = pw(NormKind::B_p, Component::Y);
    const double fl = pw(NormKind::frakL_p, Component::U);
    const double ep = pw(NormKind::E_p, Component::Y);

    CHECK(std::pow(bpv, p) ==
          doctest::Approx(std::pow(sp, p) + std::pow(spa, p)).epsilon(1e-12));
    CHECK(std::pow(fl, p) == doctest::Approx(std::pow(lq, p) + std::pow(ln, p)).epsilon(1e-12));
    CHECK(std::pow(ep, p) == doctest::Approx(std::pow(bpv, p) + std::pow(hp, p) + std::pow(fl, p))
                                 .epsilon(1e-12));
}

TEST_CASE("norms are absolutely homogeneous") {
    const auto bp = make_builtin_problem("jump_terminal", 1.5, 1.0);
    const auto ens = make_problem_ensemble(bp, make_time_grid(1.0, 8), 16, 21);
    const auto w = compute_weight_paths(bp.problem, ens);
    auto sol = random_solution(16, 8, 5);
    const double p = 1.5, beta = 2.0, lam = 3.0;
    const auto& js = bp.problem.jump_spec;

    auto scaled = sol;
    for (auto& v : scaled.y) v *= lam;
    for (auto& v : scaled.z) v *= lam;
    for (auto& v : scaled.u) v *= lam;

    for (auto [kind, comp] :
         {std::pair{NormKind::S_p, Component::Y}, {NormKind::S_pA, Component::Y},
          {NormKind::H_p, Component::Z}, {NormKind::L_pQ, Component::U},
          {NormKind::L_pN, Component::U}, {NormKind::E_p, Component::Y}}) {
        const double base = weighted_norm(kind, comp, sol, w, ens, js, p, beta).value;
        const double big = weighted_norm(kind, comp, scaled, w, ens, js, p, beta).value;
        CHECK(big == doctest::Approx(lam * base).epsilon(1e-12));
    }
}

TEST_CASE("larger beta never shrinks a norm on a positive clock") {
    const auto bp = make_builtin_problem("zero", 2.0, 1.0);
    const auto ens = make_problem_ensemble(bp, make_time_grid(1.0, 8), 8, 3);
    const auto w = compute_weight_paths(bp.problem, ens);
    const auto sol = random_solution(8, 8, 11);
    const auto& js = bp.problem.jump_spec;
    for (auto [kind, comp] : {std::pair{NormKind::S_pA, Component::Y},
                              {NormKind::H_p, Component::Z}, {NormKind::L_pQ, Component::U}}) {
        const double lo = weighted_norm(kind, comp, sol, w, ens, js, 2.0, 0.5).value;
        const double hi = weighted_norm(kind, comp, sol, w, ens, js, 2.0, 4.0).value;
        CHECK(hi >= lo);
    }
}

TEST_CASE("triangle inequality on solution sums") {
    const auto bp = make_builtin_problem("zero", 2.5, 1.0);
    const auto ens = make_problem_ensemble(bp, make_time_grid(1.0, 8), 16, 17);
    const auto w = compute_weight_paths(bp.problem, ens);
    const auto s1 = random_solution(16, 8, 31);
    const auto s2 = random_solution(16, 8, 32);
    auto sum = s1;
    for (std::size_t i = 0; i < sum.y.size(); ++i) sum.y[i] += s2.y[i];
    for (std::size_t i = 0; i < sum.z.size(); ++i) sum.z[i] += s2.z[i];
    for (std::size_t i = 0; i < sum.u.size(); ++i) sum.u[i] += s2.u[i];
    const auto& js = bp.problem.jump_spec;
    for (auto [kind, comp] : {std::pair{NormKind::S_pA, Component::Y},
                              {NormKind::H_p, Component::Z}, {NormKind::L_pQ, Component::U}}) {
        const double a = weighted_norm(kind, comp, s1, w, ens, js, 2.5, 1.0).value;
        const double b = weighted_norm(kind, comp, s2, w, ens, js, 2.5, 1.0).value;
        const double c = weighted_norm(kind, comp, sum, w, ens, js, 2.5, 1.0).value;
        CHECK(c <= a + b + 1e-12);
    }
}

TEST_CASE("invalid arguments are rejected with guidance") {
    FlatWorld fw;
    CHECK_THROWS_WITH_AS(
        weighted_norm(NormKind::S_p, Component::Y, fw.sol, fw.w, fw.ens, fw.spec, 1.0, 1.0),
        doctest::Contains("p must exceed 1"), std::invalid_argument);
    CHECK_THROWS_AS(
        weighted_norm(NormKind::S_p, Component::Y, fw.sol, fw.w, fw.ens, fw.spec, 2.0, 0.0),
        std::invalid_argument);
    CHECK_THROWS_AS(
        weighted_norm(NormKind::B_p, Component::Z, fw.sol, fw.w, fw.ens, fw.spec, 2.0, 1.0),
        std::invalid_argument);
    CHECK_THROWS_AS(
        weighted_norm(NormKind::frakL_p, Component::Y, fw.sol, fw.w, fw.ens, fw.spec, 2.0, 1.0),
        std::invalid_argument);
}

TEST_CASE("non-finite input raises a blowup error") {
    FlatWorld fw;
    fw.sol.y[2] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(
        weighted_norm(NormKind::S_p, Component::Y, fw.sol, fw.w, fw.ens, fw.spec, 2.0, 1.0),
        NumericalBlowupError);
}

TEST_CASE("kernel and counting views of a constant jump control") {
    // Unit mark, q lambda = 1, U = 1: the kernel side is deterministic and the
    // counting side matches it in mean when p = 2; the p-dependent constants
    // cover the other exponents.
    const auto bp = make_builtin_problem("jump_terminal", 2.0, 1.0);
    const auto ens = make_problem_ensemble(bp, make_time_grid(1.0, 16), 4000, 77);
    const auto w = compute_weight_paths(bp.problem, ens);
    DiscreteSolution sol;
    sol.n_paths = 4000;
    sol.n_steps = 16;
    sol.dim_d = 1;
    sol.dim_k = 1;
    sol.n_marks = 1;
    sol.allocate();
    for (auto& v : sol.u) v = 1.0;

    for (double p : {1.5, 2.0, 3.0}) {
        CAPTURE(p);
        const auto rel = check_jump_norm_relation(sol, w, ens, bp.problem.jump_spec, p, 1.0);
        CHECK(rel.passed);
        if (p == 2.0) CHECK(std::abs(rel.q_side - rel.n_side) <= 3.0 * rel.margin_sigma + 1e-9);
        if (p == 3.0) CHECK(rel.constant == doctest::Approx(std::pow(1.5, 1.5)));
        if (p == 1.5) CHECK(rel.constant == doctest::Approx(2.0));
    }
}
