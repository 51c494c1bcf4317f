#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "jbsde/cache.hpp"
#include "jbsde/config.hpp"
#include "jbsde/errors.hpp"
#include "jbsde/grid.hpp"
#include "jbsde/problem.hpp"
#include "jbsde/report.hpp"
#include "jbsde/solver.hpp"
#include "jbsde/weights.hpp"

using namespace jbsde;

namespace {

std::string temp_file(const char* stem) {
    const auto dir = std::filesystem::temp_directory_path();
    return (dir / (std::string("jbsde_io_") + std::to_string(::getpid()) + "_" + stem)).string();
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const char* stem)
        : path(std::filesystem::temp_directory_path() /
               (std::string("jbsde_iod_") + std::to_string(::getpid()) + "_" + stem)) {}
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

PathEnsemble small_jump_ensemble() {
    const auto bp = make_builtin_problem("jump_terminal", 2.0, 1.0);
    return make_problem_ensemble(bp, make_time_grid(1.0, 6), 16, 42);
}

}  // namespace

// ---------------------------------------------------------------------------
// Ensemble and solution caches
// ---------------------------------------------------------------------------

TEST_CASE("ensemble cache round trip reproduces every field bit for bit") {
    const auto ens = small_jump_ensemble();
    const auto path = temp_file("ens.jbsd");
    cache_ensemble(ens, path);
    const auto back = load_ensemble(path);

    CHECK(back.grid.times == ens.grid.times);
    CHECK(back.seed == ens.seed);
    CHECK(back.n_paths == ens.n_paths);
    CHECK(back.dim_k == ens.dim_k);
    CHECK(back.n_marks == ens.n_marks);
    CHECK(back.dim_x == ens.dim_x);
    CHECK(back.dw == ens.dw);
    CHECK(back.dn == ens.dn);
    CHECK(back.x == ens.x);

    // Serializing the loaded copy yields the identical byte stream.
    const auto path2 = temp_file("ens2.jbsd");
    cache_ensemble(back, path2);
    CHECK(slurp(path) == slurp(path2));
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("solution cache round trip keeps arrays and annotations") {
    const auto bp = make_builtin_problem("lipschitz_zu", 2.0, 1.0);
    const auto ens = make_problem_ensemble(bp, make_time_grid(1.0, 4), 8, 7);
    const auto w = compute_weight_paths(bp.problem, ens);
    RegressionConfig cfg;
    auto sol = solve_backward(bp.problem, ens, w, cfg, Coupling::ExplicitZU);
    sol.problem_name = "lipschitz_zu";
    sol.scheme_summary = "degree-1 regression, explicit controls";

    const auto path = temp_file("sol.jbss");
    cache_solution(sol, path);
    const auto back = load_solution(path);
    std::filesystem::remove(path);

    CHECK(back.n_paths == sol.n_paths);
    CHECK(back.n_steps == sol.n_steps);
    CHECK(back.dim_d == sol.dim_d);
    CHECK(back.dim_k == sol.dim_k);
    CHECK(back.n_marks == sol.n_marks);
    CHECK(back.y == sol.y);
    CHECK(back.z == sol.z);
    CHECK(back.u == sol.u);
    CHECK(back.problem_name == sol.problem_name);
    CHECK(back.scheme_summary == sol.scheme_summary);
}

TEST_CASE("cache loader rejects a wrong magic") {
    const auto path = temp_file("junk.jbsd");
    spit(path, {'N', 'O', 'P', 'E', 0, 0, 0, 0});
    CHECK_THROWS_WITH_AS(load_ensemble(path),
                         doctest::Contains("does not start with the JBSD magic"), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("cache loader rejects an unsupported version") {
    const auto ens = small_jump_ensemble();
    const auto path = temp_file("ver.jbsd");
    cache_ensemble(ens, path);
    auto bytes = slurp(path);
    bytes[4] = 9;  // version word follows the 4-byte magic, little endian
    spit(path, bytes);
    CHECK_THROWS_WITH_AS(load_ensemble(path), doctest::Contains("unsupported format version 9"),
                         FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("cache loader names expected and actual sizes of a truncated file") {
    const auto ens = small_jump_ensemble();
    const auto path = temp_file("trunc.jbsd");
    cache_ensemble(ens, path);
    auto bytes = slurp(path);
    bytes.resize(bytes.size() / 2);
    spit(path, bytes);
    try {
        load_ensemble(path);
        FAIL("expected a CorruptionError");
    } catch (const CorruptionError& e) {
        const std::string what = e.what();
        CHECK(what.find("expected") != std::string::npos);
        CHECK(what.find("actual") != std::string::npos);
    }
    std::filesystem::remove(path);
}

// ---------------------------------------------------------------------------
// Config parsing and validation
// ---------------------------------------------------------------------------

TEST_CASE("minimal config is defaulted and echoed with every field explicit") {
    const auto cfg = parse_config(
        R"({"problem": "linear_y", "ensemble": {"seed": 3}})", "mem");
    CHECK(cfg.problem_key == "linear_y");
    CHECK(cfg.p == 2.0);
    CHECK(cfg.beta == 1.0);
    CHECK(cfg.horizon == 1.0);
    CHECK(cfg.n_steps == 64);
    CHECK(cfg.n_paths == 1024);
    CHECK(cfg.seed == 3);
    CHECK(cfg.regression.basis_degree == 1);
    CHECK(cfg.picard_max_iters == 20);
    CHECK(cfg.picard_tol == 1e-6);
    CHECK(cfg.out_dir == "out");
    CHECK(cfg.formats == std::vector<std::string>{"json", "csv"});

    const auto echo = cfg.effective();
    CHECK(echo.at("problem") == "linear_y");
    CHECK(echo.at("p") == 2.0);
    CHECK(echo.at("grid").at("n_steps") == 64);
    CHECK(echo.at("ensemble").at("seed") == 3);
    CHECK(echo.at("scheme").at("basis_degree") == 1);
    CHECK(echo.at("output").at("formats") == nlohmann::json({"json", "csv"}));
}

TEST_CASE("p at or below 1 is rejected by name") {
    CHECK_THROWS_WITH_AS(
        parse_config(R"({"problem": "zero", "p": 1.0, "ensemble": {"seed": 1}})", "mem"),
        doctest::Contains("p must exceed 1"), ConfigError);
}

TEST_CASE("a config without a seed is rejected") {
    CHECK_THROWS_WITH_AS(
        parse_config(R"({"problem": "zero", "ensemble": {"n_paths": 10}})", "mem"),
        doctest::Contains("no entropy defaults"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(R"({"problem": "zero"})", "mem"),
                         doctest::Contains("no entropy defaults"), ConfigError);
}

TEST_CASE("malformed JSON reports the line and column") {
    try {
        parse_config("{\n  \"problem\": \"zero\",\n  oops\n}", "broken.json");
        FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        CHECK(what.find("broken.json") != std::string::npos);
        CHECK(what.find("line 3") != std::string::npos);
        CHECK(what.find("column") != std::string::npos);
    }
}

TEST_CASE("unknown keys are rejected, not ignored") {
    CHECK_THROWS_AS(
        parse_config(R"({"problem": "zero", "ensemble": {"seed": 1}, "grdi": {}})", "mem"),
        ConfigError);
    CHECK_THROWS_AS(parse_config(
                        R"({"problem": "zero", "ensemble": {"seed": 1, "paths": 5}})", "mem"),
                    ConfigError);
}

TEST_CASE("unknown problem keys and unknown checks are rejected") {
    CHECK_THROWS_AS(parse_config(R"({"problem": "no_such", "ensemble": {"seed": 1}})", "mem"),
                    ConfigError);
    CHECK_THROWS_WITH_AS(
        parse_config(
            R"({"problem": "zero", "ensemble": {"seed": 1}, "checks": ["nrms"]})", "mem"),
        doctest::Contains("known checks"), ConfigError);
}

TEST_CASE("duplicate checks are rejected") {
    CHECK_THROWS_AS(
        parse_config(
            R"({"problem": "zero", "ensemble": {"seed": 1},
                "checks": ["norms", {"name": "norms"}]})",
            "mem"),
        ConfigError);
}

TEST_CASE("jump_taylor check demands p in (1,2)") {
    CHECK_THROWS_WITH_AS(
        parse_config(
            R"({"problem": "zero", "p": 2.5, "ensemble": {"seed": 1},
                "checks": ["jump_taylor"]})",
            "mem"),
        doctest::Contains("requires p in (1,2)"), ConfigError);
}

TEST_CASE("inline problem: affine pieces evaluate and coefficients default") {
    const auto cfg = parse_config(R"({
        "problem": {
            "name": "affine_demo",
            "jumps": {"marks": [[1.0]], "kernel_mass": 0.5, "intensity": 2.0},
            "factor": {"dim": 1, "x0": [0.25]},
            "driver": {"constant": [0.25], "linear_y": [[-1.5]],
                        "linear_z": [[0.5]], "linear_u": [[0.3]]},
            "terminal": {"constant": [2.0], "state": [[1.0]], "compensated_jump": [[0.4]]}
        },
        "ensemble": {"seed": 5}
    })",
                                  "mem");
    const auto bp = build_config_problem(cfg);
    CHECK(bp.problem.name == "affine_demo");
    CHECK(bp.problem.dim_d == 1);
    CHECK(bp.problem.depends_on_z);
    CHECK(bp.problem.depends_on_u);
    CHECK(bp.factor.dim == 1);
    CHECK(bp.factor.x0 == std::vector<double>{0.25});

    // f(t, y, z, u) = 0.25 - 1.5 y + 0.5 z + 0.3 u
    GeneratorArgs ga;
    const double y = 2.0, z = -1.0, u = 0.5;
    ga.y = std::span<const double>(&y, 1);
    ga.z = std::span<const double>(&z, 1);
    ga.u = std::span<const double>(&u, 1);
    double out = 0.0;
    evaluate_generator(bp.problem, ga, std::span<double>(&out, 1));
    CHECK(out == doctest::Approx(0.25 - 1.5 * 2.0 + 0.5 * (-1.0) + 0.3 * 0.5).epsilon(1e-15));

    // xi = 2 + X_T + 0.4 (N_T - compensator_T)
    TerminalArgs ta;
    const double xT = 1.75, jumps = 3.0, comp = 1.0;
    ta.x = std::span<const double>(&xT, 1);
    ta.jump_totals = std::span<const double>(&jumps, 1);
    ta.compensator_totals = std::span<const double>(&comp, 1);
    evaluate_terminal(bp.problem, ta, std::span<double>(&out, 1));
    CHECK(out == doctest::Approx(2.0 + 1.75 + 0.4 * 2.0).epsilon(1e-15));

    // Defaulted coefficients: alpha = top eigenvalue of sym(linear_y); the
    // Lipschitz constants bound the affine parts (the u constant is measured
    // against the kernel-weighted norm with rate 0.5 * 2 = 1); phi and g from
    // the constant and the y matrix.
    CHECK(bp.problem.alpha(0.0, {}) == doctest::Approx(-1.5).epsilon(1e-15));
    CHECK(bp.problem.lipschitz_z(0.0, {}) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(bp.problem.lipschitz_u(0.0, {}) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(bp.problem.phi_growth(0.0, {}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(bp.problem.g_growth(0.0, {}) == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("inline problem: odd-power coefficients must be nonpositive") {
    CHECK_THROWS_WITH_AS(
        parse_config(R"({
            "problem": {"driver": {"odd_power": {"exponent": 3, "coefficients": [0.1]}}},
            "ensemble": {"seed": 5}
        })",
                     "mem"),
        doctest::Contains("nonpositive"), ConfigError);
}

TEST_CASE("inline problem: a u coefficient on a massless mark is rejected") {
    CHECK_THROWS_WITH_AS(
        parse_config(R"({
            "problem": {"jumps": {"marks": [[1.0]], "kernel_mass": 0.0},
                         "driver": {"linear_u": [[0.2]]}},
            "ensemble": {"seed": 5}
        })",
                     "mem"),
        doctest::Contains("compensator mass is zero"), ConfigError);
}

TEST_CASE("config hash is independent of key order in the file") {
    const auto a = parse_config(
        R"({"problem": "zero", "p": 2.5, "beta": 2.0, "ensemble": {"seed": 9, "n_paths": 64}})",
        "mem");
    const auto b = parse_config(
        R"({"ensemble": {"n_paths": 64, "seed": 9}, "beta": 2.0, "p": 2.5, "problem": "zero"})",
        "mem");
    CHECK(a.effective() == b.effective());
    CHECK(config_hash_hex(a.effective()) == config_hash_hex(b.effective()));
    CHECK(config_hash_hex(a.effective()).size() == 16);
}

// ---------------------------------------------------------------------------
// Reports and outputs
// ---------------------------------------------------------------------------

TEST_CASE("empty bundle renders header-only CSV tables") {
    ReportBundle bundle;
    CHECK(norms_csv(bundle) ==
          "name,component,p,beta,n_paths,value,std_error\n");
    CHECK(checks_csv(bundle) ==
          "name,problem,p,beta,n_paths,n_steps,lhs,lhs_sigma,rhs,rhs_sigma,"
          "measured_ratio,slack_sigmas,passed\n");
    CHECK(picard_csv(bundle) == "label,iteration,distance\n");
}

TEST_CASE("run_experiment: zero problem has zero residual and full determinism") {
    const auto cfg = parse_config(R"({
        "problem": "zero",
        "grid": {"n_steps": 6},
        "ensemble": {"n_paths": 32, "seed": 21},
        "checks": ["residual", "norms"]
    })",
                                  "mem");
    const auto b1 = run_experiment(cfg);
    REQUIRE(b1.checks.size() == 2);
    CHECK(b1.checks[0].name == "norms");  // sorted by name
    CHECK(b1.checks[1].name == "residual");
    CHECK(b1.checks[1].lhs == 0.0);  // Y = Z = U = 0 satisfies the equation exactly
    CHECK(b1.checks[1].passed);
    REQUIRE(!b1.residuals.empty());
    CHECK(b1.residuals[0].max_l2 == 0.0);

    const auto b2 = run_experiment(cfg);
    CHECK(report_to_json(b1, false).dump() == report_to_json(b2, false).dump());
    CHECK(b1.config_hash == b2.config_hash);
}

TEST_CASE("every requested check appears exactly once in the report") {
    const auto cfg = parse_config(R"({
        "problem": "lipschitz_zu",
        "grid": {"n_steps": 4},
        "ensemble": {"n_paths": 32, "seed": 22},
        "checks": ["residual", "norms", "hypotheses",
                    {"name": "power_integral", "n_samples": 50, "dim": 2},
                    {"name": "apriori", "case": "DataPge2"},
                    {"name": "contraction", "n_pairs": 2}]
    })",
                                  "mem");
    const auto bundle = run_experiment(cfg);
    REQUIRE(bundle.checks.size() == 6);
    std::vector<std::string> names;
    for (const auto& c : bundle.checks) names.push_back(c.name);
    const std::vector<std::string> expected = {"apriori:DataPge2", "contraction", "hypotheses",
                                               "norms",            "power_integral", "residual"};
    CHECK(names == expected);
}

TEST_CASE("write_outputs produces the requested files plus a manifest") {
    const auto cfg = parse_config(R"({
        "problem": "zero",
        "grid": {"n_steps": 4},
        "ensemble": {"n_paths": 16, "seed": 23},
        "checks": ["norms"]
    })",
                                  "mem");
    const auto bundle = run_experiment(cfg);
    TempDir dir("outs");
    const std::vector<std::string> formats = {"json", "csv"};
    const auto manifest = write_outputs(bundle, dir.path.string(), formats);

    CHECK(std::filesystem::exists(dir.path / "report.json"));
    CHECK(std::filesystem::exists(dir.path / "norms.csv"));
    CHECK(std::filesystem::exists(dir.path / "checks.csv"));
    CHECK(std::filesystem::exists(dir.path / "picard.csv"));
    CHECK(std::filesystem::exists(dir.path / "manifest.json"));
    CHECK(manifest.entries.size() == 4);  // manifest lists the written files, not itself

    // Rewriting the same bundle leaves report.json byte-identical.
    const auto first = slurp((dir.path / "report.json").string());
    write_outputs(bundle, dir.path.string(), formats);
    CHECK(slurp((dir.path / "report.json").string()) == first);

    const std::vector<std::string> bad = {"xml"};
    CHECK_THROWS_AS(write_outputs(bundle, dir.path.string(), bad), std::invalid_argument);
}

TEST_CASE("JBSDE_OUT overrides the configured output directory") {
    ::unsetenv("JBSDE_OUT");
    CHECK(resolve_output_dir("cfg_dir") == "cfg_dir");
    ::setenv("JBSDE_OUT", "env_dir", 1);
    CHECK(resolve_output_dir("cfg_dir") == "env_dir");
    ::setenv("JBSDE_OUT", "", 1);
    CHECK(resolve_output_dir("cfg_dir") == "cfg_dir");
    ::unsetenv("JBSDE_OUT");
}
