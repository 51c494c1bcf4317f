#include "jbsde/report.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "jbsde/conditions.hpp"
#include "jbsde/errors.hpp"
#include "jbsde/grid.hpp"
#include "jbsde/solver.hpp"
#include "jbsde/suites.hpp"
#include "jbsde/weights.hpp"

namespace jbsde {
namespace {

using nlohmann::json;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json check_to_json(const EstimateReport& r) {
    json j;
    j["name"] = r.name;
    j["problem"] = r.meta.problem;
    j["p"] = r.meta.p;
    j["beta"] = r.meta.beta;
    j["n_paths"] = r.meta.n_paths;
    j["n_steps"] = r.meta.n_steps;
    j["lhs"] = r.lhs;
    j["lhs_sigma"] = r.lhs_sigma;
    j["rhs"] = r.rhs;
    j["rhs_sigma"] = r.rhs_sigma;
    j["measured_ratio"] = r.measured_ratio;
    j["slack_sigmas"] = r.slack_sigmas;
    j["passed"] = r.passed;
    return j;
}

json norm_to_json(const NamedNorm& n) {
    json j;
    j["name"] = norm_kind_name(n.estimate.kind);
    j["component"] = n.component;
    j["p"] = n.estimate.p;
    j["beta"] = n.estimate.beta;
    j["n_paths"] = n.estimate.n_paths;
    j["value"] = n.estimate.value;
    j["std_error"] = n.estimate.mc_std_error;
    return j;
}

// ---------------------------------------------------------------------------
// Check dispatch
// ---------------------------------------------------------------------------

struct ExperimentState {
    BuiltProblem bp;
    PathEnsemble ens;
    WeightPaths w;
    bool solved = false;
    DiscreteSolution solution;
};

void fill_meta(EstimateReport& r, const ExperimentConfig& cfg, const ExperimentState& st) {
    r.meta.p = cfg.p;
    r.meta.beta = cfg.beta;
    r.meta.n_paths = cfg.n_paths;
    r.meta.n_steps = cfg.n_steps;
    r.meta.problem = st.bp.problem.name;
}

EstimateReport dispatch_check(const CheckRequest& cr, const ExperimentConfig& cfg,
                              ExperimentState& st, ReportBundle& bundle) {
    const ProblemSpec& problem = st.bp.problem;

    if (cr.name == "residual") {
        const ResidualReport rr = bsde_residual(problem, st.solution, st.ens, st.w);
        bundle.residuals.push_back({"residual", rr.node_l2, rr.max_l2});
        EstimateReport r;
        r.name = "residual";
        r.lhs = rr.max_l2;
        r.passed = std::isfinite(rr.max_l2);
        fill_meta(r, cfg, st);
        return r;
    }

    if (cr.name == "norms") {
        struct Row {
            NormKind kind;
            Component comp;
            const char* label;
        };
        const Row rows[] = {{NormKind::S_p, Component::Y, "Y"},
                            {NormKind::S_pA, Component::Y, "Y"},
                            {NormKind::B_p, Component::Y, "Y"},
                            {NormKind::H_p, Component::Z, "Z"},
                            {NormKind::L_pQ, Component::U, "U"},
                            {NormKind::L_pN, Component::U, "U"},
                            {NormKind::frakL_p, Component::U, "U"},
                            {NormKind::E_p, Component::Y, "triple"}};
        EstimateReport r;
        r.name = "norms";
        r.passed = true;
        for (const Row& row : rows) {
            const NormEstimate est = weighted_norm(row.kind, row.comp, st.solution, st.w, st.ens,
                                                   problem.jump_spec, cfg.p, cfg.beta);
            if (!std::isfinite(est.value)) r.passed = false;
            if (row.kind == NormKind::E_p) {
                r.lhs = est.value;
                r.lhs_sigma = est.mc_std_error;
            }
            bundle.norms.push_back({row.label, est});
        }
        fill_meta(r, cfg, st);
        return r;
    }

    if (cr.name == "hypotheses") {
        ProbeSpec ps;
        ps.n_samples = cr.params.at("n_samples").get<std::size_t>();
        ps.seed = cr.params.at("seed").get<std::uint64_t>();
        const ConditionReport rep = probe_conditions(problem, st.ens, st.w, ps);
        EstimateReport r;
        r.name = "hypotheses";
        double violations = 0.0;
        for (const auto& e : rep.entries) violations += static_cast<double>(e.n_violations);
        r.lhs = violations;
        r.passed = rep.all_passed;
        fill_meta(r, cfg, st);
        return r;
    }

    if (cr.name == "power_integral") {
        const PowerIntegralSweep sweep = sweep_power_integral_bound(
            cr.params.at("n_samples").get<std::size_t>(), cr.params.at("dim").get<int>(),
            cr.params.at("seed").get<std::uint64_t>(), cr.params.at("p_max").get<double>());
        EstimateReport r = sweep.report;
        r.name = "power_integral";
        r.meta.beta = cfg.beta;
        r.meta.n_steps = 0;
        r.meta.problem = "pointwise";
        return r;
    }

    if (cr.name == "jump_taylor") {
        const JumpTaylorSweep sweep = sweep_jump_taylor_bound(st.solution, st.ens, cfg.p);
        EstimateReport r = sweep.report;
        r.name = "jump_taylor";
        fill_meta(r, cfg, st);
        return r;
    }

    if (cr.name == "apriori") {
        const std::string case_name = cr.params.at("case").get<std::string>();
        AprioriCase c = AprioriCase::P2;
        if (case_name == "P2") c = AprioriCase::P2;
        else if (case_name == "Pgt2_Y") c = AprioriCase::Pgt2_Y;
        else if (case_name == "Pgt2_ZU") c = AprioriCase::Pgt2_ZU;
        else if (case_name == "Plt2") c = AprioriCase::Plt2;
        else if (case_name == "DataPge2") c = AprioriCase::DataPge2;
        else if (case_name == "DataPlt2") c = AprioriCase::DataPlt2;
        const DifferenceData data = make_single_data(problem, st.solution, st.ens);
        EstimateReport r = apriori_check(c, data, st.w, st.ens, problem.jump_spec, cfg.p, cfg.beta,
                                         &problem);
        r.name = "apriori:" + case_name;
        r.meta.problem = problem.name;
        return r;
    }

    if (cr.name == "contraction") {
        const auto pairs = make_contraction_pairs(problem, cfg.n_paths, cfg.n_steps,
                                                  cr.params.at("n_pairs").get<std::size_t>(),
                                                  cr.params.at("amplitude").get<double>(),
                                                  cr.params.at("seed").get<std::uint64_t>());
        const ContractionEstimate est = estimate_contraction_factor(
            problem, st.ens, st.w, cfg.regression, cr.params.at("beta").get<double>(), pairs);
        EstimateReport r;
        r.name = "contraction";
        r.lhs = est.factor;
        r.lhs_sigma = est.factor_sigma;
        r.rhs = 1.0;
        r.measured_ratio = est.factor;
        r.slack_sigmas = 3.0;
        r.passed = est.factor + 3.0 * est.factor_sigma < 1.0;
        fill_meta(r, cfg, st);
        r.meta.beta = cr.params.at("beta").get<double>();
        return r;
    }

    // localization
    const auto levels = cr.params.at("levels").get<std::vector<double>>();
    const double beta = cr.params.at("beta").get<double>();
    const LocalizationReport rep = verify_localization_convergence(problem, st.ens, st.w, levels,
                                                                   cfg.p, beta, cfg.regression);
    EstimateReport r;
    r.name = "localization";
    r.lhs = rep.e2_distances.empty() ? 0.0 : rep.e2_distances.back();
    r.rhs = 10.0 * cfg.picard_tol;
    r.measured_ratio = r.rhs > 0.0 ? r.lhs / r.rhs : 0.0;
    r.passed = rep.nonincreasing(0.10) && r.lhs <= r.rhs;
    fill_meta(r, cfg, st);
    r.meta.beta = beta;
    return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Hashing and serialization
// ---------------------------------------------------------------------------

std::string config_hash_hex(const nlohmann::json& effective_config) {
    return hex64(fnv1a64(effective_config.dump()));
}

nlohmann::json report_to_json(const ReportBundle& bundle, bool include_timing) {
    json j;
    j["config_hash"] = bundle.config_hash;
    j["version"] = bundle.version;
    if (include_timing) j["wall_seconds"] = bundle.wall_seconds;
    j["effective_config"] = bundle.effective_config;
    json checks = json::array();
    for (const auto& c : bundle.checks) checks.push_back(check_to_json(c));
    j["checks"] = checks;
    json norms = json::array();
    for (const auto& n : bundle.norms) norms.push_back(norm_to_json(n));
    j["norms"] = norms;
    json picard = json::array();
    for (const auto& p : bundle.picard)
        picard.push_back(json{{"label", p.label},
                              {"distances", p.distances},
                              {"converged", p.converged},
                              {"iterations", p.iterations}});
    j["picard"] = picard;
    json residuals = json::array();
    for (const auto& r : bundle.residuals)
        residuals.push_back(json{{"label", r.label}, {"max_l2", r.max_l2}, {"node_l2", r.node_l2}});
    j["residuals"] = residuals;
    return j;
}

std::string norms_csv(const ReportBundle& bundle) {
    std::string out = "name,component,p,beta,n_paths,value,std_error\n";
    for (const auto& n : bundle.norms) {
        out += norm_kind_name(n.estimate.kind) + "," + n.component + "," + fmt(n.estimate.p) + "," +
               fmt(n.estimate.beta) + "," + std::to_string(n.estimate.n_paths) + "," +
               fmt(n.estimate.value) + "," + fmt(n.estimate.mc_std_error) + "\n";
    }
    return out;
}

std::string checks_csv(const ReportBundle& bundle) {
    std::string out =
        "name,problem,p,beta,n_paths,n_steps,lhs,lhs_sigma,rhs,rhs_sigma,measured_ratio,"
        "slack_sigmas,passed\n";
    for (const auto& c : bundle.checks) {
        out += c.name + "," + c.meta.problem + "," + fmt(c.meta.p) + "," + fmt(c.meta.beta) + "," +
               std::to_string(c.meta.n_paths) + "," + std::to_string(c.meta.n_steps) + "," +
               fmt(c.lhs) + "," + fmt(c.lhs_sigma) + "," + fmt(c.rhs) + "," + fmt(c.rhs_sigma) +
               "," + fmt(c.measured_ratio) + "," + fmt(c.slack_sigmas) + "," +
               (c.passed ? "true" : "false") + "\n";
    }
    return out;
}

std::string picard_csv(const ReportBundle& bundle) {
    std::string out = "label,iteration,distance\n";
    for (const auto& p : bundle.picard)
        for (std::size_t i = 0; i < p.distances.size(); ++i)
            out += p.label + "," + std::to_string(i + 1) + "," + fmt(p.distances[i]) + "\n";
    return out;
}

std::string resolve_output_dir(const std::string& configured) {
    const char* env = std::getenv("JBSDE_OUT");
    if (env != nullptr && env[0] != '\0') return env;
    return configured;
}

WriteManifest write_outputs(const ReportBundle& bundle, const std::string& directory,
                            std::span<const std::string> formats) {
    bool want_json = false, want_csv = false;
    for (const auto& f : formats) {
        if (f == "json") want_json = true;
        else if (f == "csv") want_csv = true;
        else throw std::invalid_argument("unknown output format '" + f + "' (json and csv exist)");
    }

    std::error_code ec;
    std::filesystem::create_directories(directory, ec);
    if (ec)
        throw std::runtime_error("cannot create output directory '" + directory +
                                 "': " + ec.message());

    WriteManifest man;
    man.directory = directory;
    const auto emit = [&](const std::string& name, const std::string& content) {
        const std::string path = directory + "/" + name;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
        out << content;
        if (!out) throw std::runtime_error("write to '" + path + "' failed");
        man.entries.push_back({name, content.size(), hex64(fnv1a64(content))});
    };

    if (want_json) emit("report.json", report_to_json(bundle, false).dump(2) + "\n");
    if (want_csv) {
        emit("norms.csv", norms_csv(bundle));
        emit("checks.csv", checks_csv(bundle));
        emit("picard.csv", picard_csv(bundle));
    }

    json manifest;
    manifest["config_hash"] = bundle.config_hash;
    manifest["version"] = bundle.version;
    manifest["wall_seconds"] = bundle.wall_seconds;
    json files = json::array();
    for (const auto& e : man.entries)
        files.push_back(json{{"name", e.name}, {"bytes", e.bytes}, {"fnv1a", e.fnv1a}});
    manifest["files"] = files;
    const std::string manifest_path = directory + "/manifest.json";
    std::ofstream mout(manifest_path, std::ios::binary | std::ios::trunc);
    if (!mout) throw std::runtime_error("cannot open '" + manifest_path + "' for writing");
    mout << manifest.dump(2) << "\n";
    if (!mout) throw std::runtime_error("write to '" + manifest_path + "' failed");
    man.manifest_path = manifest_path;
    return man;
}

// ---------------------------------------------------------------------------
// Experiment execution
// ---------------------------------------------------------------------------

ReportBundle run_experiment(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();

    ExperimentState st{build_config_problem(cfg), {}, {}, false, {}};
    const TimeGrid grid = make_time_grid(cfg.horizon, cfg.n_steps);
    st.ens = make_problem_ensemble(st.bp, grid, cfg.n_paths, cfg.seed);
    st.w = compute_weight_paths(st.bp.problem, st.ens);

    ReportBundle bundle;
    bundle.effective_config = cfg.effective();
    bundle.config_hash = config_hash_hex(bundle.effective_config);

    const auto needs_solution = [](const std::string& name) {
        return name == "residual" || name == "norms" || name == "jump_taylor" ||
               name == "apriori";
    };
    if (std::any_of(cfg.checks.begin(), cfg.checks.end(),
                    [&](const CheckRequest& c) { return needs_solution(c.name); })) {
        PicardOptions opt;
        opt.max_iters = cfg.picard_max_iters;
        opt.tol = cfg.picard_tol;
        opt.regression = cfg.regression;
        PicardTrace trace = picard_iterate(st.bp.problem, st.ens, st.w, opt);
        bundle.picard.push_back(
            {st.bp.problem.name, trace.distances, trace.converged, trace.iterations});
        st.solution = std::move(trace.solution);
        st.solved = true;
    }

    for (const CheckRequest& cr : cfg.checks) {
        const std::string id =
            cr.name == "apriori" ? "apriori:" + cr.params.at("case").get<std::string>() : cr.name;
        try {
            bundle.checks.push_back(dispatch_check(cr, cfg, st, bundle));
        } catch (const std::exception& e) {
            throw std::runtime_error("check '" + id + "' failed: " + e.what());
        }
    }
    std::sort(bundle.checks.begin(), bundle.checks.end(),
              [](const EstimateReport& a, const EstimateReport& b) { return a.name < b.name; });

    bundle.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return bundle;
}

}  // namespace jbsde
