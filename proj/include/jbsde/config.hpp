#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "jbsde/problem.hpp"
#include "jbsde/regression.hpp"

namespace jbsde {

// One requested check. `params` always carries the full parameter set for the
// check with defaults filled in, so the echoed config is self-describing.
// Known names: residual, norms, hypotheses, power_integral, jump_taylor,
// apriori, contraction, localization.
struct CheckRequest {
    std::string name;
    nlohmann::json params;
};

// Declarative experiment description. Loaded from a JSON file; every field
// not present in the file is defaulted here and echoed back by effective().
// The ensemble seed is the one field with no default: reproducibility is
// mandatory, so a config without an explicit seed is rejected.
struct ExperimentConfig {
    // problem: either a builtin key or an inline definition (normalized JSON).
    std::string problem_key;
    nlohmann::json inline_problem;  // null unless the file defined the problem inline

    double p = 2.0;
    double beta = 1.0;

    double horizon = 1.0;
    std::size_t n_steps = 64;

    std::size_t n_paths = 1024;
    std::uint64_t seed = 0;  // mandatory in the file

    RegressionConfig regression;
    int picard_max_iters = 20;
    double picard_tol = 1e-6;

    std::vector<CheckRequest> checks;

    std::string out_dir = "out";
    std::vector<std::string> formats = {"json", "csv"};

    // Full JSON echo with every default made explicit. Keys are emitted in
    // sorted order, so two files describing the same experiment — whatever
    // their key order — echo byte-identically.
    nlohmann::json effective() const;
};

// Parses and validates `text`. Parse failures carry line/column positions;
// validation failures name the offending field. `origin` labels the source in
// error messages (a path or a pseudo-name for in-memory text).
ExperimentConfig parse_config(const std::string& text, const std::string& origin);

// parse_config over the contents of `path`.
ExperimentConfig load_config(const std::string& path);

// Materializes the configured problem: a builtin key lookup, or the inline
// problem grammar (affine driver in (y, z, u) plus an optional componentwise
// odd-power monotone term; affine terminal in the terminal factor state and
// the compensated jump totals).
BuiltProblem build_config_problem(const ExperimentConfig& cfg);

// The inline grammar on its own (spec is the normalized JSON object).
BuiltProblem parse_inline_problem(const nlohmann::json& spec, double p, double beta);

}  // namespace jbsde
