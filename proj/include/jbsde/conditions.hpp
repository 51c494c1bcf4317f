#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "jbsde/problem.hpp"
#include "jbsde/weights.hpp"

namespace jbsde {

// Numeric probes of the admissibility hypotheses on the problem's declared
// box, sampled along simulated states. Violations are reported as data, never
// thrown: rejecting a model is the caller's decision.
struct ProbeSpec {
    std::size_t n_samples = 256;
    std::uint64_t seed = 1;
    double h_floor = 1e-6;         // bottom of the continuity ladder
    double tolerance = 1e-9;       // absolute slack against fp noise
};

struct HypothesisResult {
    std::string name;      // "H2", "H3", "H4", "H6"
    std::size_t n_probes = 0;
    std::size_t n_violations = 0;
    double worst = 0.0;    // largest positive excess over the bound
    std::string witness;   // where the worst excess happened
};

struct ConditionReport {
    std::vector<HypothesisResult> entries;
    // Integrability estimates (reported, not gated):
    double h1_terminal_estimate = 0.0;   // E e^{((p-1) v (p/2)) beta A_T} |xi|^p
    double h4_growth_estimate = 0.0;     // E int e^{((p-1) v 1) beta A} |phi|^p ds
    bool all_passed = true;

    const HypothesisResult* find(const std::string& name) const;
};

ConditionReport probe_conditions(const ProblemSpec& problem, const PathEnsemble& ens,
                                 const WeightPaths& weights, const ProbeSpec& spec);

}  // namespace jbsde
