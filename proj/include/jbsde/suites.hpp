#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "jbsde/ensemble.hpp"
#include "jbsde/problem.hpp"
#include "jbsde/solution.hpp"

namespace jbsde {

// One named pass/fail observation with its measured numbers spelled out.
struct SuiteCase {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct SuiteResult {
    std::string suite;
    std::vector<SuiteCase> cases;
    double seconds = 0.0;

    bool all_passed() const {
        for (const auto& c : cases)
            if (!c.passed) return false;
        return true;
    }
};

// Gaussian control fields (Y = 0) shaped like the problem's solutions; the
// shared input generator for contraction studies.
DiscreteSolution random_control_field(const ProblemSpec& problem, std::size_t n_paths,
                                      std::size_t n_steps, std::uint64_t seed, double amplitude);

std::vector<std::pair<DiscreteSolution, DiscreteSolution>> make_contraction_pairs(
    const ProblemSpec& problem, std::size_t n_paths, std::size_t n_steps, std::size_t n_pairs,
    double amplitude, std::uint64_t seed);

// The named study suites. Each is deterministic: every seed, tolerance and
// grid size is pinned inside the suite. The same functions back the CLI's
// `suite` verb and the acceptance binary.
SuiteResult run_oracle_suite();          // closed-form solutions reproduced
SuiteResult run_inequality_suite();      // pointwise inequality sweeps
SuiteResult run_ito_suite();             // discrete weighted-power identity
SuiteResult run_apriori_suite();         // a priori bundle checks
SuiteResult run_contraction_suite();     // frozen-sweep contraction ladder
SuiteResult run_convergence_suite();     // localization level studies
SuiteResult run_uniqueness_suite();      // Picard limit independence
SuiteResult run_infrastructure_suite();  // cache, report determinism, residual order

}  // namespace jbsde
