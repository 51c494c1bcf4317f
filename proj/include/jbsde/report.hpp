#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "jbsde/config.hpp"
#include "jbsde/math_util.hpp"
#include "jbsde/norms.hpp"
#include "jbsde/verifier.hpp"

namespace jbsde {

// One weighted-norm estimate of the solved triple, labeled by the component
// it was taken over ("Y", "Z", "U", or "triple" for the full E-norm).
struct NamedNorm {
    std::string component;
    NormEstimate estimate;
};

struct PicardSummary {
    std::string label;
    std::vector<double> distances;
    bool converged = false;
    int iterations = 0;
};

struct ResidualSummary {
    std::string label;
    std::vector<double> node_l2;
    double max_l2 = 0.0;
};

// Assembled experiment output. Identical configs produce byte-identical
// serializations except for wall_seconds, which is why the timing field is
// opt-in at serialization time and report.json is always written without it
// (the manifest carries the wall time instead).
struct ReportBundle {
    std::string config_hash;  // 16 hex digits, FNV-1a of the canonical config dump
    std::string version = "jbsde 0.1.0";
    double wall_seconds = 0.0;
    nlohmann::json effective_config;

    std::vector<EstimateReport> checks;  // exactly one entry per requested check, sorted by name
    std::vector<NamedNorm> norms;
    std::vector<PicardSummary> picard;
    std::vector<ResidualSummary> residuals;
};

// Canonical hash of an effective config: FNV-1a over the compact dump.
// nlohmann::json objects iterate in sorted key order, so two files spelling
// the same experiment with different key orders hash identically.
std::string config_hash_hex(const nlohmann::json& effective_config);

nlohmann::json report_to_json(const ReportBundle& bundle, bool include_timing);

// CSV renderings (header always present; one row per entry). Columns are
// frozen in the README.
std::string norms_csv(const ReportBundle& bundle);
std::string checks_csv(const ReportBundle& bundle);
std::string picard_csv(const ReportBundle& bundle);

struct ManifestEntry {
    std::string name;  // file name within the output directory
    std::uint64_t bytes = 0;
    std::string fnv1a;  // 16 hex digits of the file content
};

struct WriteManifest {
    std::string directory;
    std::vector<ManifestEntry> entries;
    std::string manifest_path;
};

// Output directory override: returns $JBSDE_OUT when set and nonempty, the
// configured directory otherwise. Applied by the CLI, not by write_outputs.
std::string resolve_output_dir(const std::string& configured);

// Writes report.json (formats containing "json") and norms.csv / checks.csv /
// picard.csv (formats containing "csv") plus manifest.json into `directory`,
// creating it if needed. report.json omits timing so rerunning an identical
// config rewrites byte-identical files; manifest.json lists each written
// file's size and content hash and carries the wall time.
WriteManifest write_outputs(const ReportBundle& bundle, const std::string& directory,
                            std::span<const std::string> formats);

// Executes the configured checks: simulates the ensemble, solves the equation
// once if any check consumes the solution, and dispatches every requested
// check into exactly one EstimateReport entry (plus the norm table, Picard
// trace, and residual profile where applicable). Module errors propagate
// annotated with the failing check's name.
ReportBundle run_experiment(const ExperimentConfig& cfg);

}  // namespace jbsde
