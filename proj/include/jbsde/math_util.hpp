#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace jbsde {

// Pairwise (tree) summation. Deterministic for a fixed element order and more
// accurate than a running sum; every Monte Carlo reduction in the library goes
// through here so results do not depend on how work might be scheduled.
double pairwise_sum(std::span<const double> v);

struct MeanStdErr {
    double mean = 0.0;
    double std_error = 0.0;  // standard error of the mean
    std::size_t n = 0;
};

// Two-pass mean and standard error over per-path functional values.
MeanStdErr mean_std_error(std::span<const double> v);

inline double sq(double x) { return x * x; }

// Euclidean norm of a small vector (solution components, marks).
double vec_norm(std::span<const double> v);

// |x|^(p-1) * x/|x| reduced to a scalar multiplier: returns |x|^(p-2) with the
// convention 0 for x = 0 (used as the weight on <x_check, .> terms).
double power_dir_weight(std::span<const double> x, double p);

bool all_finite(std::span<const double> v);

// FNV-1a 64-bit content hash for report manifests (change detection only).
std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::uint64_t fnv1a64(const std::string& s);

}  // namespace jbsde
