#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "jbsde/grid.hpp"

namespace jbsde {

// Finitely supported jump measure: marks e_1..e_m (nonzero points of R^ell),
// a kernel mass q_j(t, x) >= 0 per mark and a common intensity lambda(t, x).
// The step-i compensator mass of mark j is q_j(t_i, X_i) * lambda(t_i, X_i) * dt_i,
// frozen at the left endpoint.
struct JumpMeasureSpec {
    std::vector<std::vector<double>> marks;
    std::function<double(std::size_t mark, double t, std::span<const double> x)> kernel_mass;
    std::function<double(double t, std::span<const double> x)> jump_intensity;

    std::size_t n_marks() const { return marks.size(); }
};

// Validates mark geometry (nonempty, equal dimension, no zero mark).
void validate_jump_spec(const JumpMeasureSpec& spec);

// Rate q_j(t,x) * lambda(t,x); throws ModelViolationError if either factor is
// negative or non-finite.
double compensator_rate(const JumpMeasureSpec& spec, std::size_t mark, double t,
                        std::span<const double> x);

// Markov factor X driven by the same noise:
//   X_{i+1} = X_i + b(t_i, X_i) dt_i + sigma(t_i, X_i) dW_i + sum_j gamma(t_i, X_i, e_j) dN_i[j].
// Null callbacks mean identically zero. sigma is dim x dim_k row-major.
struct FactorConfig {
    int dim = 0;
    std::vector<double> x0;
    std::function<void(double t, std::span<const double> x, std::span<double> out)> drift;
    std::function<void(double t, std::span<const double> x, std::span<double> out)> diffusion;
    std::function<void(double t, std::span<const double> x, std::size_t mark, std::span<double> out)>
        jump_coeff;
};

struct PathEnsemble {
    TimeGrid grid;
    std::uint64_t seed = 0;
    std::size_t n_paths = 0;
    int dim_k = 0;   // Brownian dimension
    int n_marks = 0;
    int dim_x = 0;   // factor dimension

    std::vector<double> dw;         // [path][step][k]
    std::vector<std::uint32_t> dn;  // [path][step][mark]
    std::vector<double> x;          // [path][node][dim_x], nodes = n_steps + 1

    std::size_t n_steps() const { return grid.n_steps(); }

    double dw_at(std::size_t path, std::size_t step, int k) const {
        return dw[(path * n_steps() + step) * dim_k + static_cast<std::size_t>(k)];
    }
    std::span<const double> dw_step(std::size_t path, std::size_t step) const {
        return {dw.data() + (path * n_steps() + step) * dim_k, static_cast<std::size_t>(dim_k)};
    }
    std::uint32_t dn_at(std::size_t path, std::size_t step, int mark) const {
        return dn[(path * n_steps() + step) * n_marks + static_cast<std::size_t>(mark)];
    }
    std::span<const double> x_node(std::size_t path, std::size_t node) const {
        return {x.data() + (path * grid.n_nodes() + node) * dim_x, static_cast<std::size_t>(dim_x)};
    }
};

// Brownian increments with Var = dt_i per component; pure function of the
// arguments and seed, one stream per path.
std::vector<double> simulate_brownian(const TimeGrid& grid, std::size_t n_paths, int dim_k,
                                      std::uint64_t seed);

// Conditionally Poisson counts given factor states at the left node; throws
// ModelViolationError when a compensator mass comes out negative. factor_states
// is [path][node][dim_x] (pass an empty span with dim_x = 0 for state-free
// intensities).
std::vector<std::uint32_t> simulate_jumps(const TimeGrid& grid, const JumpMeasureSpec& spec,
                                          std::span<const double> factor_states, int dim_x,
                                          std::size_t n_paths, std::uint64_t seed);

// Euler recursion for the factor given the noise blocks; throws
// NumericalBlowupError naming the first non-finite (path, step).
std::vector<double> simulate_factor(const TimeGrid& grid, const FactorConfig& cfg, int dim_k,
                                    std::span<const double> dw, std::span<const std::uint32_t> dn,
                                    int n_marks, std::size_t n_paths);

// Full orchestration: Brownian block, then per path the interleaved
// jumps-then-factor stepping (so state-dependent intensities see the frozen
// left state). Identical to the standalone calls whenever intensity and factor
// decouple, because each path consumes its private streams in the same order.
PathEnsemble make_ensemble(const TimeGrid& grid, const JumpMeasureSpec& spec,
                           const FactorConfig& factor, std::size_t n_paths, int dim_k,
                           std::uint64_t seed);

}  // namespace jbsde
