#include "jbsde/ensemble.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "jbsde/errors.hpp"
#include "jbsde/rng.hpp"

namespace jbsde {

namespace {

void check_dims(std::size_t n_paths, int dim) {
    if (n_paths == 0) throw std::invalid_argument("ensemble needs at least one path");
    if (dim <= 0) throw std::invalid_argument("dimension must be positive");
}

// One path of jump counts, consuming the path's jump stream step-by-step in
// mark order. Shared by the standalone and the interleaved simulators so both
// produce identical counts for identical left states.
void draw_jump_path(Xoshiro256pp& rng, const TimeGrid& grid, const JumpMeasureSpec& spec,
                    const std::function<std::span<const double>(std::size_t step)>& state_at,
                    std::uint32_t* out) {
    const std::size_t m = spec.n_marks();
    for (std::size_t i = 0; i < grid.n_steps(); ++i) {
        const double t = grid.times[i];
        const auto xs = state_at(i);
        for (std::size_t j = 0; j < m; ++j) {
            const double mean = compensator_rate(spec, j, t, xs) * grid.dt(i);
            out[i * m + j] = poisson_draw(rng, mean);
        }
    }
}

void euler_step(const TimeGrid& grid, const FactorConfig& cfg, int dim_k, std::size_t step,
                std::span<const double> x_in, std::span<const double> dw_step,
                std::span<const std::uint32_t> dn_step, std::span<double> x_out,
                std::vector<double>& scratch) {
    const int d = cfg.dim;
    const double t = grid.times[step];
    const double dt = grid.dt(step);
    for (int c = 0; c < d; ++c) x_out[c] = x_in[c];
    if (cfg.drift) {
        scratch.assign(static_cast<std::size_t>(d), 0.0);
        cfg.drift(t, x_in, scratch);
        for (int c = 0; c < d; ++c) x_out[c] += scratch[c] * dt;
    }
    if (cfg.diffusion && dim_k > 0) {
        scratch.assign(static_cast<std::size_t>(d * dim_k), 0.0);
        cfg.diffusion(t, x_in, scratch);
        for (int c = 0; c < d; ++c)
            for (int k = 0; k < dim_k; ++k)
                x_out[c] += scratch[static_cast<std::size_t>(c * dim_k + k)] * dw_step[static_cast<std::size_t>(k)];
    }
    if (cfg.jump_coeff && !dn_step.empty()) {
        for (std::size_t j = 0; j < dn_step.size(); ++j) {
            if (dn_step[j] == 0) continue;
            scratch.assign(static_cast<std::size_t>(d), 0.0);
            cfg.jump_coeff(t, x_in, j, scratch);
            for (int c = 0; c < d; ++c)
                x_out[c] += scratch[c] * static_cast<double>(dn_step[j]);
        }
    }
}

void check_state_finite(std::span<const double> x, std::size_t path, std::size_t step) {
    for (double v : x)
        if (!std::isfinite(v))
            throw NumericalBlowupError("factor state became non-finite at path " +
                                       std::to_string(path) + ", step " + std::to_string(step));
}

}  // namespace

void validate_jump_spec(const JumpMeasureSpec& spec) {
    if (spec.marks.empty()) throw std::invalid_argument("jump measure needs at least one mark");
    const std::size_t ell = spec.marks.front().size();
    if (ell == 0) throw std::invalid_argument("marks must live in a positive-dimensional space");
    for (const auto& e : spec.marks) {
        if (e.size() != ell) throw std::invalid_argument("marks must share one dimension");
        double n2 = 0.0;
        for (double v : e) n2 += v * v;
        if (n2 == 0.0) throw std::invalid_argument("marks must be nonzero");
    }
}

double compensator_rate(const JumpMeasureSpec& spec, std::size_t mark, double t,
                        std::span<const double> x) {
    const double q = spec.kernel_mass ? spec.kernel_mass(mark, t, x) : 0.0;
    const double lam = spec.jump_intensity ? spec.jump_intensity(t, x) : 0.0;
    if (!std::isfinite(q) || !std::isfinite(lam) || q < 0.0 || lam < 0.0)
        throw ModelViolationError("compensator mass must be finite and nonnegative, got q=" +
                                  std::to_string(q) + " lambda=" + std::to_string(lam) +
                                  " at t=" + std::to_string(t));
    return q * lam;
}

std::vector<double> simulate_brownian(const TimeGrid& grid, std::size_t n_paths, int dim_k,
                                      std::uint64_t seed) {
    check_dims(n_paths, dim_k);
    const std::size_t n = grid.n_steps();
    std::vector<double> dw(n_paths * n * static_cast<std::size_t>(dim_k));
    for (std::size_t p = 0; p < n_paths; ++p) {
        Xoshiro256pp rng(seed, kSaltBrownian, p);
        GaussianSampler gauss(rng);
        double* row = dw.data() + p * n * static_cast<std::size_t>(dim_k);
        for (std::size_t i = 0; i < n; ++i) {
            const double sd = std::sqrt(grid.dt(i));
            for (int k = 0; k < dim_k; ++k) row[i * static_cast<std::size_t>(dim_k) + static_cast<std::size_t>(k)] = sd * gauss();
        }
    }
    return dw;
}

std::vector<std::uint32_t> simulate_jumps(const TimeGrid& grid, const JumpMeasureSpec& spec,
                                          std::span<const double> factor_states, int dim_x,
                                          std::size_t n_paths, std::uint64_t seed) {
    validate_jump_spec(spec);
    if (n_paths == 0) throw std::invalid_argument("ensemble needs at least one path");
    const std::size_t n = grid.n_steps();
    const std::size_t m = spec.n_marks();
    const std::size_t nodes = grid.n_nodes();
    std::vector<std::uint32_t> dn(n_paths * n * m);
    for (std::size_t p = 0; p < n_paths; ++p) {
        Xoshiro256pp rng(seed, kSaltJumps, p);
        auto state_at = [&](std::size_t step) -> std::span<const double> {
            if (dim_x == 0 || factor_states.empty()) return {};
            return factor_states.subspan((p * nodes + step) * static_cast<std::size_t>(dim_x),
                                         static_cast<std::size_t>(dim_x));
        };
        draw_jump_path(rng, grid, spec, state_at, dn.data() + p * n * m);
    }
    return dn;
}

std::vector<double> simulate_factor(const TimeGrid& grid, const FactorConfig& cfg, int dim_k,
                                    std::span<const double> dw, std::span<const std::uint32_t> dn,
                                    int n_marks, std::size_t n_paths) {
    check_dims(n_paths, cfg.dim);
    if (cfg.x0.size() != static_cast<std::size_t>(cfg.dim))
        throw std::invalid_argument("factor initial state has wrong dimension");
    const std::size_t n = grid.n_steps();
    const std::size_t nodes = grid.n_nodes();
    const std::size_t d = static_cast<std::size_t>(cfg.dim);
    std::vector<double> x(n_paths * nodes * d);
    std::vector<double> scratch;
    for (std::size_t p = 0; p < n_paths; ++p) {
        double* row = x.data() + p * nodes * d;
        for (std::size_t c = 0; c < d; ++c) row[c] = cfg.x0[c];
        for (std::size_t i = 0; i < n; ++i) {
            std::span<const double> dw_step =
                dim_k > 0 ? dw.subspan((p * n + i) * static_cast<std::size_t>(dim_k),
                                       static_cast<std::size_t>(dim_k))
                          : std::span<const double>{};
            std::span<const std::uint32_t> dn_step =
                n_marks > 0 ? dn.subspan((p * n + i) * static_cast<std::size_t>(n_marks),
                                         static_cast<std::size_t>(n_marks))
                            : std::span<const std::uint32_t>{};
            euler_step(grid, cfg, dim_k, i, {row + i * d, d}, dw_step, dn_step,
                       {row + (i + 1) * d, d}, scratch);
            check_state_finite({row + (i + 1) * d, d}, p, i);
        }
    }
    return x;
}

PathEnsemble make_ensemble(const TimeGrid& grid, const JumpMeasureSpec& spec,
                           const FactorConfig& factor, std::size_t n_paths, int dim_k,
                           std::uint64_t seed) {
    validate_jump_spec(spec);
    check_dims(n_paths, dim_k);
    if (factor.dim < 0) throw std::invalid_argument("factor dimension must be nonnegative");

    PathEnsemble ens;
    ens.grid = grid;
    ens.seed = seed;
    ens.n_paths = n_paths;
    ens.dim_k = dim_k;
    ens.n_marks = static_cast<int>(spec.n_marks());
    ens.dim_x = factor.dim;

    ens.dw = simulate_brownian(grid, n_paths, dim_k, seed);

    const std::size_t n = grid.n_steps();
    const std::size_t nodes = grid.n_nodes();
    const std::size_t m = spec.n_marks();
    const std::size_t d = static_cast<std::size_t>(factor.dim);
    ens.dn.assign(n_paths * n * m, 0);
    ens.x.assign(n_paths * nodes * d, 0.0);
    if (factor.dim > 0 && factor.x0.size() != d)
        throw std::invalid_argument("factor initial state has wrong dimension");

    std::vector<double> scratch;
    for (std::size_t p = 0; p < n_paths; ++p) {
        Xoshiro256pp jump_rng(seed, kSaltJumps, p);
        double* xrow = ens.x.data() + p * nodes * d;
        for (std::size_t c = 0; c < d; ++c) xrow[c] = factor.x0[c];
        std::uint32_t* nrow = ens.dn.data() + p * n * m;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = grid.times[i];
            const std::span<const double> xs{xrow + i * d, d};
            for (std::size_t j = 0; j < m; ++j) {
                const double mean = compensator_rate(spec, j, t, xs) * grid.dt(i);
                nrow[i * m + j] = poisson_draw(jump_rng, mean);
            }
            if (factor.dim > 0) {
                euler_step(grid, factor, dim_k, i, xs, ens.dw_step(p, i), {nrow + i * m, m},
                           {xrow + (i + 1) * d, d}, scratch);
                check_state_finite({xrow + (i + 1) * d, d}, p, i);
            }
        }
    }
    return ens;
}

}  // namespace jbsde
