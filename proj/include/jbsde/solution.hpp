#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace jbsde {

// Backward-equation triple on the grid. Y sits on nodes (terminal slice equals
// the terminal condition exactly); the controls Z and U sit on steps as
// left-endpoint predictable values.
struct DiscreteSolution {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    int dim_d = 1;
    int dim_k = 1;
    int n_marks = 1;

    std::vector<double> y;  // [path][node][d], nodes = n_steps + 1
    std::vector<double> z;  // [path][step][d][k]
    std::vector<double> u;  // [path][step][d][m]

    std::string problem_name;
    std::string scheme_summary;

    std::size_t n_nodes() const { return n_steps + 1; }

    std::size_t y_idx(std::size_t path, std::size_t node, int c = 0) const {
        return (path * n_nodes() + node) * static_cast<std::size_t>(dim_d) +
               static_cast<std::size_t>(c);
    }
    std::size_t z_idx(std::size_t path, std::size_t step, int c = 0, int k = 0) const {
        return ((path * n_steps + step) * static_cast<std::size_t>(dim_d) +
                static_cast<std::size_t>(c)) *
                   static_cast<std::size_t>(dim_k) +
               static_cast<std::size_t>(k);
    }
    std::size_t u_idx(std::size_t path, std::size_t step, int c = 0, int m = 0) const {
        return ((path * n_steps + step) * static_cast<std::size_t>(dim_d) +
                static_cast<std::size_t>(c)) *
                   static_cast<std::size_t>(n_marks) +
               static_cast<std::size_t>(m);
    }

    void allocate() {
        y.assign(n_paths * n_nodes() * static_cast<std::size_t>(dim_d), 0.0);
        z.assign(n_paths * n_steps * static_cast<std::size_t>(dim_d) *
                     static_cast<std::size_t>(dim_k),
                 0.0);
        u.assign(n_paths * n_steps * static_cast<std::size_t>(dim_d) *
                     static_cast<std::size_t>(n_marks),
                 0.0);
    }
};

// Componentwise difference of two compatible solutions.
DiscreteSolution solution_difference(const DiscreteSolution& a, const DiscreteSolution& b);

}  // namespace jbsde
