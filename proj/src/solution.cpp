#include "jbsde/solution.hpp"

#include <stdexcept>

namespace jbsde {

DiscreteSolution solution_difference(const DiscreteSolution& a, const DiscreteSolution& b) {
    if (a.n_paths != b.n_paths || a.n_steps != b.n_steps || a.dim_d != b.dim_d ||
        a.dim_k != b.dim_k || a.n_marks != b.n_marks)
        throw std::invalid_argument("solutions are not shape-compatible");
    DiscreteSolution d = a;
    d.problem_name = a.problem_name + "-" + b.problem_name;
    for (std::size_t i = 0; i < d.y.size(); ++i) d.y[i] -= b.y[i];
    for (std::size_t i = 0; i < d.z.size(); ++i) d.z[i] -= b.z[i];
    for (std::size_t i = 0; i < d.u.size(); ++i) d.u[i] -= b.u[i];
    return d;
}

}  // namespace jbsde
