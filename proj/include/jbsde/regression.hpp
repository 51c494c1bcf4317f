#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace jbsde {

struct RegressionConfig {
    int basis_degree = 1;     // total polynomial degree over the state variables
    double ridge = 0.0;       // Tikhonov weight on the normal equations
    int implicit_max_iters = 100;
    double implicit_tol = 1e-12;
    double implicit_damping = 0.5;
};

// Monomial basis of total degree <= degree over dim variables (degree 0 on an
// empty state is the constant regression).
std::size_t polynomial_basis_size(int dim, int degree);

// Least-squares projection onto the polynomial basis, one shared factorization
// for many target columns. Throws SingularRegressionError (advising a ridge)
// when the Gram matrix is numerically rank-deficient and ridge == 0.
class RegressionOperator {
public:
    RegressionOperator(std::span<const double> states, std::size_t n_samples, int dim,
                       const RegressionConfig& cfg);
    ~RegressionOperator();

    RegressionOperator(const RegressionOperator&) = delete;
    RegressionOperator& operator=(const RegressionOperator&) = delete;

    std::size_t basis_size() const;

    // Fitted values of the conditional-expectation estimate at each sample.
    void fit(std::span<const double> targets, std::span<double> fitted) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// One-shot convenience: fitted values for a single target column.
std::vector<double> regress_conditional_expectation(std::span<const double> targets,
                                                    std::span<const double> states,
                                                    std::size_t n_samples, int dim,
                                                    const RegressionConfig& cfg);

}  // namespace jbsde
