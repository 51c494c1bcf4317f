#include "jbsde/regression.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "jbsde/errors.hpp"

namespace jbsde {

namespace {

// Multi-indices of total degree <= degree over dim variables, graded order.
std::vector<std::vector<int>> multi_indices(int dim, int degree) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(static_cast<std::size_t>(dim), 0);
    // Recursive enumeration; dim is tiny (factor dimension).
    std::function<void(int, int)> rec = [&](int pos, int remaining) {
        if (pos == dim) {
            out.push_back(cur);
            return;
        }
        for (int e = 0; e <= remaining; ++e) {
            cur[static_cast<std::size_t>(pos)] = e;
            rec(pos + 1, remaining - e);
        }
        cur[static_cast<std::size_t>(pos)] = 0;
    };
    if (dim == 0) {
        out.push_back({});
        return out;
    }
    rec(0, degree);
    return out;
}

}  // namespace

std::size_t polynomial_basis_size(int dim, int degree) {
    if (dim < 0 || degree < 0) throw std::invalid_argument("basis dimensions must be nonnegative");
    return multi_indices(dim, degree).size();
}

struct RegressionOperator::Impl {
    Eigen::MatrixXd design;            // n_samples x B
    Eigen::LDLT<Eigen::MatrixXd> gram; // factorization of design' design + ridge I
    std::size_t n_samples = 0;
    std::size_t basis = 0;
};

RegressionOperator::RegressionOperator(std::span<const double> states, std::size_t n_samples,
                                       int dim, const RegressionConfig& cfg)
    : impl_(std::make_unique<Impl>()) {
    if (n_samples == 0) throw std::invalid_argument("regression needs at least one sample");
    if (dim > 0 && states.size() != n_samples * static_cast<std::size_t>(dim))
        throw std::invalid_argument("state block has wrong size");
    const auto indices = multi_indices(dim, cfg.basis_degree);
    const std::size_t B = indices.size();
    impl_->n_samples = n_samples;
    impl_->basis = B;
    impl_->design.resize(static_cast<Eigen::Index>(n_samples), static_cast<Eigen::Index>(B));
    for (std::size_t s = 0; s < n_samples; ++s) {
        for (std::size_t b = 0; b < B; ++b) {
            double v = 1.0;
            for (int c = 0; c < dim; ++c) {
                const int e = indices[b][static_cast<std::size_t>(c)];
                if (e == 0) continue;
                v *= std::pow(states[s * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)],
                              e);
            }
            impl_->design(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(b)) = v;
        }
    }
    Eigen::MatrixXd gram = impl_->design.transpose() * impl_->design;
    if (cfg.ridge > 0.0)
        gram += cfg.ridge * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(B),
                                                      static_cast<Eigen::Index>(B));
    impl_->gram.compute(gram);
    if (cfg.ridge == 0.0) {
        const Eigen::VectorXd d = impl_->gram.vectorD();
        const double dmax = d.maxCoeff();
        const double dmin = d.minCoeff();
        if (!(dmax > 0.0) || dmin <= dmax * 1e-12)
            throw SingularRegressionError(
                "design matrix is numerically rank-deficient; set a positive ridge "
                "regularization to proceed");
    }
}

RegressionOperator::~RegressionOperator() = default;

std::size_t RegressionOperator::basis_size() const { return impl_->basis; }

void RegressionOperator::fit(std::span<const double> targets, std::span<double> fitted) const {
    if (targets.size() != impl_->n_samples || fitted.size() != impl_->n_samples)
        throw std::invalid_argument("target block has wrong size");
    Eigen::Map<const Eigen::VectorXd> t(targets.data(),
                                        static_cast<Eigen::Index>(impl_->n_samples));
    const Eigen::VectorXd rhs = impl_->design.transpose() * t;
    const Eigen::VectorXd coef = impl_->gram.solve(rhs);
    Eigen::Map<Eigen::VectorXd> f(fitted.data(), static_cast<Eigen::Index>(impl_->n_samples));
    f = impl_->design * coef;
}

std::vector<double> regress_conditional_expectation(std::span<const double> targets,
                                                    std::span<const double> states,
                                                    std::size_t n_samples, int dim,
                                                    const RegressionConfig& cfg) {
    RegressionOperator op(states, n_samples, dim, cfg);
    std::vector<double> fitted(n_samples);
    op.fit(targets, fitted);
    return fitted;
}

}  // namespace jbsde
