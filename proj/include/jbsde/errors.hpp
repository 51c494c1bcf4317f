#pragma once

#include <stdexcept>
#include <string>

namespace jbsde {

// All failures surface as typed exceptions so callers can distinguish
// model problems (bad inputs, violated hypotheses) from numerical ones.

struct ModelViolationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct HypothesisViolationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericalBlowupError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TransformOverflowError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SingularRegressionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ImplicitStepError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GeneratorEvaluationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PreconditionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegeneratePairError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct QuadratureToleranceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CorruptionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace jbsde
