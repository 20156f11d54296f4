#pragma once

#include <stdexcept>
#include <string>

namespace sima {

// Shape/rank mismatches between tensors.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Invalid configuration (e.g. D not divisible by H).
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Non-finite values where finiteness is required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File read/write failures.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Contract violations in the autodiff tape (non-scalar loss, double backward).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Training produced a non-finite loss; carries the step at which it happened.
struct TrainingDiverged : std::runtime_error {
    explicit TrainingDiverged(int step_)
        : std::runtime_error("training diverged at step " + std::to_string(step_)),
          step(step_) {}
    int step;
};

} // namespace sima
