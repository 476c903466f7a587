#pragma once

#include <stdexcept>
#include <string>

namespace paxl {

// Shape or dimension disagreement between operands.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Out-of-range index (class targets, row selectors, lexicon ids).
struct IndexError : std::runtime_error {
  explicit IndexError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or otherwise numerically unusable inputs.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Cosine-style operation fed a vector with (near-)zero norm.
struct DegenerateVectorError : NumericError {
  explicit DegenerateVectorError(const std::string& msg) : NumericError(msg) {}
};

// Misuse of the autodiff graph (non-scalar loss, repeated backward).
struct GraphError : std::runtime_error {
  explicit GraphError(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation requested on an input it is not defined for
// (e.g. the antonym transform of a symmetric action).
struct NotApplicableError : std::runtime_error {
  explicit NotApplicableError(const std::string& msg) : std::runtime_error(msg) {}
};

// Corrupt or malformed checkpoint stream.
struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration: unknown key, bad value, violated constraint.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace paxl
