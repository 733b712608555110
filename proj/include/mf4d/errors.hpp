#pragma once

#include <stdexcept>

namespace mf4d {

// Error taxonomy mirrored by the CLI exit codes: precondition violations are
// std::invalid_argument (exit 2), the classes below map to 3 / 4 / 5.

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FlowStallError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InconclusiveError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// tau sits on (or numerically indistinguishable from) a window threshold.
// A usage error: the caller picked a parameter where the degree is undefined.
struct ThresholdError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace mf4d
