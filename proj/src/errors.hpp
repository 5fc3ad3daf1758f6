#pragma once

#include <stdexcept>
#include <string>

namespace gflowot {

// Contract violation: bad shapes, invalid states, guard limits exceeded.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced where a finite value is required, or a solver failed to
// reach its numeric target.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace gflowot
