#pragma once

#include <stdexcept>
#include <string>

namespace fedsim {

// Caller passed arguments that violate an operation's contract.
struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Two parameter sets / matrices do not have compatible dimensions.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A persisted file could not be decoded.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace fedsim
