#pragma once

#include <stdexcept>
#include <string>

namespace rgi {

// Base class for every error raised by the library. User-facing code can
// catch this to distinguish expected failures (bad input, bad config) from
// programming errors, which surface as std::logic_error.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};
struct InvalidEdge : Error {
    using Error::Error;
};
struct BatchTooSmall : Error {
    using Error::Error;
};
struct InvalidProbability : Error {
    using Error::Error;
};
struct TapeConsumed : Error {
    using Error::Error;
};
struct InvalidEpoch : Error {
    using Error::Error;
};
struct DivergenceError : Error {
    using Error::Error;
};
struct ParseError : Error {
    using Error::Error;
};
struct CountMismatch : Error {
    using Error::Error;
};
struct SplitError : Error {
    using Error::Error;
};
struct DegenerateLabels : Error {
    using Error::Error;
};
struct EmptyEvaluation : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct CheckpointError : Error {
    using Error::Error;
};

}  // namespace rgi
