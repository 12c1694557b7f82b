#pragma once

#include <stdexcept>
#include <string>

namespace tsopt {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};
struct DuplicatePoints : Error {
    using Error::Error;
};
struct SingularCorrelation : Error {
    using Error::Error;
};
struct SingularCovariance : Error {
    using Error::Error;
};
struct SingularSystem : Error {
    using Error::Error;
};
struct DegenerateWeights : Error {
    using Error::Error;
};
struct SizeTooLarge : Error {
    using Error::Error;
};
struct InfeasibleDecision : Error {
    using Error::Error;
};
struct IncompleteSite : Error {
    using Error::Error;
};
struct AllocationInfeasible : Error {
    using Error::Error;
};
struct ZeroDenominator : Error {
    using Error::Error;
};
struct NonFiniteInput : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};

} // namespace tsopt
