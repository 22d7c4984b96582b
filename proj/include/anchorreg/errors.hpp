#pragma once

#include <stdexcept>

namespace anchorreg {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error { using Error::Error; };
struct DegenerateInput : Error { using Error::Error; };
struct NumericalError : Error { using Error::Error; };
struct ConvergenceFailure : Error { using Error::Error; };
struct InsufficientAnchors : Error { using Error::Error; };
struct EmptyAnchors : Error { using Error::Error; };
struct DegenerateGeometry : Error { using Error::Error; };
struct DegenerateConfiguration : Error { using Error::Error; };
struct AllZeroWeights : Error { using Error::Error; };
struct DisconnectedGraph : Error { using Error::Error; };
struct InvalidDepth : Error { using Error::Error; };
struct MissingGroundTruth : Error { using Error::Error; };
struct InfeasibleGeometry : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace anchorreg
