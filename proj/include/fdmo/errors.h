#pragma once

#include <stdexcept>
#include <string>

namespace fdmo {

struct FdmoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// geometry
struct AngleNearPi : FdmoError { using FdmoError::FdmoError; };
struct BehindCamera : FdmoError { using FdmoError::FdmoError; };
struct OutOfImage : FdmoError { using FdmoError::FdmoError; };
struct NonPositiveInverseDepth : FdmoError { using FdmoError::FdmoError; };

// imageproc
struct CalibrationMismatch : FdmoError { using FdmoError::FdmoError; };
struct TooSmall : FdmoError { using FdmoError::FdmoError; };
struct OutOfBounds : FdmoError { using FdmoError::FdmoError; };

// direct odometry
struct TooFewPoints : FdmoError { using FdmoError::FdmoError; };
struct NumericalFailure : FdmoError { using FdmoError::FdmoError; };

// features
struct CorpusTooSmall : FdmoError { using FdmoError::FdmoError; };

// feature map
struct InsufficientParallax : FdmoError { using FdmoError::FdmoError; };
struct RaysDiverge : FdmoError { using FdmoError::FdmoError; };
struct UnknownKeyframe : FdmoError { using FdmoError::FdmoError; };

// recovery
struct TooFewCorrespondences : FdmoError { using FdmoError::FdmoError; };
struct DegenerateConfiguration : FdmoError { using FdmoError::FdmoError; };
struct RecoveryFailed : FdmoError { using FdmoError::FdmoError; };
struct Underconstrained : FdmoError { using FdmoError::FdmoError; };

// eval / io
struct MissingTimes : FdmoError { using FdmoError::FdmoError; };
struct BadCalibration : FdmoError { using FdmoError::FdmoError; };
struct BadCsv : FdmoError { using FdmoError::FdmoError; };
struct SegmentTooShort : FdmoError { using FdmoError::FdmoError; };
struct NoGroundTruthAtBoundary : FdmoError { using FdmoError::FdmoError; };

}  // namespace fdmo
