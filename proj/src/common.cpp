#include "mvsuq/common.hpp"

#include <cstdio>

namespace mvsuq {

const char* err_name(Err code) {
  switch (code) {
    case Err::NonPositiveDepth: return "NonPositiveDepth";
    case Err::ParallelRays: return "ParallelRays";
    case Err::CoincidentCenters: return "CoincidentCenters";
    case Err::DegeneratePoint: return "DegeneratePoint";
    case Err::ExcessiveConvergence: return "ExcessiveConvergence";
    case Err::NonPositiveDisparity: return "NonPositiveDisparity";
    case Err::WindowTooLarge: return "WindowTooLarge";
    case Err::EmptyDisparityRange: return "EmptyDisparityRange";
    case Err::DimensionMismatch: return "DimensionMismatch";
    case Err::ImageTooSmall: return "ImageTooSmall";
    case Err::InsufficientViews: return "InsufficientViews";
    case Err::KBelowTwo: return "KBelowTwo";
    case Err::FrameMismatch: return "FrameMismatch";
    case Err::EmptyCloud: return "EmptyCloud";
    case Err::DegenerateGeometry: return "DegenerateGeometry";
    case Err::EmptyReference: return "EmptyReference";
    case Err::NonMonotonicEdges: return "NonMonotonicEdges";
    case Err::InsufficientBins: return "InsufficientBins";
    case Err::DegenerateSamples: return "DegenerateSamples";
    case Err::NoSamples: return "NoSamples";
    case Err::EmptyTable: return "EmptyTable";
    case Err::InvalidSpec: return "InvalidSpec";
    case Err::NoIntersection: return "NoIntersection";
    case Err::IoError: return "IoError";
    case Err::BadFormat: return "BadFormat";
    case Err::ConfigError: return "ConfigError";
  }
  return "UnknownError";
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace mvsuq
