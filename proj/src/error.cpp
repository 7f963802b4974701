#include "epistitch/error.hpp"

namespace epistitch {

std::string_view errorName(ErrorCode code) {
  switch (code) {
    case ErrorCode::InsufficientMatches: return "InsufficientMatches";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::DegeneratePlane: return "DegeneratePlane";
    case ErrorCode::ScaleMismatch: return "ScaleMismatch";
    case ErrorCode::InvalidSize: return "InvalidSize";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::PointAtInfinity: return "PointAtInfinity";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::EpipoleAtInfinity: return "EpipoleAtInfinity";
    case ErrorCode::ExcessiveGrid: return "ExcessiveGrid";
    case ErrorCode::ExcessiveCanvas: return "ExcessiveCanvas";
    case ErrorCode::EmptyOverlap: return "EmptyOverlap";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::NoEvalPoints: return "NoEvalPoints";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::BoundsError: return "BoundsError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(errorName(code)) + ": " + what), code_(code) {}

}  // namespace epistitch
