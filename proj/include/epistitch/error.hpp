#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace epistitch {

enum class ErrorCode {
  InsufficientMatches,
  DegenerateGeometry,
  DegeneratePlane,
  ScaleMismatch,
  InvalidSize,
  NoConvergence,
  PointAtInfinity,
  SingularSystem,
  EpipoleAtInfinity,
  ExcessiveGrid,
  ExcessiveCanvas,
  EmptyOverlap,
  InvalidSpec,
  NoEvalPoints,
  ParseError,
  BoundsError,
  IoError,
};

std::string_view errorName(ErrorCode code);

// Every failure raised by the library carries one of the codes above so the
// CLI can map it onto a documented exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace epistitch
