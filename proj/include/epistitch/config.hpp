#pragma once

#include <optional>

#include "epistitch/calibration.hpp"
#include "epistitch/edf.hpp"
#include "epistitch/geometry.hpp"

namespace epistitch {

struct WarpConfig {
  /// Largest canvas area as a multiple of the reference image area.
  double canvas_cap = 64.0;
};

struct PipelineConfig {
  RansacConfig ransac;
  RefineConfig refine;
  EDFConfig edf;
  WarpConfig warp;
  /// Focal length in pixels used for both views instead of 1.2 max(w, h).
  std::optional<double> focal_hint;
};

/// Throws InvalidSpec when a field is outside its documented range.
void validate(const PipelineConfig& cfg);

}  // namespace epistitch
