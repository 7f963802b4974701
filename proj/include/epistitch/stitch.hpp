#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epistitch/calibration.hpp"
#include "epistitch/config.hpp"
#include "epistitch/edf.hpp"
#include "epistitch/image.hpp"
#include "epistitch/warp.hpp"

namespace epistitch {

struct StitchResult {
  ImageBuffer panorama;
  /// Reference and warped target layers on the canvas.
  ImageBuffer ref_layer;
  ImageBuffer tgt_layer;
  Mask ref_mask;
  Mask tgt_mask;
  Canvas canvas;
  /// Absent when the homography fallback ran without usable epipolar geometry.
  std::optional<StereoCalibration> calibration;
  /// Homography applied before the displacement field (H_inf, or the global
  /// fallback homography), scaled so the target center has w = 1.
  Mat3 base_homography = Mat3::Identity();
  EDFModel model;
  DisplacementGrid grid;
  std::vector<bool> inliers;
  bool fallback = false;
  std::map<std::string, double> diagnostics;

  /// Position of a target pixel in reference coordinates after the full warp.
  Vec2 mapTargetPoint(const Vec2& y) const;
};

/// Full pipeline: robust F, intrinsics, rotation, H_inf refinement, EDF fit,
/// tapered grid, mesh warp and feather blend. Throws InsufficientMatches,
/// ExcessiveCanvas and ExcessiveGrid; a degenerate epipolar geometry switches
/// to a global homography plus a plain TPS field.
StitchResult stitch(const ImageBuffer& ref, const ImageBuffer& tgt, std::span<const Correspondence> corrs,
                    const PipelineConfig& cfg = {});

/// Calibration only (no warping). Throws DegenerateGeometry instead of
/// falling back.
RefineResult estimateCalibration(ImageSize ref, ImageSize tgt, std::span<const Correspondence> corrs,
                                 const PipelineConfig& cfg, std::vector<bool>* inliers = nullptr);

/// Reference position of a target pixel under a base homography and grid.
Vec2 mapThroughWarp(const Mat3& base, const DisplacementGrid& grid, const Vec2& y);

}  // namespace epistitch
