#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "epistitch/edf.hpp"
#include "epistitch/geometry.hpp"
#include "epistitch/image.hpp"
#include "epistitch/warp.hpp"

namespace epistitch {

struct MetricsReport {
  double ssim = 0.0;
  double psnr = 0.0;
  double projectivity_mean_px = 0.0;
  double projectivity_max_px = 0.0;
  int n_eval_points = 0;
  long overlap_area_px = 0;
};

/// Mean SSIM of the Rec.601 luma over 11x11 Gaussian windows (sigma 1.5)
/// that lie fully inside `mask`. Throws EmptyOverlap when no window fits.
double ssim(const ImageBuffer& a, const ImageBuffer& b, const Mask& mask);

/// PSNR over every channel sample of the masked pixels, capped at 99 dB.
double psnr(const ImageBuffer& a, const ImageBuffer& b, const Mask& mask);

/// AND of two masks eroded by `erosion` pixels.
Mask overlapMask(const Mask& a, const Mask& b, int erosion = 5);

/// Target point -> reference point; empty when the point has no image.
using PointMap = std::function<std::optional<Vec2>(const Vec2&)>;

/// A target point y on the epipolar line F^T x' of the match (x, x').
struct ProjectivityProbe {
  Correspondence match;
  Vec2 y;
};

/// For every match whose target epipolar line crosses the non-overlap part
/// of the target (points that `map` sends outside `ref_rect`), three probes
/// at 25/50/75% of the longest such stretch.
std::vector<ProjectivityProbe> projectivityProbes(const FundamentalMatrix& F, std::span<const Correspondence> matches,
                                                  ImageSize target, const Rect& ref_rect, const PointMap& map);

struct ProjectivityResult {
  double mean_px = 0.0;
  double max_px = 0.0;
  int n = 0;
};

/// Distance from map(y) to the reference epipolar line F y (the line through
/// x' and e') for every probe.
/// Throws NoEvalPoints when no probe maps to a finite point.
ProjectivityResult projectivityMetric(const FundamentalMatrix& F, const PointMap& map,
                                      std::span<const ProjectivityProbe> probes);

/// Points evenly spaced along the part of the target epipolar line F^T x'
/// that lies inside the target image.
std::vector<Vec2> sampleEpipolarLine(const FundamentalMatrix& F, const Vec2& xprime, ImageSize target, int count);

}  // namespace epistitch
