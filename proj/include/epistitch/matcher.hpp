#pragma once

#include <vector>

#include "epistitch/geometry.hpp"
#include "epistitch/image.hpp"

namespace epistitch {

struct MatcherConfig {
  int max_corners = 1500;
  int nms_radius = 3;
  int patch_radius = 5;
  double harris_k = 0.04;
  /// Corners weaker than this fraction of the strongest response are dropped.
  double response_floor = 1e-3;
  double ratio = 0.8;
};

struct Corner {
  int x = 0;
  int y = 0;
  double response = 0.0;
};

/// Harris corners after non-maximum suppression, strongest first.
std::vector<Corner> detectCorners(const ImageBuffer& img, const MatcherConfig& cfg = {});

/// Mutual nearest-neighbour matching of zero-mean, unit-norm luma patches
/// with a ratio test. Correspondences run target -> reference. Throws
/// InvalidSize (images below 64x64) and InsufficientMatches (< 8 matches).
std::vector<Correspondence> builtinMatch(const ImageBuffer& ref, const ImageBuffer& tgt, const MatcherConfig& cfg = {});

}  // namespace epistitch
