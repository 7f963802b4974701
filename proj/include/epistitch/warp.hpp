#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "epistitch/edf.hpp"
#include "epistitch/geometry.hpp"
#include "epistitch/image.hpp"

namespace epistitch {

struct ImageSize {
  int width = 0;
  int height = 0;
};

/// Output raster. Canvas pixel (i, j) sits at reference coordinates
/// (i + ox, j + oy).
struct Canvas {
  int ox = 0;
  int oy = 0;
  int width = 0;
  int height = 0;

  Vec2 toReference(const Vec2& canvas_px) const { return canvas_px + Vec2(ox, oy); }
  Vec2 toCanvas(const Vec2& ref_px) const { return ref_px - Vec2(ox, oy); }
};

/// Forward-mapped lattice q = p + displacement(p), in reference coordinates.
struct WarpMesh {
  Vec2 origin = Vec2::Zero();
  double spacing = 1.0;
  int nu = 0;
  int nv = 0;
  std::vector<Vec2> positions;
  /// Anchor usable (pre-image in front of the target camera).
  std::vector<std::uint8_t> anchor_valid;
  /// Quad (i, j) -> (i+1, j+1) is positively oriented, convex and all four
  /// anchors are valid. Size (nu-1)*(nv-1).
  std::vector<std::uint8_t> quad_valid;

  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * static_cast<std::size_t>(nu) + static_cast<std::size_t>(i); }
  std::size_t quadIndex(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(nu - 1) + static_cast<std::size_t>(i);
  }
};

struct WarpOutput {
  ImageBuffer image;
  std::size_t covered_pixels = 0;
  std::size_t invalid_quads = 0;
  /// Pixels where re-applying the bilinear quad map missed by > 1e-3 px.
  std::size_t inversion_failures = 0;
};

struct BlendOutput {
  ImageBuffer image;
  bool empty_overlap = false;
};

/// Pre-image of a warped-plane point must satisfy (H^{-1} [p;1])_3 >= this.
inline constexpr double kMinPreimageDepth = 1e-6;

/// Scales H so that the target center maps with third coordinate +1.
Mat3 normalizeBaseHomography(const Mat3& H, ImageSize target);

/// Bounding box of the target corners mapped through H; corners whose
/// homogeneous third coordinate is below 1e-6 are discarded. Throws
/// ExcessiveCanvas when no corner survives.
Rect warpedBounds(ImageSize target, const Mat3& H);

/// Axis-aligned box of the reference rectangle and every valid forward-mapped
/// anchor (anchors clamped to the warped bounds before displacement). Throws
/// ExcessiveCanvas beyond `cap` times the reference area.
Canvas computeCanvas(ImageSize ref, ImageSize target, const Mat3& H, const DisplacementGrid& grid, double cap = 64.0);

WarpMesh buildWarpMesh(const DisplacementGrid& grid, const Mat3& H);

/// Solves q = a + s (b - a) + t (d - a) + s t (a - b + c - d) for (s, t)
/// in the quad a=(0,0), b=(1,0), c=(1,1), d=(0,1). Returns nothing when q
/// is outside.
std::optional<Vec2> inverseBilinear(const Vec2& q, const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d);

/// Backward warp: each canvas pixel inside a valid quad is pulled back to
/// the warped plane by inverse bilinear interpolation, then to the target
/// through H^{-1}, and sampled bilinearly.
WarpOutput backwardWarp(const ImageBuffer& target, const WarpMesh& mesh, const Mat3& H, const Canvas& canvas);

/// Copies the reference image into canvas coordinates.
ImageBuffer placeOnCanvas(const ImageBuffer& ref, const Canvas& canvas);

/// Feather weights: L1 distance to the nearest invalid pixel (outside the
/// raster counts as invalid). Zero outside the mask, >= 1 inside.
std::vector<double> featherWeights(const Mask& mask);

/// Distance-weighted blend of two canvas-aligned layers.
BlendOutput linearBlend(const ImageBuffer& ref_on_canvas, const ImageBuffer& warped_target);

}  // namespace epistitch
