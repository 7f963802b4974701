#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace epistitch {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

/// Homogeneous image point. Never the zero vector; two points are the same
/// when their coordinates agree up to a nonzero scale.
class HPoint2 {
 public:
  explicit HPoint2(const Vec3& coords);

  static HPoint2 fromPixel(const Vec2& p) { return HPoint2(Vec3(p.x(), p.y(), 1.0)); }

  const Vec3& coords() const { return h_; }
  HPoint2 normalized() const { return HPoint2(h_.normalized()); }

  /// True when the third coordinate is not negligible relative to the norm.
  bool isFinite(double tol = 1e-12) const;
  /// Inhomogeneous pixel coordinates. Throws PointAtInfinity.
  Vec2 pixel() const;
  bool sameAs(const HPoint2& other, double angle_tol = 1e-9) const;

 private:
  Vec3 h_;
};

/// A match between a pixel of the target image (I) and one of the reference
/// image (J). `src` is x, `dst` is x'.
struct Correspondence {
  Vec2 src;
  Vec2 dst;
};

/// Rank-2 fundamental matrix with x'^T F x = 0. Always stored with unit
/// Frobenius norm and its first significant entry (row-major) positive.
class FundamentalMatrix {
 public:
  /// Projects `m` onto the nearest rank-2 matrix and applies the
  /// normalization convention. Throws DegenerateGeometry for rank < 2.
  static FundamentalMatrix fromMatrix(const Mat3& m);

  const Mat3& matrix() const { return m_; }

 private:
  explicit FundamentalMatrix(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

/// Applies the sign/scale convention without touching the rank.
Mat3 normalizeFundamental(const Mat3& m);

/// World plane n^T X + d = 0.
struct PlaneParams {
  Vec3 n;
  double d = 0.0;
};

/// Relative pose of the second camera: P' = K'[R | t], with unit-norm t.
class RigidMotion {
 public:
  /// Validates R (orthonormal, det 1, within 1e-9 after re-orthonormalizing)
  /// and normalizes t. Throws DegenerateGeometry for zero t or a non-rotation.
  static RigidMotion create(const Mat3& rotation, const Vec3& translation);

  const Mat3& rotation() const { return r_; }
  const Vec3& direction() const { return t_; }

 private:
  RigidMotion(const Mat3& r, const Vec3& t) : r_(r), t_(t) {}
  Mat3 r_;
  Vec3 t_;
};

/// Nearest rotation matrix (SVD projection with det fixed to +1).
Mat3 orthonormalize(const Mat3& m);

/// Square pixels, zero skew.
struct CameraIntrinsics {
  double f = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Mat3 matrix() const;
  Mat3 inverse() const;
};

/// Line a u + b v + c = 0 with a^2 + b^2 = 1.
struct Line2 {
  Vec3 abc;

  double signedDistance(const Vec2& p) const { return abc.x() * p.x() + abc.y() * p.y() + abc.z(); }
};

enum class EpipolarSide {
  InJFromX,       ///< line F x in the reference image
  InIFromXPrime,  ///< line F^T x' in the target image
};

struct EpipolePair {
  HPoint2 e;   ///< in the target image, F e = 0
  HPoint2 ep;  ///< in the reference image, F^T e' = 0
};

struct RansacConfig {
  double threshold = 1.0;  ///< Sampson distance, px
  double confidence = 0.995;
  int max_iterations = 2000;
  std::uint64_t seed = 0;
};

struct FundamentalFit {
  FundamentalMatrix F;
  std::vector<bool> inliers;
  int iterations = 0;

  std::size_t inlierCount() const;
};

struct HomographyFit {
  Mat3 H;
  std::vector<bool> inliers;
  int iterations = 0;

  std::size_t inlierCount() const;
};

Mat3 skew(const Vec3& v);

/// Hartley normalization: centroid at the origin, RMS radius sqrt(2).
Mat3 hartleyNormalization(std::span<const Vec2> points);

/// Normalized eight-point estimate over all given correspondences (>= 8).
FundamentalMatrix eightPoint(std::span<const Correspondence> corrs);

/// Robust estimate of F. Hypotheses come from random eight-point samples and
/// are ranked by a mixture (inlier Gaussian + uniform outlier) likelihood of
/// their Sampson errors. The winner is re-estimated on its inliers until the
/// inlier set is stable; the returned mask is relative to the returned F.
///
/// Throws InsufficientMatches (< 8 inputs or < 8 inliers) and
/// DegenerateGeometry when a single homography explains >= 95% of the
/// inliers (pure rotation or a planar scene).
FundamentalFit estimateFundamentalRansac(std::span<const Correspondence> corrs, const RansacConfig& cfg);

/// Fundamental-matrix RANSAC without the homography degeneracy test.
FundamentalFit ransacFundamentalUnchecked(std::span<const Correspondence> corrs, const RansacConfig& cfg);

EpipolePair epipoles(const FundamentalMatrix& F);
/// Same for an arbitrary matrix; throws DegenerateGeometry unless rank is 2.
EpipolePair epipoles(const Mat3& F);

/// Throws DegenerateGeometry if x is the epipole (line undefined).
Line2 epipolarLine(const FundamentalMatrix& F, const Vec2& x, EpipolarSide side);

/// First-order geometric error of a correspondence, in pixels. Returns +inf
/// when all four gradient terms vanish.
double sampsonDistance(const FundamentalMatrix& F, const Correspondence& c);
double sampsonDistance(const Mat3& F, const Correspondence& c);

/// H = K'(R - t n^T / d) K^{-1}, keeping the absolute scale. `t` is the
/// actual translation, not only its direction. Throws DegeneratePlane if
/// |d| <= 1e-9.
Mat3 planeInducedHomography(const CameraIntrinsics& K, const CameraIntrinsics& Kp, const Mat3& R, const Vec3& t,
                            const PlaneParams& plane);
Mat3 planeInducedHomography(const CameraIntrinsics& K, const CameraIntrinsics& Kp, const RigidMotion& motion,
                            const PlaneParams& plane);

struct RankOnePart {
  Vec3 m;
  double residual = 0.0;
};

/// Least-squares m with H ~= H_inf + e' m^T (unit e'). Throws ScaleMismatch
/// when the fit residual exceeds 1e-3 ||H||_F.
RankOnePart rankOneEpipolarPart(const Mat3& H, const Mat3& H_inf, const Vec3& ep);

/// Projective transfer proj(H [p;1]).
Vec2 transfer(const Mat3& H, const Vec2& p);

/// Normalized DLT homography over >= 4 correspondences, src -> dst.
Mat3 homographyDlt(std::span<const Correspondence> corrs);

/// One-sided transfer error ||proj(H src) - dst||.
double transferError(const Mat3& H, const Correspondence& c);

/// Robust homography from 4-point samples scored by inlier count (ties by
/// total truncated error), refit on inliers. Throws InsufficientMatches.
HomographyFit estimateHomographyRansac(std::span<const Correspondence> corrs, const RansacConfig& cfg);

}  // namespace epistitch
