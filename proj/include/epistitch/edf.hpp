#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "epistitch/geometry.hpp"

namespace epistitch {

/// How the affine part of the field is tied to the epipole.
enum class AffineCoupling {
  /// Each axis solves its own bordered TPS system; the affine coefficients
  /// of u and v are e'_1 m and e'_2 m' respectively.
  PerAxis,
  /// One m shared by both axes (affine displacement parallel to e'); the
  /// orthogonality condition becomes M^T (e'_1 w + e'_2 w') = 0.
  SharedEpipolar,
};

struct EDFConfig {
  double rho = 8.0 * std::numbers::pi;
  /// Multiplies rho; the effective regularizer is rho * lambda_scale.
  double lambda_scale = 1.0;
  int cell_px = 10;
  /// Transition width outside the overlap, in multiples of the largest residual.
  double taper_factor = 5.0;
  AffineCoupling coupling = AffineCoupling::PerAxis;

  double effectiveRho() const { return rho * lambda_scale; }
};

/// One control point: its position after the infinite homography and the
/// residual displacement to its match.
struct ControlResidual {
  Vec2 center;
  Vec2 g;
};

struct ResidualSet {
  std::vector<ControlResidual> items;
  /// Index into the input correspondence list for every item.
  std::vector<std::size_t> source;
  /// Correspondences dropped because H x reached the line at infinity.
  std::size_t points_at_infinity = 0;

  double maxNorm() const;
};

/// Thin-plate displacement field
///   du(p) = sum_i w_i phi(|p - c_i|)  + e'_1 (m  . [p;1])
///   dv(p) = sum_i w'_i phi(|p - c_i|) + e'_2 (m' . [p;1])
/// with phi(r) = r^2 ln r.
struct EDFModel {
  std::vector<Vec2> centers;
  Eigen::VectorXd w;
  Eigen::VectorXd wprime;
  Vec3 m = Vec3::Zero();
  Vec3 mprime = Vec3::Zero();
  Vec2 eprime = Vec2::Ones();
  double rho = 0.0;
  /// Largest control residual the model was fitted to (drives the taper).
  double max_residual = 0.0;

  /// A model with no centers evaluates to zero everywhere.
  Vec2 displacement(const Vec2& p) const;
};

/// phi(r) = r^2 ln r, phi(0) = 0.
double tpsKernel(double r);

/// x_inf = proj(H_inf x) and g = x' - x_inf for every correspondence.
ResidualSet computeResiduals(const Mat3& H_inf, std::span<const Correspondence> corrs);

/// Fits the epipolar displacement field. Throws SingularSystem for fewer than
/// three distinct non-collinear centers and EpipoleAtInfinity when e' has no
/// inhomogeneous form.
EDFModel fitEdf(std::span<const ControlResidual> residuals, const HPoint2& eprime, const EDFConfig& cfg);

/// Standard TPS with an unconstrained affine part per axis (e' replaced by
/// (1, 1)); used when the epipolar geometry is unusable.
EDFModel fitPlainTps(std::span<const ControlResidual> residuals, const EDFConfig& cfg);

/// Largest violation of the linear system solved by fitEdf, relative to the
/// largest right-hand side entry, evaluated in the original pixel frame.
double edfSystemResidual(const EDFModel& model, std::span<const ControlResidual> residuals, AffineCoupling coupling);

struct Rect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  bool empty() const { return !(x1 >= x0 && y1 >= y0); }
  bool contains(const Vec2& p) const { return p.x() >= x0 && p.x() <= x1 && p.y() >= y0 && p.y() <= y1; }
  /// Euclidean distance to the rectangle, 0 inside.
  double distanceTo(const Vec2& p) const;
};

/// Uniform anchor lattice with row-major storage (index = j * nu + i).
struct DisplacementGrid {
  Vec2 origin = Vec2::Zero();
  double spacing = 1.0;
  int nu = 0;
  int nv = 0;
  std::vector<Vec2> displacement;
  std::vector<double> weight;

  Vec2 anchor(int i, int j) const { return origin + spacing * Vec2(i, j); }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * static_cast<std::size_t>(nu) + static_cast<std::size_t>(i); }
  /// Bilinear interpolation of the anchor displacements (clamped at the border).
  Vec2 interpolate(const Vec2& p) const;
};

/// Taper weight at distance `dist` outside the overlap for transition width T.
double taperWeight(double dist, double width);

/// Samples the tapered field on a lattice covering `warped_bbox`. Throws
/// ExcessiveGrid above 4e6 anchors.
DisplacementGrid buildDisplacementGrid(const EDFModel& model, const Rect& warped_bbox, const Rect& ref_rect,
                                       const EDFConfig& cfg);

}  // namespace epistitch
