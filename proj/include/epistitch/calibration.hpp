#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "epistitch/geometry.hpp"

namespace epistitch {

/// Two-view calibration. H_inf = K' R K^{-1} always holds by construction.
struct StereoCalibration {
  CameraIntrinsics K;   ///< target view I
  CameraIntrinsics Kp;  ///< reference view J
  RigidMotion motion;
  FundamentalMatrix F;
  HPoint2 e;
  HPoint2 ep;
  Mat3 H_inf;

  /// Builds H_inf from (K, K', R) and the unit epipoles from F.
  static StereoCalibration assemble(const CameraIntrinsics& K, const CameraIntrinsics& Kp, const RigidMotion& motion,
                                    const FundamentalMatrix& F);
};

struct RefineConfig {
  int max_iters = 100;
  double rel_tol = 1e-10;
  double damping_init = 1e-3;
  /// Evaluate x^T H_inf F x instead of x^T H_inf^T F x in the first term.
  bool eq4_literal = false;
};

struct RefineResult {
  StereoCalibration calibration;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  /// Objective after every accepted step, starting with the initial value.
  std::vector<double> objective_history;
  int iterations = 0;
  /// False when the iteration cap was hit while still improving.
  bool converged = true;
};

struct CompatibilityResidual {
  double skew = 0.0;      ///< ||A + A^T||_F / ||A||_F with A = H_inf^T F
  double axis_err = 0.0;  ///< angle between the skew axis of A and e, radians
};

/// Principal point at the image center, focal length from the hint or
/// 1.2 max(width, height). Throws InvalidSize.
CameraIntrinsics initialIntrinsics(int width, int height, std::optional<double> focal_hint = std::nullopt);

/// The four (R, t) factorizations of an essential matrix, after projecting
/// it to have singular values (1, 1, 0).
std::array<RigidMotion, 4> essentialFactorizations(const Mat3& E);

/// Number of correspondences that triangulate in front of both cameras.
int cheiralityCount(const RigidMotion& motion, const CameraIntrinsics& K, const CameraIntrinsics& Kp,
                    std::span<const Correspondence> corrs);

/// Decomposes E = K'^T F K and keeps the factorization with the most points
/// in front of both cameras. Throws DegenerateGeometry without a strict
/// majority.
RigidMotion rotationFromF(const FundamentalMatrix& F, const CameraIntrinsics& K, const CameraIntrinsics& Kp,
                          std::span<const Correspondence> inliers);

Mat3 infiniteHomography(const CameraIntrinsics& K, const CameraIntrinsics& Kp, const Mat3& R);

CompatibilityResidual compatibilityResidual(const Mat3& H_inf, const FundamentalMatrix& F);

/// Sum over correspondences of the first-order transfer error of H_inf
/// against the epipolar geometry of F:
///   [(x^T H^T F x)^2 + (x'^T F H^{-1} x')^2] / [(Fx)_1^2 + (Fx)_2^2 + (F^T x')_1^2 + (F^T x')_2^2]
double infiniteHomographyObjective(const Mat3& H_inf, const FundamentalMatrix& F, std::span<const Correspondence> corrs,
                                   bool literal = false);

/// Damped least squares over (f, f', rotation) with F held fixed.
/// Principal points stay at their initial values.
RefineResult refineCalibration(const StereoCalibration& init, std::span<const Correspondence> inliers,
                               const RefineConfig& cfg = {});

}  // namespace epistitch
