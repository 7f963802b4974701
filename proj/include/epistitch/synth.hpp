#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "epistitch/geometry.hpp"
#include "epistitch/image.hpp"

namespace epistitch {

/// Rig, scene and sampling parameters of a synthetic two-view pair. The
/// target camera is K[I|0]; the reference camera is K'[R|t].
struct SceneSpec {
  int width = 640;
  int height = 480;
  CameraIntrinsics K{800.0, 320.0, 240.0};
  CameraIntrinsics Kp{800.0, 320.0, 240.0};
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3(0.2, 0.0, 0.02);
  std::vector<PlaneParams> planes;
  int plane_points = 200;
  int free_points = 0;
  double free_depth_min = 3.0;
  double free_depth_max = 30.0;
  double noise_sigma = 0.0;
  double outlier_fraction = 0.0;
  std::uint64_t seed = 0;
  /// Color channels of the rendered images (1 or 3).
  int channels = 3;
  /// Skip rendering (correspondences and ground truth only).
  bool render = true;
};

struct GroundTruth {
  /// Absent for a pure rotation (t = 0).
  std::optional<FundamentalMatrix> F;
  std::optional<EpipolePair> epipoles;
  Mat3 H_inf = Mat3::Identity();
  /// Per-plane homographies with their absolute scale, target -> reference.
  std::vector<Mat3> plane_homographies;
  bool degenerate = false;

  /// Throws DegenerateGeometry when F is absent.
  const FundamentalMatrix& fundamental() const;
};

/// e' = K't, H_inf = K'RK^{-1}, F = [e']_x H_inf (normalized). For t = 0 the
/// result is flagged degenerate and carries H_inf only.
GroundTruth groundTruthGeometry(const CameraIntrinsics& K, const CameraIntrinsics& Kp, const Mat3& R, const Vec3& t,
                                const std::vector<PlaneParams>& planes = {});

struct ScenePair {
  ImageBuffer ref;
  ImageBuffer tgt;
  /// Possibly noisy and contaminated correspondences, target -> reference.
  std::vector<Correspondence> corrs;
  /// Noise-free version of every correspondence (outliers keep their true match).
  std::vector<Correspondence> clean;
  std::vector<bool> is_inlier;
  /// Index of the plane each point lies on, -1 for free points.
  std::vector<int> plane_index;
  GroundTruth truth;
};

/// Renders both views and samples correspondences. Identical specs give
/// bitwise-identical output. Throws InvalidSpec.
ScenePair makeScenePair(const SceneSpec& spec);

/// Exact reference position of a target pixel on the rendered scene surface.
/// Empty when the ray misses every plane or lands behind the reference camera.
std::optional<Vec2> groundTruthTransfer(const SceneSpec& spec, const Vec2& x);

Mat3 rotationY(double radians);
Mat3 rotationX(double radians);

/// Two walls meeting in a concave vertical edge at depth `depth`, offset
/// `dx` along x. Both walls make 45 degrees with the optical axis.
std::vector<PlaneParams> roomCorner(double depth = 8.0, double dx = 0.5);

}  // namespace epistitch
