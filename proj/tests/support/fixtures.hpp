#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "epistitch/synth.hpp"

namespace fixtures {

using namespace epistitch;

inline double deg(double d) { return d * std::numbers::pi / 180.0; }

// Concave two-wall scene seen with a 10 degree pan and a short baseline.
inline SceneSpec parallaxSpec(std::uint64_t seed = 1, bool render = true) {
  SceneSpec s;
  s.R = rotationY(deg(10.0));
  s.t = Vec3(0.2, 0.0, 0.02);
  s.planes = roomCorner();
  s.plane_points = 300;
  s.seed = seed;
  s.render = render;
  return s;
}

inline SceneSpec singlePlaneSpec(std::uint64_t seed = 2, bool render = true) {
  SceneSpec s = parallaxSpec(seed, render);
  const Vec3 n = Vec3(0.15, 0.05, 1.0).normalized();
  s.planes = {PlaneParams{n, -n.dot(Vec3(0.0, 0.0, 8.0))}};
  return s;
}

inline SceneSpec rotationSpec(std::uint64_t seed = 3, bool render = true) {
  SceneSpec s = parallaxSpec(seed, render);
  s.t = Vec3::Zero();
  return s;
}

// Random non-planar rig: free points only, no images.
inline SceneSpec genericRig(std::uint64_t seed, int points = 200) {
  std::mt19937_64 rng(seed * 7919 + 11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SceneSpec s;
  const double f = 700.0 + 200.0 * u(rng);
  s.K = s.Kp = CameraIntrinsics{f, 320.0, 240.0};
  const double ay = (u(rng) < 0.5 ? -1.0 : 1.0) * deg(4.0 + 8.0 * u(rng));
  s.R = rotationY(ay) * rotationX(deg(-3.0 + 6.0 * u(rng)));
  s.t = Vec3((ay > 0 ? 1.0 : -1.0) * (0.2 + 0.3 * u(rng)), 0.1 * (u(rng) - 0.5), 0.02 + 0.08 * u(rng));
  s.planes.clear();
  s.plane_points = 0;
  s.free_points = points;
  s.seed = seed;
  s.render = false;
  return s;
}

// Same matrix up to sign: min(||a - b||, ||a + b||) after unit normalization.
inline double minSignDiff(const Mat3& a, const Mat3& b) {
  const Mat3 an = a / a.norm(), bn = b / b.norm();
  return std::min((an - bn).norm(), (an + bn).norm());
}

// Angle between two homogeneous directions, ignoring sign.
inline double lineAngle(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), std::abs(a.dot(b)));
}

inline std::vector<Correspondence> cleanInliers(const ScenePair& p) {
  std::vector<Correspondence> out;
  for (std::size_t i = 0; i < p.clean.size(); ++i)
    if (p.is_inlier[i]) out.push_back(p.clean[i]);
  return out;
}

inline std::string tempDir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("epistitch_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace fixtures
