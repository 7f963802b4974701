#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epistitch/calibration.hpp"
#include "epistitch/config.hpp"
#include "epistitch/edf.hpp"
#include "epistitch/image.hpp"
#include "epistitch/metrics.hpp"
#include "epistitch/synth.hpp"
#include "epistitch/warp.hpp"

namespace epistitch {

/// 8-bit gray or RGB PNG. An alpha channel becomes the validity mask
/// (alpha > 0); without one every pixel is valid. Throws IoError.
ImageBuffer readPng(const std::string& path);
/// Writes gray or RGB, plus the mask as alpha when `with_alpha` is set.
void writePng(const std::string& path, const ImageBuffer& img, bool with_alpha = false);

/// View 1 is the target image (u1, v1 = x), view 2 the reference (u2, v2 = x').
struct MatchFile {
  ImageSize size1;
  ImageSize size2;
  std::vector<Correspondence> matches;
};

/// Throws ParseError, BoundsError (coordinate outside [-1, w] x [-1, h]) and
/// InsufficientMatches (fewer than 8 entries).
MatchFile parseMatches(const std::string& text);
MatchFile loadMatches(const std::string& path);
std::string serializeMatches(const MatchFile& m);
void saveMatches(const std::string& path, const MatchFile& m);

/// Flat calibration document. F and the epipoles are absent for a pure rotation.
struct CalibrationRecord {
  CameraIntrinsics K;
  CameraIntrinsics Kp;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  std::optional<Mat3> F;
  std::optional<Vec3> e;
  std::optional<Vec3> ep;
  Mat3 H_inf = Mat3::Identity();

  static CalibrationRecord from(const StereoCalibration& c);
  static CalibrationRecord from(const SceneSpec& spec, const GroundTruth& gt);
};

std::string serializeCalibration(const CalibrationRecord& c);
CalibrationRecord parseCalibration(const std::string& text);
void saveCalibration(const std::string& path, const CalibrationRecord& c);
CalibrationRecord loadCalibration(const std::string& path);

std::string serializeModel(const EDFModel& m);

/// Missing keys keep their defaults. Throws ParseError and InvalidSpec.
PipelineConfig parseConfig(const std::string& text);
PipelineConfig loadConfig(const std::string& path);

std::string serializeMetrics(const MetricsReport& r);

/// Missing keys keep the SceneSpec defaults; without "planes" the scene is
/// the default room corner.
SceneSpec parseSceneSpec(const std::string& text);
SceneSpec loadSceneSpec(const std::string& path);

/// Everything needed to re-apply a stitch warp to target points.
struct WarpRecord {
  ImageSize reference;
  ImageSize target;
  Canvas canvas;
  Mat3 base_homography = Mat3::Identity();
  DisplacementGrid grid;
  bool fallback = false;
};

std::string serializeWarp(const WarpRecord& w);
WarpRecord parseWarp(const std::string& text);
void saveWarp(const std::string& path, const WarpRecord& w);
WarpRecord loadWarp(const std::string& path);

/// Throws IoError.
std::string readTextFile(const std::string& path);
void writeTextFile(const std::string& path, const std::string& text);

}  // namespace epistitch
