#include "epistitch/stitch.hpp"

#include <cmath>

#include "epistitch/error.hpp"

namespace epistitch {

namespace {

std::vector<Correspondence> selectInliers(std::span<const Correspondence> corrs, const std::vector<bool>& mask) {
  std::vector<Correspondence> out;
  for (std::size_t i = 0; i < corrs.size(); ++i)
    if (mask[i]) out.push_back(corrs[i]);
  return out;
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::InvalidSpec, what);
}

}  // namespace

void validate(const PipelineConfig& cfg) {
  require(cfg.ransac.threshold > 0.0, "ransac.threshold must be positive");
  require(cfg.ransac.confidence > 0.0 && cfg.ransac.confidence < 1.0, "ransac.confidence must be in (0, 1)");
  require(cfg.ransac.max_iterations >= 1, "ransac.max_iters must be at least 1");
  require(cfg.refine.max_iters >= 0, "refine.max_iters must be non-negative");
  require(cfg.refine.rel_tol >= 0.0, "refine.rel_tol must be non-negative");
  require(cfg.refine.damping_init > 0.0, "refine.damping_init must be positive");
  require(cfg.edf.rho >= 0.0 && std::isfinite(cfg.edf.rho), "edf.rho must be finite and non-negative");
  require(cfg.edf.lambda_scale >= 0.0 && std::isfinite(cfg.edf.lambda_scale), "edf.lambda_scale must be non-negative");
  require(cfg.edf.cell_px >= 1, "edf.cell_px must be at least 1");
  require(cfg.edf.taper_factor > 0.0, "edf.taper_factor must be positive");
  require(cfg.warp.canvas_cap >= 1.0, "warp.canvas_cap must be at least 1");
  require(!cfg.focal_hint || *cfg.focal_hint > 0.0, "focal_hint must be positive");
}

Vec2 mapThroughWarp(const Mat3& base, const DisplacementGrid& grid, const Vec2& y) {
  const Vec2 p = transfer(base, y);
  return p + grid.interpolate(p);
}

Vec2 StitchResult::mapTargetPoint(const Vec2& y) const { return mapThroughWarp(base_homography, grid, y); }

RefineResult estimateCalibration(ImageSize ref, ImageSize tgt, std::span<const Correspondence> corrs,
                                 const PipelineConfig& cfg, std::vector<bool>* inliers) {
  validate(cfg);
  const FundamentalFit fit = estimateFundamentalRansac(corrs, cfg.ransac);
  const auto inl = selectInliers(corrs, fit.inliers);
  const CameraIntrinsics K = initialIntrinsics(tgt.width, tgt.height, cfg.focal_hint);
  const CameraIntrinsics Kp = initialIntrinsics(ref.width, ref.height, cfg.focal_hint);
  const RigidMotion motion = rotationFromF(fit.F, K, Kp, inl);
  const StereoCalibration init = StereoCalibration::assemble(K, Kp, motion, fit.F);
  if (inliers) *inliers = fit.inliers;
  return refineCalibration(init, inl, cfg.refine);
}

StitchResult stitch(const ImageBuffer& ref, const ImageBuffer& tgt, std::span<const Correspondence> corrs,
                    const PipelineConfig& cfg) {
  validate(cfg);
  if (corrs.size() < 8)
    throw Error(ErrorCode::InsufficientMatches, "need at least 8 correspondences, got " + std::to_string(corrs.size()));
  if (ref.empty() || tgt.empty()) throw Error(ErrorCode::InvalidSize, "empty input image");
  if (ref.channels() != tgt.channels()) throw Error(ErrorCode::InvalidSize, "inputs differ in channel count");

  const ImageSize ref_size{ref.width(), ref.height()};
  const ImageSize tgt_size{tgt.width(), tgt.height()};
  StitchResult out;
  std::vector<Correspondence> inl;
  ResidualSet residuals;
  Mat3 base;

  try {
    const RefineResult refined = estimateCalibration(ref_size, tgt_size, corrs, cfg, &out.inliers);
    inl = selectInliers(corrs, out.inliers);
    const StereoCalibration& calib = refined.calibration;
    residuals = computeResiduals(calib.H_inf, inl);
    out.model = fitEdf(residuals.items, calib.ep, cfg.edf);
    base = calib.H_inf;
    const CompatibilityResidual compat = compatibilityResidual(calib.H_inf, calib.F);
    out.diagnostics["objective_initial"] = refined.initial_objective;
    out.diagnostics["objective_final"] = refined.final_objective;
    out.diagnostics["refine_iterations"] = refined.iterations;
    out.diagnostics["compat_skew"] = compat.skew;
    out.diagnostics["compat_axis_err"] = compat.axis_err;
    out.diagnostics["focal_target"] = calib.K.f;
    out.diagnostics["focal_reference"] = calib.Kp.f;
    out.calibration = calib;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateGeometry && e.code() != ErrorCode::EpipoleAtInfinity) throw;
    const HomographyFit hf = estimateHomographyRansac(corrs, cfg.ransac);
    out.inliers = hf.inliers;
    out.fallback = true;
    inl = selectInliers(corrs, out.inliers);
    residuals = computeResiduals(hf.H, inl);
    out.model = fitPlainTps(residuals.items, cfg.edf);
    base = hf.H;
  }

  out.base_homography = normalizeBaseHomography(base, tgt_size);
  const Rect ref_rect{0.0, 0.0, ref.width() - 1.0, ref.height() - 1.0};
  out.grid = buildDisplacementGrid(out.model, warpedBounds(tgt_size, out.base_homography), ref_rect, cfg.edf);
  out.canvas = computeCanvas(ref_size, tgt_size, out.base_homography, out.grid, cfg.warp.canvas_cap);
  const WarpMesh mesh = buildWarpMesh(out.grid, out.base_homography);
  WarpOutput warped = backwardWarp(tgt, mesh, out.base_homography, out.canvas);
  out.ref_layer = placeOnCanvas(ref, out.canvas);
  BlendOutput blended = linearBlend(out.ref_layer, warped.image);
  out.tgt_layer = std::move(warped.image);
  out.panorama = std::move(blended.image);
  out.ref_mask = out.ref_layer.mask();
  out.tgt_mask = out.tgt_layer.mask();

  double misfit = 0.0;
  for (const auto& c : inl) misfit += (out.mapTargetPoint(c.src) - c.dst).norm();
  out.diagnostics["inliers"] = static_cast<double>(inl.size());
  out.diagnostics["control_points"] = static_cast<double>(residuals.items.size());
  out.diagnostics["points_at_infinity"] = static_cast<double>(residuals.points_at_infinity);
  out.diagnostics["max_residual_px"] = out.model.max_residual;
  out.diagnostics["control_misfit_mean_px"] = inl.empty() ? 0.0 : misfit / static_cast<double>(inl.size());
  out.diagnostics["fallback"] = out.fallback ? 1.0 : 0.0;
  out.diagnostics["canvas_width"] = out.canvas.width;
  out.diagnostics["canvas_height"] = out.canvas.height;
  out.diagnostics["grid_anchors"] = static_cast<double>(out.grid.displacement.size());
  out.diagnostics["covered_pixels"] = static_cast<double>(warped.covered_pixels);
  out.diagnostics["invalid_quads"] = static_cast<double>(warped.invalid_quads);
  out.diagnostics["inversion_failures"] = static_cast<double>(warped.inversion_failures);
  out.diagnostics["empty_overlap"] = blended.empty_overlap ? 1.0 : 0.0;
  return out;
}

}  // namespace epistitch
