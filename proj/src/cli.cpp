#include "epistitch/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "epistitch/io.hpp"
#include "epistitch/matcher.hpp"
#include "epistitch/metrics.hpp"
#include "epistitch/stitch.hpp"
#include "epistitch/synth.hpp"

namespace epistitch {

namespace {

std::string stemOf(const std::string& path) {
  const std::filesystem::path p(path);
  return (p.parent_path() / p.stem()).string();
}

ImageBuffer matchChannels(const ImageBuffer& img, int channels) { return channels == 3 ? img.toRgb() : img; }

void checkSizes(const MatchFile& m, const ImageBuffer& ref, const ImageBuffer& tgt) {
  if (m.size1.width != tgt.width() || m.size1.height != tgt.height() || m.size2.width != ref.width() ||
      m.size2.height != ref.height())
    throw Error(ErrorCode::BoundsError, "match file sizes do not match the images (size1 = target, size2 = reference)");
}

MetricsReport evaluateLayers(const ImageBuffer& ref_layer, const ImageBuffer& tgt_layer, const std::optional<Mat3>& F,
                             std::span<const Correspondence> matches, ImageSize target, ImageSize reference,
                             const PointMap& map) {
  MetricsReport r;
  const Mask overlap = overlapMask(ref_layer.mask(), tgt_layer.mask());
  r.overlap_area_px = static_cast<long>(overlap.count());
  r.ssim = ssim(ref_layer, tgt_layer, overlap);
  r.psnr = psnr(ref_layer, tgt_layer, overlap);
  if (F) {
    const FundamentalMatrix fm = FundamentalMatrix::fromMatrix(*F);
    const Rect ref_rect{0.0, 0.0, reference.width - 1.0, reference.height - 1.0};
    const auto probes = projectivityProbes(fm, matches, target, ref_rect, map);
    if (!probes.empty()) {
      const ProjectivityResult p = projectivityMetric(fm, map, probes);
      r.projectivity_mean_px = p.mean_px;
      r.projectivity_max_px = p.max_px;
      r.n_eval_points = p.n;
    }
  }
  return r;
}

struct StitchArgs {
  std::string ref, tgt, matches, out = "panorama.png", calib_out, metrics_out, model_out, config;
  std::optional<int> cell;
  std::optional<double> rho, focal;
  std::optional<std::uint64_t> seed;
};

PipelineConfig buildConfig(const std::string& config_path, const std::optional<int>& cell,
                           const std::optional<double>& rho, const std::optional<double>& focal,
                           const std::optional<std::uint64_t>& seed) {
  PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : loadConfig(config_path);
  if (cell) cfg.edf.cell_px = *cell;
  if (rho) cfg.edf.rho = *rho;
  if (focal) cfg.focal_hint = *focal;
  if (seed) cfg.ransac.seed = *seed;
  validate(cfg);
  return cfg;
}

int runStitch(const StitchArgs& a) {
  const PipelineConfig cfg = buildConfig(a.config, a.cell, a.rho, a.focal, a.seed);
  ImageBuffer ref = readPng(a.ref);
  ImageBuffer tgt = readPng(a.tgt);
  const int channels = std::max(ref.channels(), tgt.channels());
  ref = matchChannels(ref, channels);
  tgt = matchChannels(tgt, channels);
  std::vector<Correspondence> corrs;
  if (!a.matches.empty()) {
    const MatchFile m = loadMatches(a.matches);
    checkSizes(m, ref, tgt);
    corrs = m.matches;
  } else {
    corrs = builtinMatch(ref, tgt);
    std::cerr << "built-in matcher: " << corrs.size() << " matches\n";
  }
  const StitchResult res = stitch(ref, tgt, corrs, cfg);
  writePng(a.out, res.panorama, true);
  const std::string stem = stemOf(a.out);
  writePng(stem + "_ref.png", res.ref_layer, true);
  writePng(stem + "_tgt.png", res.tgt_layer, true);
  saveWarp(stem + "_warp.json", WarpRecord{{ref.width(), ref.height()},
                                           {tgt.width(), tgt.height()},
                                           res.canvas,
                                           res.base_homography,
                                           res.grid,
                                           res.fallback});
  if (!a.calib_out.empty()) {
    if (res.calibration)
      saveCalibration(a.calib_out, CalibrationRecord::from(*res.calibration));
    else
      std::cerr << "warning: homography fallback has no calibration; " << a.calib_out << " not written\n";
  }
  if (!a.model_out.empty()) writeTextFile(a.model_out, serializeModel(res.model));
  if (!a.metrics_out.empty()) {
    std::vector<Correspondence> inl;
    for (std::size_t i = 0; i < corrs.size(); ++i)
      if (res.inliers[i]) inl.push_back(corrs[i]);
    std::optional<Mat3> F;
    if (res.calibration) F = res.calibration->F.matrix();
    const PointMap map = [&res](const Vec2& y) -> std::optional<Vec2> { return res.mapTargetPoint(y); };
    const MetricsReport r = evaluateLayers(res.ref_layer, res.tgt_layer, F, inl, {tgt.width(), tgt.height()},
                                           {ref.width(), ref.height()}, map);
    writeTextFile(a.metrics_out, serializeMetrics(r));
  }
  for (const auto& [k, v] : res.diagnostics) std::cerr << k << " = " << v << "\n";
  return 0;
}

int runSynth(const std::string& spec_path, const std::string& out_dir) {
  const SceneSpec spec = loadSceneSpec(spec_path);
  const ScenePair pair = makeScenePair(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + out_dir + ": " + ec.message());
  const std::filesystem::path dir(out_dir);
  writePng((dir / "ref.png").string(), pair.ref);
  writePng((dir / "tgt.png").string(), pair.tgt);
  saveMatches((dir / "matches.json").string(),
              MatchFile{{spec.width, spec.height}, {spec.width, spec.height}, pair.corrs});
  saveCalibration((dir / "calib.json").string(), CalibrationRecord::from(spec, pair.truth));
  return 0;
}

int runEval(const std::string& pano, const std::string& calib_path, const std::string& matches_path,
            const std::string& out) {
  const std::string stem = stemOf(pano);
  const ImageBuffer ref_layer = readPng(stem + "_ref.png");
  const ImageBuffer tgt_layer = readPng(stem + "_tgt.png");
  const WarpRecord warp = loadWarp(stem + "_warp.json");
  const CalibrationRecord calib = loadCalibration(calib_path);
  const MatchFile m = loadMatches(matches_path);
  const PointMap map = [&warp](const Vec2& y) -> std::optional<Vec2> {
    return mapThroughWarp(warp.base_homography, warp.grid, y);
  };
  const MetricsReport r = evaluateLayers(ref_layer, tgt_layer, calib.F, m.matches, warp.target, warp.reference, map);
  const std::string text = serializeMetrics(r);
  if (out.empty())
    std::cout << text;
  else
    writeTextFile(out, text);
  return 0;
}

int runEstimate(const std::string& ref_path, const std::string& tgt_path, const std::string& matches_path,
                const std::string& calib_out, const std::string& config, std::optional<double> focal,
                std::optional<std::uint64_t> seed) {
  const PipelineConfig cfg = buildConfig(config, std::nullopt, std::nullopt, focal, seed);
  const ImageBuffer ref = readPng(ref_path);
  const ImageBuffer tgt = readPng(tgt_path);
  const MatchFile m = loadMatches(matches_path);
  checkSizes(m, ref, tgt);
  const RefineResult r = estimateCalibration({ref.width(), ref.height()}, {tgt.width(), tgt.height()}, m.matches, cfg);
  saveCalibration(calib_out, CalibrationRecord::from(r.calibration));
  std::cerr << "objective_initial = " << r.initial_objective << "\nobjective_final = " << r.final_objective << "\n";
  return 0;
}

}  // namespace

int exitCodeFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::InsufficientMatches:
      return 2;
    case ErrorCode::DegenerateGeometry:
    case ErrorCode::DegeneratePlane:
    case ErrorCode::ScaleMismatch:
    case ErrorCode::NoConvergence:
    case ErrorCode::PointAtInfinity:
    case ErrorCode::SingularSystem:
    case ErrorCode::EpipoleAtInfinity:
    case ErrorCode::EmptyOverlap:
    case ErrorCode::NoEvalPoints:
      return 3;
    case ErrorCode::IoError:
    case ErrorCode::ParseError:
    case ErrorCode::BoundsError:
    case ErrorCode::InvalidSpec:
    case ErrorCode::InvalidSize:
      return 4;
    case ErrorCode::ExcessiveCanvas:
    case ErrorCode::ExcessiveGrid:
      return 5;
  }
  return 1;
}

int runCli(int argc, char** argv) {
  CLI::App app{"Parallax-tolerant two-view stitching along epipolar lines"};
  app.require_subcommand(1);

  StitchArgs st;
  auto* cmd_stitch = app.add_subcommand("stitch", "Stitch a target image onto a reference image");
  cmd_stitch->add_option("REF", st.ref, "Reference image (PNG)")->required();
  cmd_stitch->add_option("TGT", st.tgt, "Target image (PNG)")->required();
  cmd_stitch->add_option("--matches", st.matches, "Match file; the built-in matcher runs when omitted");
  cmd_stitch->add_option("--out", st.out, "Panorama output (PNG)");
  cmd_stitch->add_option("--calib-out", st.calib_out, "Calibration JSON output");
  cmd_stitch->add_option("--metrics-out", st.metrics_out, "Metrics JSON output");
  cmd_stitch->add_option("--model-out", st.model_out, "Displacement field JSON output");
  cmd_stitch->add_option("--config", st.config, "Pipeline configuration JSON");
  cmd_stitch->add_option("--cell", st.cell, "Grid cell size in pixels");
  cmd_stitch->add_option("--rho", st.rho, "TPS regularizer");
  cmd_stitch->add_option("--focal", st.focal, "Focal length hint in pixels");
  cmd_stitch->add_option("--seed", st.seed, "RANSAC seed");

  std::string spec_path, out_dir;
  auto* cmd_synth = app.add_subcommand("synth", "Render a synthetic two-view scene");
  cmd_synth->add_option("--spec", spec_path, "Scene spec JSON")->required();
  cmd_synth->add_option("--out-dir", out_dir, "Output directory")->required();

  std::string pano, calib_path, eval_matches, eval_out;
  auto* cmd_eval = app.add_subcommand("eval", "Evaluate a panorama written by `stitch`");
  cmd_eval->add_option("--pano", pano, "Panorama PNG (its _ref/_tgt/_warp companions must exist)")->required();
  cmd_eval->add_option("--calib", calib_path, "Calibration JSON providing F")->required();
  cmd_eval->add_option("--matches", eval_matches, "Match file")->required();
  cmd_eval->add_option("--out", eval_out, "Metrics JSON output (stdout when omitted)");

  std::string est_ref, est_tgt, est_matches, est_calib, est_config;
  std::optional<double> est_focal;
  std::optional<std::uint64_t> est_seed;
  auto* cmd_est = app.add_subcommand("estimate", "Estimate the two-view calibration only");
  cmd_est->add_option("REF", est_ref, "Reference image (PNG)")->required();
  cmd_est->add_option("TGT", est_tgt, "Target image (PNG)")->required();
  cmd_est->add_option("--matches", est_matches, "Match file")->required();
  cmd_est->add_option("--calib-out", est_calib, "Calibration JSON output")->required();
  cmd_est->add_option("--config", est_config, "Pipeline configuration JSON");
  cmd_est->add_option("--focal", est_focal, "Focal length hint in pixels");
  cmd_est->add_option("--seed", est_seed, "RANSAC seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*cmd_stitch) return runStitch(st);
    if (*cmd_synth) return runSynth(spec_path, out_dir);
    if (*cmd_eval) return runEval(pano, calib_path, eval_matches, eval_out);
    if (*cmd_est) return runEstimate(est_ref, est_tgt, est_matches, est_calib, est_config, est_focal, est_seed);
  } catch (const Error& e) {
    std::cerr << "error [" << errorName(e.code()) << "]: " << e.what() << "\n";
    return exitCodeFor(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace epistitch
