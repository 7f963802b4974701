#include "epistitch/io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <json.hpp>
#include <sstream>

#include "epistitch/error.hpp"

namespace epistitch {

using nlohmann::json;

namespace {

json matJson(const Mat3& m) {
  json a = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  return a;
}

json vecJson(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json intrinsicsJson(const CameraIntrinsics& k) { return json{{"f", k.f}, {"cx", k.cx}, {"cy", k.cy}}; }

Mat3 matFrom(const json& j) {
  if (!j.is_array() || j.size() != 9) throw Error(ErrorCode::ParseError, "expected a 9-element matrix");
  Mat3 m;
  for (int k = 0; k < 9; ++k) m(k / 3, k % 3) = j.at(static_cast<std::size_t>(k)).get<double>();
  return m;
}

Vec3 vec3From(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::ParseError, "expected a 3-element vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

CameraIntrinsics intrinsicsFrom(const json& j) {
  return CameraIntrinsics{j.at("f").get<double>(), j.at("cx").get<double>(), j.at("cy").get<double>()};
}

ImageSize sizeFrom(const json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(ErrorCode::ParseError, "expected [width, height]");
  const ImageSize s{j[0].get<int>(), j[1].get<int>()};
  if (s.width <= 0 || s.height <= 0) throw Error(ErrorCode::ParseError, "image dimensions must be positive");
  return s;
}

json parseJson(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("invalid JSON: ") + e.what());
  }
}

// Runs a JSON extraction, turning library type errors into ParseError.
template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string(what) + ": " + e.what());
  }
}

template <typename T>
void readOpt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string readTextFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void writeTextFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

ImageBuffer readPng(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw Error(ErrorCode::IoError, "cannot read PNG " + path + ": " + image.message);
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const int channels = color ? 3 : 1;
  image.format = color ? PNG_FORMAT_RGBA : PNG_FORMAT_GA;
  const int stride = channels + 1;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorCode::IoError, "cannot decode PNG " + path + ": " + image.message);
  }
  ImageBuffer img(static_cast<int>(image.width), static_cast<int>(image.height), channels);
  std::size_t k = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x, k += static_cast<std::size_t>(stride)) {
      for (int c = 0; c < channels; ++c) img.at(x, y, c) = buf[k + static_cast<std::size_t>(c)];
      img.mask().set(x, y, buf[k + static_cast<std::size_t>(channels)] > 0);
    }
  return img;
}

void writePng(const std::string& path, const ImageBuffer& img, bool with_alpha) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  const int channels = img.channels();
  if (img.channels() == 3)
    image.format = with_alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
  else
    image.format = with_alpha ? PNG_FORMAT_GA : PNG_FORMAT_GRAY;
  const int stride = channels + (with_alpha ? 1 : 0);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(img.width()) * static_cast<std::size_t>(img.height()) *
                                static_cast<std::size_t>(stride));
  std::size_t k = 0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x, k += static_cast<std::size_t>(stride)) {
      for (int c = 0; c < channels; ++c) buf[k + static_cast<std::size_t>(c)] = img.at(x, y, c);
      if (with_alpha) buf[k + static_cast<std::size_t>(channels)] = img.valid(x, y) ? 255 : 0;
    }
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
    throw Error(ErrorCode::IoError, "cannot write PNG " + path + ": " + image.message);
}

MatchFile parseMatches(const std::string& text) {
  const json j = parseJson(text);
  MatchFile m = guarded("match file", [&] {
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "match file must be a JSON object");
    if (j.at("version").get<int>() != 1) throw Error(ErrorCode::ParseError, "unsupported match file version");
    MatchFile out;
    out.size1 = sizeFrom(j.at("size1"));
    out.size2 = sizeFrom(j.at("size2"));
    const json& arr = j.at("matches");
    if (!arr.is_array()) throw Error(ErrorCode::ParseError, "\"matches\" must be an array");
    for (const auto& row : arr) {
      if (!row.is_array() || row.size() != 4) throw Error(ErrorCode::ParseError, "each match must be [u1, v1, u2, v2]");
      out.matches.push_back({Vec2(row[0].get<double>(), row[1].get<double>()),
                             Vec2(row[2].get<double>(), row[3].get<double>())});
    }
    return out;
  });
  auto inside = [](const Vec2& p, ImageSize s) {
    return p.allFinite() && p.x() >= -1.0 && p.y() >= -1.0 && p.x() <= s.width && p.y() <= s.height;
  };
  for (std::size_t i = 0; i < m.matches.size(); ++i)
    if (!inside(m.matches[i].src, m.size1) || !inside(m.matches[i].dst, m.size2))
      throw Error(ErrorCode::BoundsError, "match " + std::to_string(i) + " lies outside the declared image size");
  if (m.matches.size() < 8)
    throw Error(ErrorCode::InsufficientMatches, "need at least 8 matches, got " + std::to_string(m.matches.size()));
  return m;
}

MatchFile loadMatches(const std::string& path) { return parseMatches(readTextFile(path)); }

std::string serializeMatches(const MatchFile& m) {
  json arr = json::array();
  for (const auto& c : m.matches) arr.push_back({c.src.x(), c.src.y(), c.dst.x(), c.dst.y()});
  const json j{{"version", 1},
               {"size1", {m.size1.width, m.size1.height}},
               {"size2", {m.size2.width, m.size2.height}},
               {"matches", arr}};
  return j.dump() + "\n";
}

void saveMatches(const std::string& path, const MatchFile& m) { writeTextFile(path, serializeMatches(m)); }

CalibrationRecord CalibrationRecord::from(const StereoCalibration& c) {
  CalibrationRecord r;
  r.K = c.K;
  r.Kp = c.Kp;
  r.R = c.motion.rotation();
  r.t = c.motion.direction();
  r.F = c.F.matrix();
  r.e = c.e.coords();
  r.ep = c.ep.coords();
  r.H_inf = c.H_inf;
  return r;
}

CalibrationRecord CalibrationRecord::from(const SceneSpec& spec, const GroundTruth& gt) {
  CalibrationRecord r;
  r.K = spec.K;
  r.Kp = spec.Kp;
  r.R = spec.R;
  r.t = spec.t;
  r.H_inf = gt.H_inf;
  if (gt.F) {
    r.F = gt.F->matrix();
    r.e = gt.epipoles->e.coords();
    r.ep = gt.epipoles->ep.coords();
  }
  return r;
}

std::string serializeCalibration(const CalibrationRecord& c) {
  json j{{"K", intrinsicsJson(c.K)}, {"Kp", intrinsicsJson(c.Kp)}, {"R", matJson(c.R)}, {"t", vecJson(c.t)},
         {"H_inf", matJson(c.H_inf)}};
  j["F"] = c.F ? matJson(*c.F) : json(nullptr);
  j["e"] = c.e ? vecJson(*c.e) : json(nullptr);
  j["ep"] = c.ep ? vecJson(*c.ep) : json(nullptr);
  return j.dump(2) + "\n";
}

CalibrationRecord parseCalibration(const std::string& text) {
  const json j = parseJson(text);
  return guarded("calibration", [&] {
    CalibrationRecord c;
    c.K = intrinsicsFrom(j.at("K"));
    c.Kp = intrinsicsFrom(j.at("Kp"));
    c.R = matFrom(j.at("R"));
    c.t = vec3From(j.at("t"));
    c.H_inf = matFrom(j.at("H_inf"));
    if (j.contains("F") && !j["F"].is_null()) c.F = matFrom(j["F"]);
    if (j.contains("e") && !j["e"].is_null()) c.e = vec3From(j["e"]);
    if (j.contains("ep") && !j["ep"].is_null()) c.ep = vec3From(j["ep"]);
    return c;
  });
}

void saveCalibration(const std::string& path, const CalibrationRecord& c) { writeTextFile(path, serializeCalibration(c)); }
CalibrationRecord loadCalibration(const std::string& path) { return parseCalibration(readTextFile(path)); }

std::string serializeModel(const EDFModel& m) {
  json centers = json::array(), w = json::array(), wp = json::array();
  for (std::size_t i = 0; i < m.centers.size(); ++i) {
    centers.push_back({m.centers[i].x(), m.centers[i].y()});
    w.push_back(m.w[static_cast<Eigen::Index>(i)]);
    wp.push_back(m.wprime[static_cast<Eigen::Index>(i)]);
  }
  const json j{{"centers", centers},       {"w", w},
               {"wprime", wp},             {"m", vecJson(m.m)},
               {"mprime", vecJson(m.mprime)}, {"eprime", {m.eprime.x(), m.eprime.y()}},
               {"rho", m.rho}};
  return j.dump() + "\n";
}

PipelineConfig parseConfig(const std::string& text) {
  const json j = parseJson(text);
  PipelineConfig cfg = guarded("config", [&] {
    PipelineConfig c;
    if (j.contains("ransac")) {
      const json& r = j["ransac"];
      readOpt(r, "threshold", c.ransac.threshold);
      readOpt(r, "max_iters", c.ransac.max_iterations);
      readOpt(r, "confidence", c.ransac.confidence);
      readOpt(r, "seed", c.ransac.seed);
    }
    if (j.contains("refine")) {
      const json& r = j["refine"];
      readOpt(r, "max_iters", c.refine.max_iters);
      readOpt(r, "rel_tol", c.refine.rel_tol);
      readOpt(r, "damping_init", c.refine.damping_init);
      readOpt(r, "eq4_literal", c.refine.eq4_literal);
    }
    if (j.contains("edf")) {
      const json& r = j["edf"];
      readOpt(r, "rho", c.edf.rho);
      readOpt(r, "lambda_scale", c.edf.lambda_scale);
      readOpt(r, "cell_px", c.edf.cell_px);
      readOpt(r, "taper_factor", c.edf.taper_factor);
      if (r.contains("coupling")) {
        const auto s = r["coupling"].get<std::string>();
        if (s == "per_axis")
          c.edf.coupling = AffineCoupling::PerAxis;
        else if (s == "shared_epipolar")
          c.edf.coupling = AffineCoupling::SharedEpipolar;
        else
          throw Error(ErrorCode::InvalidSpec, "edf.coupling must be per_axis or shared_epipolar");
      }
    }
    if (j.contains("warp")) readOpt(j["warp"], "canvas_cap", c.warp.canvas_cap);
    if (j.contains("focal_hint") && !j["focal_hint"].is_null()) c.focal_hint = j["focal_hint"].get<double>();
    return c;
  });
  validate(cfg);
  return cfg;
}

PipelineConfig loadConfig(const std::string& path) { return parseConfig(readTextFile(path)); }

std::string serializeMetrics(const MetricsReport& r) {
  const json j{{"ssim", r.ssim},
               {"psnr", r.psnr},
               {"projectivity_mean_px", r.projectivity_mean_px},
               {"projectivity_max_px", r.projectivity_max_px},
               {"n_eval_points", r.n_eval_points},
               {"overlap_area_px", r.overlap_area_px}};
  return j.dump(2) + "\n";
}

SceneSpec parseSceneSpec(const std::string& text) {
  const json j = parseJson(text);
  return guarded("scene spec", [&] {
    SceneSpec s;
    readOpt(j, "width", s.width);
    readOpt(j, "height", s.height);
    if (j.contains("K")) s.K = intrinsicsFrom(j["K"]);
    if (j.contains("Kp")) s.Kp = intrinsicsFrom(j["Kp"]);
    if (!j.contains("K") && !j.contains("Kp")) {
      const double f = j.value("f", 800.0);
      s.K = s.Kp = CameraIntrinsics{f, s.width / 2.0, s.height / 2.0};
    }
    if (j.contains("R"))
      s.R = matFrom(j["R"]);
    else
      s.R = rotationY(j.value("rot_y_deg", 10.0) * std::numbers::pi / 180.0) *
            rotationX(j.value("rot_x_deg", 0.0) * std::numbers::pi / 180.0);
    if (j.contains("t")) s.t = vec3From(j["t"]);
    if (j.contains("planes")) {
      for (const auto& p : j["planes"]) s.planes.push_back(PlaneParams{vec3From(p.at("n")), p.at("d").get<double>()});
    } else {
      s.planes = roomCorner();
    }
    readOpt(j, "plane_points", s.plane_points);
    readOpt(j, "free_points", s.free_points);
    readOpt(j, "free_depth_min", s.free_depth_min);
    readOpt(j, "free_depth_max", s.free_depth_max);
    readOpt(j, "noise_sigma", s.noise_sigma);
    readOpt(j, "outlier_fraction", s.outlier_fraction);
    readOpt(j, "seed", s.seed);
    readOpt(j, "channels", s.channels);
    return s;
  });
}

SceneSpec loadSceneSpec(const std::string& path) { return parseSceneSpec(readTextFile(path)); }

std::string serializeWarp(const WarpRecord& w) {
  json disp = json::array();
  for (const auto& d : w.grid.displacement) disp.push_back({d.x(), d.y()});
  const json j{{"reference", {w.reference.width, w.reference.height}},
               {"target", {w.target.width, w.target.height}},
               {"canvas", {{"ox", w.canvas.ox}, {"oy", w.canvas.oy}, {"width", w.canvas.width}, {"height", w.canvas.height}}},
               {"base_homography", matJson(w.base_homography)},
               {"fallback", w.fallback},
               {"grid",
                {{"origin", {w.grid.origin.x(), w.grid.origin.y()}},
                 {"spacing", w.grid.spacing},
                 {"nu", w.grid.nu},
                 {"nv", w.grid.nv},
                 {"displacement", disp}}}};
  return j.dump() + "\n";
}

WarpRecord parseWarp(const std::string& text) {
  const json j = parseJson(text);
  return guarded("warp record", [&] {
    WarpRecord w;
    w.reference = sizeFrom(j.at("reference"));
    w.target = sizeFrom(j.at("target"));
    const json& c = j.at("canvas");
    w.canvas = Canvas{c.at("ox").get<int>(), c.at("oy").get<int>(), c.at("width").get<int>(), c.at("height").get<int>()};
    w.base_homography = matFrom(j.at("base_homography"));
    w.fallback = j.value("fallback", false);
    const json& g = j.at("grid");
    w.grid.origin = Vec2(g.at("origin")[0].get<double>(), g.at("origin")[1].get<double>());
    w.grid.spacing = g.at("spacing").get<double>();
    w.grid.nu = g.at("nu").get<int>();
    w.grid.nv = g.at("nv").get<int>();
    const json& d = g.at("displacement");
    if (w.grid.nu < 0 || w.grid.nv < 0 ||
        d.size() != static_cast<std::size_t>(w.grid.nu) * static_cast<std::size_t>(w.grid.nv))
      throw Error(ErrorCode::ParseError, "grid displacement count does not match nu * nv");
    for (const auto& v : d) w.grid.displacement.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
    w.grid.weight.assign(w.grid.displacement.size(), 1.0);
    return w;
  });
}

void saveWarp(const std::string& path, const WarpRecord& w) { writeTextFile(path, serializeWarp(w)); }
WarpRecord loadWarp(const std::string& path) { return parseWarp(readTextFile(path)); }

}  // namespace epistitch
