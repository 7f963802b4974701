#include "epistitch/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "epistitch/error.hpp"

namespace epistitch {

namespace {

struct Hit {
  int plane = -1;
  double s = std::numeric_limits<double>::infinity();
};

// Nearest intersection of origin + s * dir (s > 0) with the planes.
Hit castRay(const std::vector<PlaneParams>& planes, const Vec3& origin, const Vec3& dir) {
  Hit best;
  for (std::size_t k = 0; k < planes.size(); ++k) {
    const double den = planes[k].n.dot(dir);
    if (std::abs(den) < 1e-12) continue;
    const double s = -(planes[k].n.dot(origin) + planes[k].d) / den;
    if (s > 1e-9 && s < best.s) best = Hit{static_cast<int>(k), s};
  }
  return best;
}

// Lattice value noise with quintic fade.
double hashUnit(std::int64_t i, std::int64_t j, std::uint32_t seed) {
  std::uint64_t h = static_cast<std::uint64_t>(i) * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint64_t>(j) * 0xC2B2AE3D27D4EB4Full ^
                    static_cast<std::uint64_t>(seed) * 0x165667B19E3779F9ull;
  h ^= h >> 33;
  h *= 0xFF51AFD7ED558CCDull;
  h ^= h >> 33;
  h *= 0xC4CEB9FE1A85EC53ull;
  h ^= h >> 33;
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double valueNoise(double u, double v, std::uint32_t seed) {
  const double fu = std::floor(u), fv = std::floor(v);
  const auto i = static_cast<std::int64_t>(fu), j = static_cast<std::int64_t>(fv);
  const double a = fade(u - fu), b = fade(v - fv);
  const double n00 = hashUnit(i, j, seed), n10 = hashUnit(i + 1, j, seed);
  const double n01 = hashUnit(i, j + 1, seed), n11 = hashUnit(i + 1, j + 1, seed);
  return (1 - b) * ((1 - a) * n00 + a * n10) + b * ((1 - a) * n01 + a * n11);
}

double fbm(double u, double v, std::uint32_t seed) {
  constexpr double periods[] = {2.0, 1.0, 0.5, 0.25, 0.125};
  constexpr double amps[] = {1.0, 0.8, 0.7, 0.6, 0.5};
  double acc = 0.0, norm = 0.0;
  for (int k = 0; k < 5; ++k) {
    acc += amps[k] * valueNoise(u / periods[k], v / periods[k], seed + static_cast<std::uint32_t>(k) * 101u);
    norm += amps[k];
  }
  return std::clamp(0.5 + 1.8 * (acc / norm - 0.5), 0.0, 1.0);
}

struct PlaneFrame {
  Vec3 a;
  Vec3 b;
};

PlaneFrame planeFrame(const PlaneParams& p) {
  const Vec3 n = p.n.normalized();
  Vec3 a = n.cross(Vec3::UnitY());
  if (a.norm() < 1e-6) a = n.cross(Vec3::UnitX());
  a.normalize();
  return {a, n.cross(a)};
}

std::array<double, 3> shade(const Vec3& X, int plane, const PlaneFrame& frame) {
  const double u = frame.a.dot(X), v = frame.b.dot(X);
  const auto seed = static_cast<std::uint32_t>(17 + 977 * plane);
  const double n1 = fbm(u, v, seed);
  const double n2 = fbm(u + 31.7, v - 12.3, seed + 7919u);
  const double c = 0.5 + 0.5 * std::tanh(4.0 * std::sin(2.0 * std::numbers::pi * u) * std::sin(2.0 * std::numbers::pi * v));
  return {20.0 + 215.0 * (0.8 * n1 + 0.2 * c), 20.0 + 215.0 * (0.75 * n2 + 0.25 * (1.0 - c)),
          20.0 + 215.0 * (0.5 * n1 + 0.5 * n2)};
}

// Renders a camera with center C and pixel-to-world-direction map D.
ImageBuffer render(const SceneSpec& spec, const Vec3& C, const Mat3& D) {
  ImageBuffer img(spec.width, spec.height, spec.channels);
  std::vector<PlaneFrame> frames;
  for (const auto& p : spec.planes) frames.push_back(planeFrame(p));
  constexpr double offs[] = {-0.25, 0.25};
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      std::array<double, 3> acc{0.0, 0.0, 0.0};
      int hits = 0;
      for (double oy : offs) {
        for (double ox : offs) {
          const Vec3 dir = D * Vec3(x + ox, y + oy, 1.0);
          const Hit h = castRay(spec.planes, C, dir);
          if (h.plane < 0) continue;
          const auto rgb = shade(C + h.s * dir, h.plane, frames[static_cast<std::size_t>(h.plane)]);
          for (int c = 0; c < 3; ++c) acc[static_cast<std::size_t>(c)] += rgb[static_cast<std::size_t>(c)];
          ++hits;
        }
      }
      if (hits == 0) continue;
      if (spec.channels == 3) {
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = toByte(acc[static_cast<std::size_t>(c)] / hits);
      } else {
        img.at(x, y, 0) = toByte(acc[0] / hits);
      }
      img.mask().set(x, y, true);
    }
  }
  return img;
}

void validateSpec(const SceneSpec& s) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidSpec, what); };
  if (s.width < 2 || s.height < 2) fail("image size must be at least 2x2");
  if (!(s.K.f > 0.0) || !(s.Kp.f > 0.0)) fail("focal lengths must be positive");
  if (s.channels != 1 && s.channels != 3) fail("channels must be 1 or 3");
  if (!(s.noise_sigma >= 0.0)) fail("noise_sigma must be non-negative");
  if (!(s.outlier_fraction >= 0.0 && s.outlier_fraction < 1.0)) fail("outlier_fraction must be in [0, 1)");
  if (s.plane_points < 0 || s.free_points < 0) fail("point counts must be non-negative");
  if (!(s.free_depth_min > 0.0 && s.free_depth_max >= s.free_depth_min)) fail("invalid free-point depth range");
  if ((s.R.transpose() * s.R - Mat3::Identity()).norm() > 1e-6 || s.R.determinant() < 0.0)
    fail("R is not a rotation");
  if (!s.t.allFinite()) fail("t must be finite");
  for (const auto& p : s.planes)
    if (!(p.n.norm() > 0.0)) fail("plane normal must be nonzero");
}

bool insideImage(const Vec2& p, int w, int h) { return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= w - 1 && p.y() <= h - 1; }

std::optional<Vec2> project(const CameraIntrinsics& K, const Vec3& Xc) {
  if (!(Xc.z() > 1e-9)) return std::nullopt;
  return Vec2(K.f * Xc.x() / Xc.z() + K.cx, K.f * Xc.y() / Xc.z() + K.cy);
}

}  // namespace

const FundamentalMatrix& GroundTruth::fundamental() const {
  if (!F) throw Error(ErrorCode::DegenerateGeometry, "pure rotation: the fundamental matrix is undefined");
  return *F;
}

GroundTruth groundTruthGeometry(const CameraIntrinsics& K, const CameraIntrinsics& Kp, const Mat3& R, const Vec3& t,
                                const std::vector<PlaneParams>& planes) {
  GroundTruth gt;
  gt.H_inf = Kp.matrix() * R * K.inverse();
  for (const auto& p : planes) gt.plane_homographies.push_back(planeInducedHomography(K, Kp, R, t, p));
  if (t.norm() < 1e-12) {
    gt.degenerate = true;
    return gt;
  }
  const Vec3 ep = (Kp.matrix() * t).normalized();
  gt.F = FundamentalMatrix::fromMatrix(skew(ep) * gt.H_inf);
  gt.epipoles = epipoles(*gt.F);
  return gt;
}

std::optional<Vec2> groundTruthTransfer(const SceneSpec& spec, const Vec2& x) {
  const Vec3 dir = spec.K.inverse() * Vec3(x.x(), x.y(), 1.0);
  const Hit h = castRay(spec.planes, Vec3::Zero(), dir);
  if (h.plane < 0) return std::nullopt;
  return project(spec.Kp, spec.R * (h.s * dir) + spec.t);
}

ScenePair makeScenePair(const SceneSpec& spec) {
  validateSpec(spec);
  ScenePair out;
  out.truth = groundTruthGeometry(spec.K, spec.Kp, spec.R, spec.t, spec.planes);

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> ux(0.0, spec.width - 1.0), uy(0.0, spec.height - 1.0);
  const Mat3 Kinv = spec.K.inverse();
  const Vec3 ref_center = -spec.R.transpose() * spec.t;

  auto accept = [&](const Vec2& x, const Vec3& X, int plane) {
    const auto xp = project(spec.Kp, spec.R * X + spec.t);
    if (!xp || !insideImage(*xp, spec.width, spec.height)) return false;
    if (plane >= 0) {
      // The point must be the first surface seen from the reference camera.
      const Hit h = castRay(spec.planes, ref_center, X - ref_center);
      if (h.plane != plane || std::abs(h.s - 1.0) > 1e-6) return false;
    }
    out.clean.push_back({x, *xp});
    out.plane_index.push_back(plane);
    return true;
  };

  if (!spec.planes.empty()) {
    const long budget = 50L * spec.plane_points + 1000;
    int got = 0;
    for (long k = 0; k < budget && got < spec.plane_points; ++k) {
      const Vec2 x(ux(rng), uy(rng));
      const Vec3 dir = Kinv * Vec3(x.x(), x.y(), 1.0);
      const Hit h = castRay(spec.planes, Vec3::Zero(), dir);
      if (h.plane >= 0 && accept(x, h.s * dir, h.plane)) ++got;
    }
  }
  {
    std::uniform_real_distribution<double> depth(spec.free_depth_min, spec.free_depth_max);
    const long budget = 50L * spec.free_points + 1000;
    int got = 0;
    for (long k = 0; k < budget && got < spec.free_points; ++k) {
      const Vec2 x(ux(rng), uy(rng));
      const double z = depth(rng);
      if (accept(x, z * (Kinv * Vec3(x.x(), x.y(), 1.0)), -1)) ++got;
    }
  }
  if (out.clean.empty()) throw Error(ErrorCode::InvalidSpec, "no scene point is visible in both views");

  out.corrs = out.clean;
  out.is_inlier.assign(out.corrs.size(), true);
  if (spec.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    auto jitter = [&](Vec2& p) {
      p.x() = std::clamp(p.x() + noise(rng), -0.5, spec.width - 0.5);
      p.y() = std::clamp(p.y() + noise(rng), -0.5, spec.height - 0.5);
    };
    for (auto& c : out.corrs) {
      jitter(c.src);
      jitter(c.dst);
    }
  }
  const auto n_out = static_cast<std::size_t>(std::llround(spec.outlier_fraction * static_cast<double>(out.corrs.size())));
  if (n_out > 0) {
    std::vector<std::size_t> order(out.corrs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < n_out; ++k) {
      out.corrs[order[k]].dst = Vec2(ux(rng), uy(rng));
      out.is_inlier[order[k]] = false;
    }
  }

  if (spec.render) {
    out.tgt = render(spec, Vec3::Zero(), Kinv);
    out.ref = render(spec, ref_center, spec.R.transpose() * spec.Kp.inverse());
  }
  return out;
}

Mat3 rotationY(double radians) {
  const double c = std::cos(radians), s = std::sin(radians);
  Mat3 r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

Mat3 rotationX(double radians) {
  const double c = std::cos(radians), s = std::sin(radians);
  Mat3 r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}

std::vector<PlaneParams> roomCorner(double depth, double dx) {
  const double k = 1.0 / std::sqrt(2.0);
  return {PlaneParams{Vec3(k, 0.0, -k), (depth - dx) * k}, PlaneParams{Vec3(k, 0.0, k), -(depth + dx) * k}};
}

}  // namespace epistitch
