#include "epistitch/warp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "epistitch/error.hpp"

namespace epistitch {

namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double preimageDepth(const Mat3& Hinv, const Vec2& p) { return (Hinv * Vec3(p.x(), p.y(), 1.0)).z(); }

bool convexPositive(const std::array<Vec2, 4>& q) {
  for (int k = 0; k < 4; ++k) {
    const Vec2& a = q[static_cast<std::size_t>(k)];
    const Vec2& b = q[static_cast<std::size_t>((k + 1) % 4)];
    const Vec2& c = q[static_cast<std::size_t>((k + 2) % 4)];
    if (!(cross(b - a, c - b) > 0.0)) return false;
  }
  return true;
}

}  // namespace

Mat3 normalizeBaseHomography(const Mat3& H, ImageSize target) {
  const Vec3 c = H * Vec3((target.width - 1) / 2.0, (target.height - 1) / 2.0, 1.0);
  if (!(std::abs(c.z()) > 0.0)) throw Error(ErrorCode::ExcessiveCanvas, "target center maps to infinity");
  return H / c.z();
}

Rect warpedBounds(ImageSize target, const Mat3& H) {
  const std::array<Vec2, 4> corners{Vec2(0, 0), Vec2(target.width - 1, 0), Vec2(target.width - 1, target.height - 1),
                                    Vec2(0, target.height - 1)};
  Rect box{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  int kept = 0;
  for (const auto& c : corners) {
    const Vec3 q = H * Vec3(c.x(), c.y(), 1.0);
    if (!(q.z() >= kMinPreimageDepth)) continue;
    const Vec2 p = q.head<2>() / q.z();
    if (!p.allFinite()) continue;
    box.x0 = std::min(box.x0, p.x());
    box.y0 = std::min(box.y0, p.y());
    box.x1 = std::max(box.x1, p.x());
    box.y1 = std::max(box.y1, p.y());
    ++kept;
  }
  if (kept == 0) throw Error(ErrorCode::ExcessiveCanvas, "no target corner is visible from the reference view");
  return box;
}

Canvas computeCanvas(ImageSize ref, ImageSize target, const Mat3& H, const DisplacementGrid& grid, double cap) {
  const Rect bounds = warpedBounds(target, H);
  const Mat3 hinv = H.inverse();
  double x0 = 0.0, y0 = 0.0, x1 = ref.width - 1.0, y1 = ref.height - 1.0;
  for (int j = 0; j < grid.nv; ++j) {
    for (int i = 0; i < grid.nu; ++i) {
      const Vec2 p = grid.anchor(i, j);
      if (!(preimageDepth(hinv, p) >= kMinPreimageDepth)) continue;
      const Vec2 clamped(std::clamp(p.x(), bounds.x0, bounds.x1), std::clamp(p.y(), bounds.y0, bounds.y1));
      const Vec2 q = clamped + grid.displacement[grid.index(i, j)];
      if (!q.allFinite()) continue;
      x0 = std::min(x0, q.x());
      y0 = std::min(y0, q.y());
      x1 = std::max(x1, q.x());
      y1 = std::max(y1, q.y());
    }
  }
  const double fx0 = std::floor(x0), fy0 = std::floor(y0);
  const double w = std::ceil(x1) - fx0 + 1.0;
  const double h = std::ceil(y1) - fy0 + 1.0;
  const double limit = cap * static_cast<double>(ref.width) * static_cast<double>(ref.height);
  if (!(w * h <= limit))
    throw Error(ErrorCode::ExcessiveCanvas, "canvas " + std::to_string(w) + "x" + std::to_string(h) +
                                                " exceeds the cap of " + std::to_string(cap) + "x the reference area");
  return Canvas{static_cast<int>(fx0), static_cast<int>(fy0), static_cast<int>(w), static_cast<int>(h)};
}

WarpMesh buildWarpMesh(const DisplacementGrid& grid, const Mat3& H) {
  const Mat3 hinv = H.inverse();
  WarpMesh mesh;
  mesh.origin = grid.origin;
  mesh.spacing = grid.spacing;
  mesh.nu = grid.nu;
  mesh.nv = grid.nv;
  mesh.positions.resize(grid.displacement.size());
  mesh.anchor_valid.resize(grid.displacement.size());
  for (int j = 0; j < grid.nv; ++j) {
    for (int i = 0; i < grid.nu; ++i) {
      const auto k = grid.index(i, j);
      const Vec2 p = grid.anchor(i, j);
      mesh.positions[k] = p + grid.displacement[k];
      mesh.anchor_valid[k] = mesh.positions[k].allFinite() && preimageDepth(hinv, p) >= kMinPreimageDepth;
    }
  }
  if (mesh.nu < 2 || mesh.nv < 2) return mesh;
  mesh.quad_valid.assign(static_cast<std::size_t>(mesh.nu - 1) * static_cast<std::size_t>(mesh.nv - 1), 0);
  for (int j = 0; j + 1 < mesh.nv; ++j) {
    for (int i = 0; i + 1 < mesh.nu; ++i) {
      const std::array<std::size_t, 4> ids{mesh.index(i, j), mesh.index(i + 1, j), mesh.index(i + 1, j + 1),
                                           mesh.index(i, j + 1)};
      bool ok = true;
      std::array<Vec2, 4> q;
      for (std::size_t k = 0; k < 4; ++k) {
        ok = ok && mesh.anchor_valid[ids[k]];
        q[k] = mesh.positions[ids[k]];
      }
      mesh.quad_valid[mesh.quadIndex(i, j)] = ok && convexPositive(q);
    }
  }
  return mesh;
}

std::optional<Vec2> inverseBilinear(const Vec2& q, const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  constexpr double eps = 1e-9;
  const Vec2 e = b - a, f = d - a, g = a - b + c - d, h = q - a;
  const double k2 = cross(g, f);
  const double k1 = cross(e, f) + cross(h, g);
  const double k0 = cross(h, e);

  auto solveS = [&](double t) -> std::optional<double> {
    const Vec2 den = e + t * g;
    const Vec2 num = h - t * f;
    const int axis = std::abs(den.x()) >= std::abs(den.y()) ? 0 : 1;
    if (den[axis] == 0.0) return std::nullopt;
    return num[axis] / den[axis];
  };
  auto inside = [&](double s, double t) { return s >= -eps && s <= 1.0 + eps && t >= -eps && t <= 1.0 + eps; };

  std::array<double, 2> roots{};
  int nroots = 0;
  const double scale = std::abs(k1) + std::abs(k0) + std::abs(k2);
  if (std::abs(k2) <= 1e-12 * scale) {
    if (k1 == 0.0) return std::nullopt;
    roots[nroots++] = -k0 / k1;
  } else {
    const double disc = k1 * k1 - 4.0 * k0 * k2;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    // Numerically stable pair of roots.
    const double qq = -0.5 * (k1 + std::copysign(sq, k1));
    roots[nroots++] = qq / k2;
    if (qq != 0.0) roots[nroots++] = k0 / qq;
  }
  for (int r = 0; r < nroots; ++r) {
    const double t = roots[static_cast<std::size_t>(r)];
    const auto s = solveS(t);
    if (s && inside(*s, t)) return Vec2(std::clamp(*s, 0.0, 1.0), std::clamp(t, 0.0, 1.0));
  }
  return std::nullopt;
}

WarpOutput backwardWarp(const ImageBuffer& target, const WarpMesh& mesh, const Mat3& H, const Canvas& canvas) {
  WarpOutput out{ImageBuffer(canvas.width, canvas.height, target.channels())};
  if (mesh.nu < 2 || mesh.nv < 2) return out;
  const Mat3 hinv = H.inverse();
  const Vec2 offset(canvas.ox, canvas.oy);
  const int tw = target.width(), th = target.height();
  const int chans = target.channels();
  ImageBuffer& img = out.image;

  for (int j = 0; j + 1 < mesh.nv; ++j) {
    for (int i = 0; i + 1 < mesh.nu; ++i) {
      if (!mesh.quad_valid[mesh.quadIndex(i, j)]) {
        ++out.invalid_quads;
        continue;
      }
      const Vec2 a = mesh.positions[mesh.index(i, j)] - offset;
      const Vec2 b = mesh.positions[mesh.index(i + 1, j)] - offset;
      const Vec2 c = mesh.positions[mesh.index(i + 1, j + 1)] - offset;
      const Vec2 d = mesh.positions[mesh.index(i, j + 1)] - offset;
      const int xs = std::max(0, static_cast<int>(std::ceil(std::min({a.x(), b.x(), c.x(), d.x()}))));
      const int xe = std::min(canvas.width - 1, static_cast<int>(std::floor(std::max({a.x(), b.x(), c.x(), d.x()}))));
      const int ys = std::max(0, static_cast<int>(std::ceil(std::min({a.y(), b.y(), c.y(), d.y()}))));
      const int ye = std::min(canvas.height - 1, static_cast<int>(std::floor(std::max({a.y(), b.y(), c.y(), d.y()}))));
      for (int y = ys; y <= ye; ++y) {
        for (int x = xs; x <= xe; ++x) {
          if (img.valid(x, y)) continue;
          const Vec2 q(x, y);
          const auto st = inverseBilinear(q, a, b, c, d);
          if (!st) continue;
          const double s = st->x(), t = st->y();
          const Vec2 back = a + s * (b - a) + t * (d - a) + s * t * (a - b + c - d);
          if ((back - q).norm() > 1e-3) {
            ++out.inversion_failures;
            continue;
          }
          const Vec2 p = mesh.origin + mesh.spacing * Vec2(i + s, j + t);
          const Vec3 src = hinv * Vec3(p.x(), p.y(), 1.0);
          if (!(src.z() >= kMinPreimageDepth)) continue;
          const double u = src.x() / src.z(), v = src.y() / src.z();
          if (!(u >= 0.0 && v >= 0.0 && u <= tw - 1 && v <= th - 1)) continue;
          const int x0 = std::min(static_cast<int>(u), std::max(tw - 2, 0));
          const int y0 = std::min(static_cast<int>(v), std::max(th - 2, 0));
          const int x1 = std::min(x0 + 1, tw - 1), y1 = std::min(y0 + 1, th - 1);
          const double fx = u - x0, fy = v - y0;
          const double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy), w01 = (1 - fx) * fy, w11 = fx * fy;
          if ((w00 > 0 && !target.valid(x0, y0)) || (w10 > 0 && !target.valid(x1, y0)) ||
              (w01 > 0 && !target.valid(x0, y1)) || (w11 > 0 && !target.valid(x1, y1)))
            continue;
          for (int ch = 0; ch < chans; ++ch) {
            const double val = w00 * target.at(x0, y0, ch) + w10 * target.at(x1, y0, ch) +
                               w01 * target.at(x0, y1, ch) + w11 * target.at(x1, y1, ch);
            img.at(x, y, ch) = toByte(val);
          }
          img.mask().set(x, y, true);
          ++out.covered_pixels;
        }
      }
    }
  }
  return out;
}

ImageBuffer placeOnCanvas(const ImageBuffer& ref, const Canvas& canvas) {
  ImageBuffer out(canvas.width, canvas.height, ref.channels());
  for (int y = 0; y < ref.height(); ++y) {
    const int cy = y - canvas.oy;
    if (cy < 0 || cy >= canvas.height) continue;
    for (int x = 0; x < ref.width(); ++x) {
      const int cx = x - canvas.ox;
      if (cx < 0 || cx >= canvas.width || !ref.valid(x, y)) continue;
      for (int c = 0; c < ref.channels(); ++c) out.at(cx, cy, c) = ref.at(x, y, c);
      out.mask().set(cx, cy, true);
    }
  }
  return out;
}

std::vector<double> featherWeights(const Mask& mask) {
  const int w = mask.width(), h = mask.height();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> d(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  auto at = [&](int x, int y) -> double& { return d[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)]; };
  auto get = [&](int x, int y) { return (x < 0 || y < 0 || x >= w || y >= h) ? 0.0 : at(x, y); };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) at(x, y) = mask(x, y) ? inf : 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask(x, y)) at(x, y) = std::min({at(x, y), get(x - 1, y) + 1.0, get(x, y - 1) + 1.0});
  for (int y = h - 1; y >= 0; --y)
    for (int x = w - 1; x >= 0; --x)
      if (mask(x, y)) at(x, y) = std::min({at(x, y), get(x + 1, y) + 1.0, get(x, y + 1) + 1.0});
  return d;
}

BlendOutput linearBlend(const ImageBuffer& ref_on_canvas, const ImageBuffer& warped_target) {
  const ImageBuffer& r = ref_on_canvas;
  const ImageBuffer& t = warped_target;
  if (r.width() != t.width() || r.height() != t.height() || r.channels() != t.channels())
    throw Error(ErrorCode::InvalidSize, "blend inputs must share canvas size and channel count");
  const auto wr = featherWeights(r.mask());
  const auto wt = featherWeights(t.mask());
  BlendOutput out{ImageBuffer(r.width(), r.height(), r.channels()), true};
  for (int y = 0; y < r.height(); ++y) {
    for (int x = 0; x < r.width(); ++x) {
      const bool vr = r.valid(x, y), vt = t.valid(x, y);
      if (!vr && !vt) continue;
      const std::size_t k = static_cast<std::size_t>(y) * static_cast<std::size_t>(r.width()) + static_cast<std::size_t>(x);
      for (int c = 0; c < r.channels(); ++c) {
        if (vr && vt) {
          const double v = (wr[k] * r.at(x, y, c) + wt[k] * t.at(x, y, c)) / (wr[k] + wt[k]);
          out.image.at(x, y, c) = toByte(v);
        } else {
          out.image.at(x, y, c) = vr ? r.at(x, y, c) : t.at(x, y, c);
        }
      }
      if (vr && vt) out.empty_overlap = false;
      out.image.mask().set(x, y, true);
    }
  }
  return out;
}

}  // namespace epistitch
