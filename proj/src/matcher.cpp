#include "epistitch/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "epistitch/error.hpp"

namespace epistitch {

namespace {

struct Descriptor {
  Vec2 pos;
  std::vector<double> v;
};

std::vector<Descriptor> describe(const ImageBuffer& img, const std::vector<Corner>& corners, int r) {
  const std::vector<double> luma = img.luma();
  const int w = img.width();
  std::vector<Descriptor> out;
  for (const auto& c : corners) {
    Descriptor d{Vec2(c.x, c.y), {}};
    d.v.reserve(static_cast<std::size_t>((2 * r + 1) * (2 * r + 1)));
    bool ok = true;
    for (int dy = -r; dy <= r && ok; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        if (!img.valid(c.x + dx, c.y + dy)) {
          ok = false;
          break;
        }
        d.v.push_back(luma[static_cast<std::size_t>(c.y + dy) * static_cast<std::size_t>(w) + static_cast<std::size_t>(c.x + dx)]);
      }
    if (!ok) continue;
    double mean = 0.0;
    for (double x : d.v) mean += x;
    mean /= static_cast<double>(d.v.size());
    double norm = 0.0;
    for (double& x : d.v) {
      x -= mean;
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (double& x : d.v) x /= norm;
    out.push_back(std::move(d));
  }
  return out;
}

double distance(const Descriptor& a, const Descriptor& b) {
  double dot = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) dot += a.v[i] * b.v[i];
  return std::sqrt(std::max(0.0, 2.0 - 2.0 * dot));
}

struct Nearest {
  int best = -1;
  double d1 = std::numeric_limits<double>::infinity();
  double d2 = std::numeric_limits<double>::infinity();
};

std::vector<Nearest> nearest(const std::vector<Descriptor>& from, const std::vector<Descriptor>& to) {
  std::vector<Nearest> out(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    Nearest& n = out[i];
    for (std::size_t j = 0; j < to.size(); ++j) {
      const double d = distance(from[i], to[j]);
      if (d < n.d1) {
        n.d2 = n.d1;
        n.d1 = d;
        n.best = static_cast<int>(j);
      } else if (d < n.d2) {
        n.d2 = d;
      }
    }
  }
  return out;
}

}  // namespace

std::vector<Corner> detectCorners(const ImageBuffer& img, const MatcherConfig& cfg) {
  const int w = img.width(), h = img.height();
  const std::vector<double> l = img.luma();
  auto at = [&](int x, int y) { return l[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)]; };
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  std::vector<double> ixx(n, 0.0), iyy(n, 0.0), ixy(n, 0.0);
  for (int y = 1; y + 1 < h; ++y)
    for (int x = 1; x + 1 < w; ++x) {
      const double gx = (at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1) - at(x - 1, y - 1) - 2 * at(x - 1, y) -
                         at(x - 1, y + 1)) / 8.0;
      const double gy = (at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1) - at(x - 1, y - 1) - 2 * at(x, y - 1) -
                         at(x + 1, y - 1)) / 8.0;
      const std::size_t k = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
      ixx[k] = gx * gx;
      iyy[k] = gy * gy;
      ixy[k] = gx * gy;
    }
  // 5x5 box window for the structure tensor.
  const int win = 2;
  std::vector<double> resp(n, 0.0);
  double peak = 0.0;
  for (int y = win + 1; y + win + 1 < h; ++y)
    for (int x = win + 1; x + win + 1 < w; ++x) {
      double a = 0.0, b = 0.0, c = 0.0;
      for (int dy = -win; dy <= win; ++dy)
        for (int dx = -win; dx <= win; ++dx) {
          const std::size_t k = static_cast<std::size_t>(y + dy) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x + dx);
          a += ixx[k];
          b += iyy[k];
          c += ixy[k];
        }
      const double r = a * b - c * c - cfg.harris_k * (a + b) * (a + b);
      resp[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)] = r;
      peak = std::max(peak, r);
    }
  std::vector<Corner> corners;
  if (!(peak > 0.0)) return corners;
  const int border = std::max(cfg.patch_radius, win + 1);
  const int nr = cfg.nms_radius;
  for (int y = border; y < h - border; ++y)
    for (int x = border; x < w - border; ++x) {
      const double r = resp[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)];
      if (r <= cfg.response_floor * peak) continue;
      bool is_max = true;
      for (int dy = -nr; dy <= nr && is_max; ++dy)
        for (int dx = -nr; dx <= nr; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          const double o = resp[static_cast<std::size_t>(yy) * static_cast<std::size_t>(w) + static_cast<std::size_t>(xx)];
          // Ties go to the first pixel in raster order.
          if (o > r || (o == r && (dy < 0 || (dy == 0 && dx < 0)))) {
            is_max = false;
            break;
          }
        }
      if (is_max) corners.push_back({x, y, r});
    }
  std::stable_sort(corners.begin(), corners.end(), [](const Corner& a, const Corner& b) { return a.response > b.response; });
  if (corners.size() > static_cast<std::size_t>(cfg.max_corners)) corners.resize(static_cast<std::size_t>(cfg.max_corners));
  return corners;
}

std::vector<Correspondence> builtinMatch(const ImageBuffer& ref, const ImageBuffer& tgt, const MatcherConfig& cfg) {
  if (ref.width() < 64 || ref.height() < 64 || tgt.width() < 64 || tgt.height() < 64)
    throw Error(ErrorCode::InvalidSize, "built-in matcher needs images of at least 64x64");
  const auto dt = describe(tgt, detectCorners(tgt, cfg), cfg.patch_radius);
  const auto dr = describe(ref, detectCorners(ref, cfg), cfg.patch_radius);
  const auto fwd = nearest(dt, dr);
  const auto bwd = nearest(dr, dt);
  std::vector<Correspondence> out;
  for (std::size_t i = 0; i < dt.size(); ++i) {
    const Nearest& n = fwd[i];
    if (n.best < 0 || bwd[static_cast<std::size_t>(n.best)].best != static_cast<int>(i)) continue;
    if (!(n.d1 < cfg.ratio * n.d2)) continue;
    out.push_back({dt[i].pos, dr[static_cast<std::size_t>(n.best)].pos});
  }
  if (out.size() < 8)
    throw Error(ErrorCode::InsufficientMatches, "built-in matcher found only " + std::to_string(out.size()) + " matches");
  return out;
}

}  // namespace epistitch
