#include "epistitch/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "epistitch/error.hpp"

namespace epistitch {

namespace {

constexpr int kRadius = 5;

void checkSizes(const ImageBuffer& a, const ImageBuffer& b, const Mask& mask) {
  if (a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels() ||
      mask.width() != a.width() || mask.height() != a.height())
    throw Error(ErrorCode::InvalidSize, "metric inputs differ in size");
}

std::array<double, 2 * kRadius + 1> gaussianKernel() {
  std::array<double, 2 * kRadius + 1> k{};
  double sum = 0.0;
  for (int i = -kRadius; i <= kRadius; ++i) {
    k[static_cast<std::size_t>(i + kRadius)] = std::exp(-(i * i) / (2.0 * 1.5 * 1.5));
    sum += k[static_cast<std::size_t>(i + kRadius)];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable Gaussian filter evaluated where the full window is inside the raster.
std::vector<double> blur(const std::vector<double>& src, int w, int h) {
  static const auto k = gaussianKernel();
  std::vector<double> tmp(src.size(), 0.0), out(src.size(), 0.0);
  auto idx = [w](int x, int y) { return static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x); };
  for (int y = 0; y < h; ++y)
    for (int x = kRadius; x < w - kRadius; ++x) {
      double s = 0.0;
      for (int i = -kRadius; i <= kRadius; ++i) s += k[static_cast<std::size_t>(i + kRadius)] * src[idx(x + i, y)];
      tmp[idx(x, y)] = s;
    }
  for (int y = kRadius; y < h - kRadius; ++y)
    for (int x = kRadius; x < w - kRadius; ++x) {
      double s = 0.0;
      for (int i = -kRadius; i <= kRadius; ++i) s += k[static_cast<std::size_t>(i + kRadius)] * tmp[idx(x, y + i)];
      out[idx(x, y)] = s;
    }
  return out;
}

// End points of the part of line l inside [0, w-1] x [0, h-1].
std::optional<std::pair<Vec2, Vec2>> clipLine(const Line2& l, ImageSize size) {
  const double a = l.abc.x(), b = l.abc.y(), c = l.abc.z();
  const double W = size.width - 1.0, H = size.height - 1.0;
  const double eps = 1e-9;
  std::vector<Vec2> pts;
  if (std::abs(b) > 1e-15) {
    for (double x : {0.0, W}) pts.emplace_back(x, -(a * x + c) / b);
  }
  if (std::abs(a) > 1e-15) {
    for (double y : {0.0, H}) pts.emplace_back(-(b * y + c) / a, y);
  }
  std::vector<Vec2> inside;
  for (const auto& p : pts)
    if (p.x() >= -eps && p.x() <= W + eps && p.y() >= -eps && p.y() <= H + eps)
      inside.emplace_back(std::clamp(p.x(), 0.0, W), std::clamp(p.y(), 0.0, H));
  double best = -1.0;
  std::pair<Vec2, Vec2> seg;
  for (std::size_t i = 0; i < inside.size(); ++i)
    for (std::size_t j = i + 1; j < inside.size(); ++j) {
      const double d = (inside[i] - inside[j]).norm();
      if (d > best) {
        best = d;
        seg = {inside[i], inside[j]};
      }
    }
  if (best <= 0.0) return std::nullopt;
  // Fixed orientation so the sampling order does not depend on edge order.
  if (seg.first.x() > seg.second.x() || (seg.first.x() == seg.second.x() && seg.first.y() > seg.second.y()))
    std::swap(seg.first, seg.second);
  return seg;
}

}  // namespace

double ssim(const ImageBuffer& a, const ImageBuffer& b, const Mask& mask) {
  checkSizes(a, b, mask);
  const int w = a.width(), h = a.height();
  const Mask centers = mask.eroded(kRadius);
  if (centers.count() == 0) throw Error(ErrorCode::EmptyOverlap, "no SSIM window fits inside the mask");
  const std::vector<double> la = a.luma(), lb = b.luma();
  std::vector<double> aa(la.size()), bb(la.size()), ab(la.size());
  for (std::size_t i = 0; i < la.size(); ++i) {
    aa[i] = la[i] * la[i];
    bb[i] = lb[i] * lb[i];
    ab[i] = la[i] * lb[i];
  }
  const auto mu_a = blur(la, w, h), mu_b = blur(lb, w, h);
  const auto e_aa = blur(aa, w, h), e_bb = blur(bb, w, h), e_ab = blur(ab, w, h);
  const double c1 = (0.01 * 255) * (0.01 * 255), c2 = (0.03 * 255) * (0.03 * 255);
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!centers(x, y)) continue;
      const std::size_t i = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
      sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++n;
    }
  return sum / static_cast<double>(n);
}

double psnr(const ImageBuffer& a, const ImageBuffer& b, const Mask& mask) {
  checkSizes(a, b, mask);
  double se = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      if (!mask(x, y)) continue;
      for (int c = 0; c < a.channels(); ++c) {
        const double d = static_cast<double>(a.at(x, y, c)) - static_cast<double>(b.at(x, y, c));
        se += d * d;
        ++n;
      }
    }
  if (n == 0) throw Error(ErrorCode::EmptyOverlap, "PSNR mask is empty");
  const double mse = se / static_cast<double>(n);
  if (mse < 255.0 * 255.0 * std::pow(10.0, -9.9)) return 99.0;
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

Mask overlapMask(const Mask& a, const Mask& b, int erosion) { return (a & b).eroded(erosion); }

std::vector<Vec2> sampleEpipolarLine(const FundamentalMatrix& F, const Vec2& xprime, ImageSize target, int count) {
  const auto seg = clipLine(epipolarLine(F, xprime, EpipolarSide::InIFromXPrime), target);
  std::vector<Vec2> out;
  if (!seg || count < 1) return out;
  for (int k = 0; k < count; ++k) {
    const double t = count == 1 ? 0.5 : static_cast<double>(k) / (count - 1);
    out.push_back(seg->first + t * (seg->second - seg->first));
  }
  return out;
}

std::vector<ProjectivityProbe> projectivityProbes(const FundamentalMatrix& F, std::span<const Correspondence> matches,
                                                  ImageSize target, const Rect& ref_rect, const PointMap& map) {
  constexpr int kSamples = 200;
  std::vector<ProjectivityProbe> out;
  for (const auto& m : matches) {
    std::vector<Vec2> line;
    try {
      line = sampleEpipolarLine(F, m.dst, target, kSamples);
    } catch (const Error&) {
      continue;
    }
    int best_start = -1, best_len = 0, start = -1;
    for (int k = 0; k <= static_cast<int>(line.size()); ++k) {
      bool outside = false;
      if (k < static_cast<int>(line.size())) {
        const auto q = map(line[static_cast<std::size_t>(k)]);
        outside = q && q->allFinite() && !ref_rect.contains(*q);
      }
      if (outside && start < 0) start = k;
      if (!outside && start >= 0) {
        if (k - start > best_len) {
          best_len = k - start;
          best_start = start;
        }
        start = -1;
      }
    }
    if (best_len < 2) continue;
    const Vec2 p0 = line[static_cast<std::size_t>(best_start)];
    const Vec2 p1 = line[static_cast<std::size_t>(best_start + best_len - 1)];
    for (double f : {0.25, 0.5, 0.75}) out.push_back({m, p0 + f * (p1 - p0)});
  }
  return out;
}

ProjectivityResult projectivityMetric(const FundamentalMatrix& F, const PointMap& map,
                                      std::span<const ProjectivityProbe> probes) {
  ProjectivityResult r;
  double sum = 0.0;
  for (const auto& p : probes) {
    const auto q = map(p.y);
    if (!q || !q->allFinite()) continue;
    double d;
    try {
      d = std::abs(epipolarLine(F, p.y, EpipolarSide::InJFromX).signedDistance(*q));
    } catch (const Error&) {
      continue;
    }
    sum += d;
    r.max_px = std::max(r.max_px, d);
    ++r.n;
  }
  if (r.n == 0) throw Error(ErrorCode::NoEvalPoints, "no projectivity probe could be evaluated");
  r.mean_px = sum / r.n;
  return r;
}

}  // namespace epistitch
