#include "epistitch/edf.hpp"

#include <algorithm>
#include <cmath>

#include "epistitch/error.hpp"

namespace epistitch {

namespace {

constexpr double kMergeDistance = 1e-6;
constexpr std::size_t kMaxAnchors = 4'000'000;

struct Controls {
  std::vector<Vec2> centers;
  std::vector<Vec2> g;
};

// Merges centers closer than kMergeDistance, averaging their residuals.
Controls mergeDuplicates(std::span<const ControlResidual> residuals) {
  Controls out;
  std::vector<bool> used(residuals.size(), false);
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    if (used[i]) continue;
    if (!residuals[i].center.allFinite() || !residuals[i].g.allFinite())
      throw Error(ErrorCode::SingularSystem, "non-finite control residual");
    Vec2 acc = residuals[i].g;
    int count = 1;
    for (std::size_t j = i + 1; j < residuals.size(); ++j) {
      if (!used[j] && (residuals[j].center - residuals[i].center).norm() < kMergeDistance) {
        used[j] = true;
        acc += residuals[j].g;
        ++count;
      }
    }
    out.centers.push_back(residuals[i].center);
    out.g.push_back(acc / count);
  }
  return out;
}

// Affine basis in a centered, scaled frame: rows ((u - cu)/s, (v - cv)/s, 1).
struct AffineFrame {
  Vec2 shift = Vec2::Zero();
  double scale = 1.0;

  explicit AffineFrame(const std::vector<Vec2>& centers) {
    for (const auto& c : centers) shift += c;
    shift /= static_cast<double>(centers.size());
    double sq = 0.0;
    for (const auto& c : centers) sq += (c - shift).squaredNorm();
    scale = std::sqrt(sq / static_cast<double>(centers.size()));
    if (!(scale > 0.0)) scale = 1.0;
  }

  Eigen::MatrixXd basis(const std::vector<Vec2>& centers) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(centers.size()), 3);
    for (std::size_t i = 0; i < centers.size(); ++i) {
      const Vec2 q = (centers[i] - shift) / scale;
      m.row(static_cast<Eigen::Index>(i)) << q.x(), q.y(), 1.0;
    }
    return m;
  }

  // Coefficients of the same affine function in the pixel frame.
  Vec3 toPixelFrame(const Vec3& a) const {
    const double a1 = a[0] / scale;
    const double a2 = a[1] / scale;
    return Vec3(a1, a2, a[2] - a1 * shift.x() - a2 * shift.y());
  }
};

Eigen::MatrixXd kernelMatrix(const std::vector<Vec2>& centers, double rho) {
  const auto n = static_cast<Eigen::Index>(centers.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = rho;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = tpsKernel((centers[static_cast<std::size_t>(i)] - centers[static_cast<std::size_t>(j)]).norm());
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

void checkResidual(const Eigen::MatrixXd& a, const Eigen::MatrixXd& z, const Eigen::MatrixXd& b) {
  const double scale = std::max(b.cwiseAbs().maxCoeff(), 1e-300);
  const double res = (a * z - b).cwiseAbs().maxCoeff();
  if (!z.allFinite() || res > 1e-6 * scale)
    throw Error(ErrorCode::SingularSystem, "TPS system is singular (duplicate or collinear centers)");
}

EDFModel solve(std::span<const ControlResidual> residuals, const Vec2& ep, double rho, AffineCoupling coupling) {
  if (!(rho >= 0.0)) throw Error(ErrorCode::SingularSystem, "regularizer must be non-negative");
  Controls ctl = mergeDuplicates(residuals);
  const std::size_t n = ctl.centers.size();
  if (n < 3) throw Error(ErrorCode::SingularSystem, "need at least 3 distinct centers, got " + std::to_string(n));

  const AffineFrame frame(ctl.centers);
  const Eigen::MatrixXd M = frame.basis(ctl.centers);
  {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    const auto s = svd.singularValues();
    if (s[2] <= 1e-9 * s[0]) throw Error(ErrorCode::SingularSystem, "control centers are collinear");
  }
  const Eigen::MatrixXd K = kernelMatrix(ctl.centers, rho);
  const auto N = static_cast<Eigen::Index>(n);

  EDFModel model;
  model.centers = ctl.centers;
  model.eprime = ep;
  model.rho = rho;
  for (const auto& g : ctl.g) model.max_residual = std::max(model.max_residual, g.norm());

  if (coupling == AffineCoupling::PerAxis) {
    if (std::abs(ep.x()) < 1e-12 || std::abs(ep.y()) < 1e-12)
      throw Error(ErrorCode::SingularSystem, "epipole coordinate is zero; affine part cannot be scaled by it");
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(N + 3, N + 3);
    a.topLeftCorner(N, N) = K;
    a.topRightCorner(N, 3) = M;
    a.bottomLeftCorner(3, N) = M.transpose();
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(N + 3, 2);
    for (Eigen::Index i = 0; i < N; ++i) {
      b(i, 0) = ctl.g[static_cast<std::size_t>(i)].x();
      b(i, 1) = ctl.g[static_cast<std::size_t>(i)].y();
    }
    const Eigen::MatrixXd z = a.partialPivLu().solve(b);
    checkResidual(a, z, b);
    model.w = z.col(0).head(N);
    model.wprime = z.col(1).head(N);
    model.m = frame.toPixelFrame(z.col(0).tail<3>()) / ep.x();
    model.mprime = frame.toPixelFrame(z.col(1).tail<3>()) / ep.y();
  } else {
    const Eigen::Index dim = 2 * N + 3;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
    a.block(0, 0, N, N) = K;
    a.block(N, N, N, N) = K;
    a.block(0, 2 * N, N, 3) = ep.x() * M;
    a.block(N, 2 * N, N, 3) = ep.y() * M;
    a.block(2 * N, 0, 3, N) = ep.x() * M.transpose();
    a.block(2 * N, N, 3, N) = ep.y() * M.transpose();
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(dim, 1);
    for (Eigen::Index i = 0; i < N; ++i) {
      b(i, 0) = ctl.g[static_cast<std::size_t>(i)].x();
      b(N + i, 0) = ctl.g[static_cast<std::size_t>(i)].y();
    }
    const Eigen::MatrixXd z = a.partialPivLu().solve(b);
    checkResidual(a, z, b);
    model.w = z.col(0).segment(0, N);
    model.wprime = z.col(0).segment(N, N);
    model.m = frame.toPixelFrame(z.col(0).tail<3>());
    model.mprime = model.m;
  }
  return model;
}

}  // namespace

double ResidualSet::maxNorm() const {
  double m = 0.0;
  for (const auto& r : items) m = std::max(m, r.g.norm());
  return m;
}

double tpsKernel(double r) { return r > 0.0 ? r * r * std::log(r) : 0.0; }

Vec2 EDFModel::displacement(const Vec2& p) const {
  double du = 0.0, dv = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const double phi = tpsKernel((p - centers[i]).norm());
    du += w[static_cast<Eigen::Index>(i)] * phi;
    dv += wprime[static_cast<Eigen::Index>(i)] * phi;
  }
  const Vec3 ph(p.x(), p.y(), 1.0);
  du += eprime.x() * m.dot(ph);
  dv += eprime.y() * mprime.dot(ph);
  return Vec2(du, dv);
}

ResidualSet computeResiduals(const Mat3& H_inf, std::span<const Correspondence> corrs) {
  ResidualSet out;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const Vec3 q = H_inf * Vec3(corrs[i].src.x(), corrs[i].src.y(), 1.0);
    if (!(std::abs(q.z()) > 1e-9 * q.norm())) {
      ++out.points_at_infinity;
      continue;
    }
    const Vec2 x_inf = q.head<2>() / q.z();
    out.items.push_back({x_inf, corrs[i].dst - x_inf});
    out.source.push_back(i);
  }
  return out;
}

EDFModel fitEdf(std::span<const ControlResidual> residuals, const HPoint2& eprime, const EDFConfig& cfg) {
  if (!eprime.normalized().isFinite(1e-9))
    throw Error(ErrorCode::EpipoleAtInfinity, "epipole has no inhomogeneous form");
  return solve(residuals, eprime.pixel(), cfg.effectiveRho(), cfg.coupling);
}

EDFModel fitPlainTps(std::span<const ControlResidual> residuals, const EDFConfig& cfg) {
  return solve(residuals, Vec2::Ones(), cfg.effectiveRho(), AffineCoupling::PerAxis);
}

double edfSystemResidual(const EDFModel& model, std::span<const ControlResidual> residuals, AffineCoupling coupling) {
  const Controls ctl = mergeDuplicates(residuals);
  double worst = 0.0, rhs = 0.0;
  const std::size_t n = ctl.centers.size();
  for (std::size_t i = 0; i < n; ++i) {
    double ku = model.rho * model.w[static_cast<Eigen::Index>(i)];
    double kv = model.rho * model.wprime[static_cast<Eigen::Index>(i)];
    for (std::size_t j = 0; j < n; ++j) {
      const double phi = tpsKernel((ctl.centers[i] - ctl.centers[j]).norm());
      ku += phi * model.w[static_cast<Eigen::Index>(j)];
      kv += phi * model.wprime[static_cast<Eigen::Index>(j)];
    }
    const Vec3 x(ctl.centers[i].x(), ctl.centers[i].y(), 1.0);
    worst = std::max(worst, std::abs(ku + model.eprime.x() * model.m.dot(x) - ctl.g[i].x()));
    worst = std::max(worst, std::abs(kv + model.eprime.y() * model.mprime.dot(x) - ctl.g[i].y()));
    rhs = std::max({rhs, std::abs(ctl.g[i].x()), std::abs(ctl.g[i].y())});
  }
  Vec3 side_u = Vec3::Zero(), side_v = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 x(ctl.centers[i].x(), ctl.centers[i].y(), 1.0);
    side_u += model.w[static_cast<Eigen::Index>(i)] * x;
    side_v += model.wprime[static_cast<Eigen::Index>(i)] * x;
  }
  if (coupling == AffineCoupling::PerAxis) {
    worst = std::max({worst, side_u.cwiseAbs().maxCoeff(), side_v.cwiseAbs().maxCoeff()});
  } else {
    worst = std::max(worst, (model.eprime.x() * side_u + model.eprime.y() * side_v).cwiseAbs().maxCoeff());
  }
  return rhs > 0.0 ? worst / rhs : worst;
}

double Rect::distanceTo(const Vec2& p) const {
  const double dx = std::max({x0 - p.x(), 0.0, p.x() - x1});
  const double dy = std::max({y0 - p.y(), 0.0, p.y() - y1});
  return std::hypot(dx, dy);
}

Vec2 DisplacementGrid::interpolate(const Vec2& p) const {
  if (nu == 0 || nv == 0) return Vec2::Zero();
  const Vec2 q = (p - origin) / spacing;
  const double fx = std::clamp(q.x(), 0.0, static_cast<double>(nu - 1));
  const double fy = std::clamp(q.y(), 0.0, static_cast<double>(nv - 1));
  const int i0 = std::min(static_cast<int>(fx), std::max(nu - 2, 0));
  const int j0 = std::min(static_cast<int>(fy), std::max(nv - 2, 0));
  const int i1 = std::min(i0 + 1, nu - 1);
  const int j1 = std::min(j0 + 1, nv - 1);
  const double s = fx - i0, t = fy - j0;
  return (1 - s) * (1 - t) * displacement[index(i0, j0)] + s * (1 - t) * displacement[index(i1, j0)] +
         (1 - s) * t * displacement[index(i0, j1)] + s * t * displacement[index(i1, j1)];
}

double taperWeight(double dist, double width) {
  if (dist <= 0.0) return 1.0;
  if (!(width > 0.0) || dist >= width) return 0.0;
  const double x = dist / width;
  return 1.0 - x * x * (3.0 - 2.0 * x);
}

DisplacementGrid buildDisplacementGrid(const EDFModel& model, const Rect& warped_bbox, const Rect& ref_rect,
                                       const EDFConfig& cfg) {
  if (warped_bbox.empty()) throw Error(ErrorCode::ExcessiveGrid, "warped bounding box is empty");
  if (cfg.cell_px < 1) throw Error(ErrorCode::ExcessiveGrid, "cell size must be at least 1 px");
  DisplacementGrid grid;
  grid.spacing = cfg.cell_px;
  grid.origin = Vec2(std::floor(warped_bbox.x0), std::floor(warped_bbox.y0));
  const double nu = std::ceil((warped_bbox.x1 - grid.origin.x()) / grid.spacing) + 1.0;
  const double nv = std::ceil((warped_bbox.y1 - grid.origin.y()) / grid.spacing) + 1.0;
  if (!(nu * nv <= static_cast<double>(kMaxAnchors)))
    throw Error(ErrorCode::ExcessiveGrid, "grid would need " + std::to_string(nu * nv) + " anchors");
  grid.nu = static_cast<int>(nu);
  grid.nv = static_cast<int>(nv);

  const double width = cfg.taper_factor * model.max_residual;
  grid.displacement.assign(static_cast<std::size_t>(grid.nu) * grid.nv, Vec2::Zero());
  grid.weight.assign(grid.displacement.size(), 0.0);
  for (int j = 0; j < grid.nv; ++j) {
    for (int i = 0; i < grid.nu; ++i) {
      const Vec2 p = grid.anchor(i, j);
      const double wgt = taperWeight(ref_rect.distanceTo(p), width);
      grid.weight[grid.index(i, j)] = wgt;
      if (wgt > 0.0) grid.displacement[grid.index(i, j)] = wgt * model.displacement(p);
    }
  }
  return grid;
}

}  // namespace epistitch
