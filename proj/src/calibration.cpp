#include "epistitch/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "epistitch/error.hpp"

namespace epistitch {

StereoCalibration StereoCalibration::assemble(const CameraIntrinsics& K, const CameraIntrinsics& Kp,
                                              const RigidMotion& motion, const FundamentalMatrix& F) {
  const auto poles = epipoles(F);
  const Mat3 h = infiniteHomography(K, Kp, motion.rotation());
  if (!(std::abs(h.determinant()) > 1e-12)) throw Error(ErrorCode::DegenerateGeometry, "infinite homography is singular");
  return StereoCalibration{K, Kp, motion, F, poles.e, poles.ep, h};
}

CameraIntrinsics initialIntrinsics(int width, int height, std::optional<double> focal_hint) {
  if (width < 1 || height < 1)
    throw Error(ErrorCode::InvalidSize, "image size must be positive, got " + std::to_string(width) + "x" +
                                            std::to_string(height));
  if (focal_hint && !(*focal_hint > 0.0)) throw Error(ErrorCode::InvalidSize, "focal hint must be positive");
  const double f = focal_hint ? *focal_hint : 1.2 * static_cast<double>(std::max(width, height));
  return CameraIntrinsics{f, width / 2.0, height / 2.0};
}

std::array<RigidMotion, 4> essentialFactorizations(const Mat3& E) {
  Eigen::JacobiSVD<Mat3> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  if (u.determinant() < 0.0) u = -u;
  if (v.determinant() < 0.0) v = -v;
  Mat3 w;
  w << 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0;
  const Mat3 r1 = u * w * v.transpose();
  const Mat3 r2 = u * w.transpose() * v.transpose();
  const Vec3 t = u.col(2);
  return {RigidMotion::create(r1, t), RigidMotion::create(r1, -t), RigidMotion::create(r2, t),
          RigidMotion::create(r2, -t)};
}

int cheiralityCount(const RigidMotion& motion, const CameraIntrinsics& K, const CameraIntrinsics& Kp,
                    std::span<const Correspondence> corrs) {
  const Mat3 kinv = K.inverse();
  const Mat3 kpinv = Kp.inverse();
  Eigen::Matrix<double, 3, 4> p1 = Eigen::Matrix<double, 3, 4>::Zero();
  p1.leftCols<3>() = Mat3::Identity();
  Eigen::Matrix<double, 3, 4> p2;
  p2.leftCols<3>() = motion.rotation();
  p2.col(3) = motion.direction();

  int count = 0;
  for (const auto& c : corrs) {
    const Vec3 a = kinv * Vec3(c.src.x(), c.src.y(), 1.0);
    const Vec3 b = kpinv * Vec3(c.dst.x(), c.dst.y(), 1.0);
    Eigen::Matrix4d m;
    m.row(0) = a.x() * p1.row(2) - a.z() * p1.row(0);
    m.row(1) = a.y() * p1.row(2) - a.z() * p1.row(1);
    m.row(2) = b.x() * p2.row(2) - b.z() * p2.row(0);
    m.row(3) = b.y() * p2.row(2) - b.z() * p2.row(1);
    Eigen::JacobiSVD<Eigen::Matrix4d> svd(m, Eigen::ComputeFullV);
    const Eigen::Vector4d X = svd.matrixV().col(3);
    if (std::abs(X.w()) < 1e-12 * X.norm()) continue;
    const Vec3 x3 = X.head<3>() / X.w();
    const double z1 = x3.z();
    const double z2 = (motion.rotation() * x3 + motion.direction()).z();
    if (z1 > 0.0 && z2 > 0.0) ++count;
  }
  return count;
}

RigidMotion rotationFromF(const FundamentalMatrix& F, const CameraIntrinsics& K, const CameraIntrinsics& Kp,
                          std::span<const Correspondence> inliers) {
  if (inliers.empty()) throw Error(ErrorCode::InsufficientMatches, "cheirality voting needs at least one inlier");
  const Mat3 E = Kp.matrix().transpose() * F.matrix() * K.matrix();
  const auto candidates = essentialFactorizations(E);
  int best = -1;
  int best_count = -1;
  for (int i = 0; i < 4; ++i) {
    const int c = cheiralityCount(candidates[static_cast<std::size_t>(i)], K, Kp, inliers);
    if (c > best_count) {
      best_count = c;
      best = i;
    }
  }
  if (2 * best_count <= static_cast<int>(inliers.size()))
    throw Error(ErrorCode::DegenerateGeometry, "no essential factorization has a cheirality majority");
  return candidates[static_cast<std::size_t>(best)];
}

Mat3 infiniteHomography(const CameraIntrinsics& K, const CameraIntrinsics& Kp, const Mat3& R) {
  return Kp.matrix() * R * K.inverse();
}

CompatibilityResidual compatibilityResidual(const Mat3& H_inf, const FundamentalMatrix& F) {
  const Mat3 a = H_inf.transpose() * F.matrix();
  const double an = a.norm();
  if (!(an >= 1e-15))
    return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  const Mat3 s = 0.5 * (a - a.transpose());
  const Vec3 axis(s(2, 1), s(0, 2), s(1, 0));
  const Vec3 e = epipoles(F).e.coords();
  const double angle = axis.norm() > 0.0 ? std::atan2(axis.cross(e).norm(), std::abs(axis.dot(e)))
                                         : std::numeric_limits<double>::infinity();
  return {(a + a.transpose()).norm() / an, angle};
}

namespace {

struct TransferTerms {
  double n1 = 0.0;
  double n2 = 0.0;
  double den = 0.0;
};

TransferTerms transferTerms(const Mat3& H, const Mat3& Hinv, const Mat3& F, const Correspondence& c, bool literal) {
  const Vec3 x(c.src.x(), c.src.y(), 1.0);
  const Vec3 xp(c.dst.x(), c.dst.y(), 1.0);
  const Vec3 fx = F * x;
  const Vec3 ftxp = F.transpose() * xp;
  TransferTerms t;
  t.den = fx.x() * fx.x() + fx.y() * fx.y() + ftxp.x() * ftxp.x() + ftxp.y() * ftxp.y();
  t.n1 = literal ? x.dot(H * fx) : (H * x).dot(fx);
  t.n2 = xp.dot(F * (Hinv * xp));
  return t;
}

struct CalibState {
  double f;
  double fp;
  Mat3 R;
};

class Eq4Problem {
 public:
  Eq4Problem(const StereoCalibration& init, std::span<const Correspondence> corrs, bool literal)
      : K_(init.K), Kp_(init.Kp), F_(init.F.matrix()), corrs_(corrs), literal_(literal) {}

  Mat3 homography(const CalibState& s) const {
    CameraIntrinsics k = K_, kp = Kp_;
    k.f = s.f;
    kp.f = s.fp;
    return infiniteHomography(k, kp, s.R);
  }

  Eigen::VectorXd residuals(const CalibState& s) const {
    const Mat3 h = homography(s);
    const Mat3 hinv = h.inverse();
    Eigen::VectorXd r(static_cast<Eigen::Index>(2 * corrs_.size()));
    for (std::size_t i = 0; i < corrs_.size(); ++i) {
      const auto t = transferTerms(h, hinv, F_, corrs_[i], literal_);
      const double scale = t.den > 1e-30 ? 1.0 / std::sqrt(t.den) : 0.0;
      r[static_cast<Eigen::Index>(2 * i)] = t.n1 * scale;
      r[static_cast<Eigen::Index>(2 * i + 1)] = t.n2 * scale;
    }
    return r;
  }

  static CalibState apply(const CalibState& s, const Eigen::Matrix<double, 5, 1>& d) {
    const Vec3 w = d.tail<3>();
    const double angle = w.norm();
    const Mat3 dr = angle > 0.0 ? Mat3(Eigen::AngleAxisd(angle, w / angle)) : Mat3::Identity();
    return CalibState{s.f + d[0], s.fp + d[1], orthonormalize(dr * s.R)};
  }

 private:
  CameraIntrinsics K_, Kp_;
  Mat3 F_;
  std::span<const Correspondence> corrs_;
  bool literal_;
};

}  // namespace

double infiniteHomographyObjective(const Mat3& H_inf, const FundamentalMatrix& F, std::span<const Correspondence> corrs,
                                   bool literal) {
  const Mat3 hinv = H_inf.inverse();
  double sum = 0.0;
  for (const auto& c : corrs) {
    const auto t = transferTerms(H_inf, hinv, F.matrix(), c, literal);
    if (t.den > 1e-30) sum += (t.n1 * t.n1 + t.n2 * t.n2) / t.den;
  }
  return sum;
}

RefineResult refineCalibration(const StereoCalibration& init, std::span<const Correspondence> inliers,
                               const RefineConfig& cfg) {
  if (inliers.size() < 8) throw Error(ErrorCode::InsufficientMatches, "refinement needs at least 8 inliers");
  if (cfg.max_iters < 1 || !(cfg.rel_tol > 0.0))
    throw Error(ErrorCode::InvalidSize, "refine config needs max_iters >= 1 and rel_tol > 0");

  const Eq4Problem problem(init, inliers, cfg.eq4_literal);
  CalibState state{init.K.f, init.Kp.f, init.motion.rotation()};
  Eigen::VectorXd r = problem.residuals(state);
  double cost = r.squaredNorm();

  RefineResult out{init, cost, cost, {cost}, 0, true};
  double lambda = cfg.damping_init;
  bool improving = false;
  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    if (cost <= 1e-24) {
      improving = false;
      break;
    }
    // Central-difference Jacobian around the current state.
    const Eigen::Index m = r.size();
    Eigen::Matrix<double, Eigen::Dynamic, 5> J(m, 5);
    const double steps[5] = {1e-6 * std::max(std::abs(state.f), 1.0), 1e-6 * std::max(std::abs(state.fp), 1.0), 1e-6,
                             1e-6, 1e-6};
    for (int j = 0; j < 5; ++j) {
      Eigen::Matrix<double, 5, 1> d = Eigen::Matrix<double, 5, 1>::Zero();
      d[j] = steps[j];
      const Eigen::VectorXd rp = problem.residuals(Eq4Problem::apply(state, d));
      d[j] = -steps[j];
      const Eigen::VectorXd rm = problem.residuals(Eq4Problem::apply(state, d));
      J.col(j) = (rp - rm) / (2.0 * steps[j]);
    }
    const Eigen::Matrix<double, 5, 5> A = J.transpose() * J;
    const Eigen::Matrix<double, 5, 1> g = J.transpose() * r;
    if (!(g.norm() > 0.0)) {
      improving = false;
      break;
    }
    const double diag_floor = 1e-12 * std::max(A.diagonal().maxCoeff(), 1e-300);

    bool accepted = false;
    while (lambda < 1e16) {
      Eigen::Matrix<double, 5, 5> damped = A;
      for (int j = 0; j < 5; ++j) damped(j, j) += lambda * std::max(A(j, j), diag_floor);
      const Eigen::Matrix<double, 5, 1> delta = damped.ldlt().solve(-g);
      const CalibState cand = Eq4Problem::apply(state, delta);
      if (delta.allFinite() && cand.f > 0.0 && cand.fp > 0.0) {
        const Eigen::VectorXd rc = problem.residuals(cand);
        const double c = rc.squaredNorm();
        if (std::isfinite(c) && c < cost) {
          const double rel = (cost - c) / cost;
          state = cand;
          r = rc;
          cost = c;
          lambda = std::max(lambda / 10.0, 1e-15);
          out.objective_history.push_back(cost);
          accepted = true;
          improving = rel > cfg.rel_tol;
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!accepted || !improving) {
      improving = false;
      ++iter;
      break;
    }
  }

  CameraIntrinsics k = init.K, kp = init.Kp;
  k.f = state.f;
  kp.f = state.fp;
  const auto motion = RigidMotion::create(state.R, init.motion.direction());
  out.calibration = StereoCalibration::assemble(k, kp, motion, init.F);
  out.final_objective = cost;
  out.iterations = iter;
  out.converged = !(iter >= cfg.max_iters && improving);
  return out;
}

}  // namespace epistitch
