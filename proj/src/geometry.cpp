#include "epistitch/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <random>

#include "epistitch/error.hpp"

namespace epistitch {

namespace {

// Entries below this (relative to unit Frobenius norm) are treated as zero
// when fixing the sign of a normalized matrix or vector.
constexpr double kSignEps = 1e-8;

Vec3 canonicalSign(Vec3 v) {
  if (std::abs(v.z()) > 1e-12) {
    if (v.z() < 0.0) v = -v;
    return v;
  }
  for (int i = 0; i < 3; ++i) {
    if (std::abs(v[i]) > 1e-12) {
      if (v[i] < 0.0) v = -v;
      break;
    }
  }
  return v;
}

Mat3 enforceRankTwo(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 s = svd.singularValues();
  s[2] = 0.0;
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

std::vector<std::size_t> sampleIndices(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  // Partial Fisher-Yates over an index pool; deterministic for a given engine state.
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

int requiredIterations(double inlier_ratio, int sample_size, double confidence, int cap) {
  if (inlier_ratio <= 0.0) return cap;
  const double p_good = std::pow(inlier_ratio, sample_size);
  if (p_good >= 1.0 - 1e-12) return 1;
  const double n = std::log(1.0 - confidence) / std::log(1.0 - p_good);
  if (!std::isfinite(n) || n > cap) return cap;
  return std::max(1, static_cast<int>(std::ceil(n)));
}

std::vector<Correspondence> select(std::span<const Correspondence> corrs, const std::vector<bool>& mask) {
  std::vector<Correspondence> out;
  for (std::size_t i = 0; i < corrs.size(); ++i)
    if (mask[i]) out.push_back(corrs[i]);
  return out;
}

std::size_t countTrue(const std::vector<bool>& mask) {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

// Negative log-likelihood of the errors under a Gaussian-inlier /
// uniform-outlier mixture, with the mixing weight fitted by a few EM steps.
double mixtureCost(const std::vector<double>& errors, double sigma, double outlier_range) {
  const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * sigma);
  const double uniform = 1.0 / outlier_range;
  std::vector<double> inlier_pdf(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    const double e = std::min(errors[i], outlier_range);
    inlier_pdf[i] = norm * std::exp(-0.5 * e * e / (sigma * sigma));
  }
  double gamma = 0.5;
  for (int it = 0; it < 5; ++it) {
    double acc = 0.0;
    for (double p : inlier_pdf) acc += gamma * p / (gamma * p + (1.0 - gamma) * uniform);
    gamma = std::clamp(acc / static_cast<double>(errors.size()), 1e-6, 1.0 - 1e-6);
  }
  double cost = 0.0;
  for (double p : inlier_pdf) cost -= std::log(gamma * p + (1.0 - gamma) * uniform);
  return cost;
}

double dstDiagonal(std::span<const Correspondence> corrs) {
  Vec2 lo = corrs.front().dst, hi = corrs.front().dst;
  for (const auto& c : corrs) {
    lo = lo.cwiseMin(c.dst);
    hi = hi.cwiseMax(c.dst);
  }
  return (hi - lo).norm();
}

}  // namespace

// --- HPoint2 -----------------------------------------------------------------

HPoint2::HPoint2(const Vec3& coords) : h_(coords) {
  if (!(h_.allFinite()) || h_.norm() == 0.0)
    throw Error(ErrorCode::DegenerateGeometry, "homogeneous point must be finite and nonzero");
}

bool HPoint2::isFinite(double tol) const { return std::abs(h_.z()) > tol * h_.norm(); }

Vec2 HPoint2::pixel() const {
  if (!isFinite()) throw Error(ErrorCode::PointAtInfinity, "point has no inhomogeneous form");
  return h_.head<2>() / h_.z();
}

bool HPoint2::sameAs(const HPoint2& other, double angle_tol) const {
  const Vec3 a = h_.normalized(), b = other.h_.normalized();
  return std::atan2(a.cross(b).norm(), std::abs(a.dot(b))) <= angle_tol;
}

// --- Fundamental matrix --------------------------------------------------------

Mat3 normalizeFundamental(const Mat3& m) {
  const double n = m.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw Error(ErrorCode::DegenerateGeometry, "zero or non-finite matrix");
  Mat3 out = m / n;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (std::abs(out(r, c)) > kSignEps) {
        if (out(r, c) < 0.0) out = -out;
        return out;
      }
    }
  }
  return out;
}

FundamentalMatrix FundamentalMatrix::fromMatrix(const Mat3& m) {
  if (!m.allFinite()) throw Error(ErrorCode::DegenerateGeometry, "non-finite fundamental matrix");
  Eigen::JacobiSVD<Mat3> svd(m);
  const Vec3 s = svd.singularValues();
  if (!(s[0] > 0.0) || s[1] <= 1e-12 * s[0])
    throw Error(ErrorCode::DegenerateGeometry, "fundamental matrix has rank < 2");
  return FundamentalMatrix(normalizeFundamental(enforceRankTwo(m)));
}

// --- Rigid motion / intrinsics ---------------------------------------------------

Mat3 orthonormalize(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) = -u.col(2);
    r = u * svd.matrixV().transpose();
  }
  return r;
}

RigidMotion RigidMotion::create(const Mat3& rotation, const Vec3& translation) {
  const double tn = translation.norm();
  if (!(tn > 1e-12) || !translation.allFinite())
    throw Error(ErrorCode::DegenerateGeometry, "translation direction is undefined (zero baseline)");
  const double ortho_err = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!rotation.allFinite() || ortho_err > 1e-6 || std::abs(rotation.determinant() - 1.0) > 1e-6)
    throw Error(ErrorCode::DegenerateGeometry, "matrix is not a rotation");
  return RigidMotion(orthonormalize(rotation), translation / tn);
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << f, 0.0, cx, 0.0, f, cy, 0.0, 0.0, 1.0;
  return k;
}

Mat3 CameraIntrinsics::inverse() const {
  Mat3 k;
  k << 1.0 / f, 0.0, -cx / f, 0.0, 1.0 / f, -cy / f, 0.0, 0.0, 1.0;
  return k;
}

// --- Basic primitives --------------------------------------------------------------

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

Mat3 hartleyNormalization(std::span<const Vec2> points) {
  Vec2 centroid = Vec2::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  double sq = 0.0;
  for (const auto& p : points) sq += (p - centroid).squaredNorm();
  const double rms = std::sqrt(sq / static_cast<double>(points.size()));
  if (!(rms > 1e-12)) throw Error(ErrorCode::DegenerateGeometry, "all points coincide");
  const double s = std::sqrt(2.0) / rms;
  Mat3 t;
  t << s, 0.0, -s * centroid.x(), 0.0, s, -s * centroid.y(), 0.0, 0.0, 1.0;
  return t;
}

Vec2 transfer(const Mat3& H, const Vec2& p) {
  const Vec3 q = H * Vec3(p.x(), p.y(), 1.0);
  return q.head<2>() / q.z();
}

// --- Eight-point and RANSAC ------------------------------------------------------

FundamentalMatrix eightPoint(std::span<const Correspondence> corrs) {
  if (corrs.size() < 8) throw Error(ErrorCode::InsufficientMatches, "eight-point needs at least 8 correspondences");
  std::vector<Vec2> src, dst;
  src.reserve(corrs.size());
  dst.reserve(corrs.size());
  for (const auto& c : corrs) {
    src.push_back(c.src);
    dst.push_back(c.dst);
  }
  const Mat3 t1 = hartleyNormalization(src);
  const Mat3 t2 = hartleyNormalization(dst);

  Eigen::MatrixXd a(static_cast<Eigen::Index>(std::max<std::size_t>(corrs.size(), 9)), 9);
  a.setZero();
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const Vec3 x = t1 * Vec3(src[i].x(), src[i].y(), 1.0);
    const Vec3 xp = t2 * Vec3(dst[i].x(), dst[i].y(), 1.0);
    const auto row = static_cast<Eigen::Index>(i);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) a(row, 3 * r + c) = xp[r] * x[c];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd f = svd.matrixV().col(8);
  Mat3 fn;
  fn << f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8];
  fn = enforceRankTwo(fn);
  return FundamentalMatrix::fromMatrix(t2.transpose() * fn * t1);
}

double sampsonDistance(const Mat3& F, const Correspondence& c) {
  const Vec3 x(c.src.x(), c.src.y(), 1.0);
  const Vec3 xp(c.dst.x(), c.dst.y(), 1.0);
  const Vec3 fx = F * x;
  const Vec3 ftxp = F.transpose() * xp;
  const double terms[4] = {fx.x() * fx.x(), fx.y() * fx.y(), ftxp.x() * ftxp.x(), ftxp.y() * ftxp.y()};
  if (std::all_of(std::begin(terms), std::end(terms), [](double t) { return t < 1e-18; }))
    return std::numeric_limits<double>::infinity();
  const double num = xp.dot(fx);
  return std::abs(num) / std::sqrt(terms[0] + terms[1] + terms[2] + terms[3]);
}

double sampsonDistance(const FundamentalMatrix& F, const Correspondence& c) { return sampsonDistance(F.matrix(), c); }

std::size_t FundamentalFit::inlierCount() const { return countTrue(inliers); }
std::size_t HomographyFit::inlierCount() const { return countTrue(inliers); }

FundamentalFit ransacFundamentalUnchecked(std::span<const Correspondence> corrs, const RansacConfig& cfg) {
  const std::size_t n = corrs.size();
  if (n < 8) throw Error(ErrorCode::InsufficientMatches, "need at least 8 correspondences, got " + std::to_string(n));

  std::mt19937_64 rng(cfg.seed);
  const double sigma = cfg.threshold / 1.96;
  const double range = std::max(dstDiagonal(corrs), 10.0 * cfg.threshold);

  auto inlierMask = [&](const Mat3& F) {
    std::vector<bool> mask(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = sampsonDistance(F, corrs[i]) <= cfg.threshold;
    return mask;
  };

  std::optional<Mat3> best;
  double best_cost = std::numeric_limits<double>::infinity();
  std::size_t best_count = 0;
  int budget = cfg.max_iterations;
  int it = 0;
  std::vector<double> errors(n);
  std::vector<Correspondence> sample(8);
  for (; it < budget; ++it) {
    const auto idx = sampleIndices(rng, n, 8);
    for (std::size_t k = 0; k < 8; ++k) sample[k] = corrs[idx[k]];
    Mat3 F;
    try {
      F = eightPoint(sample).matrix();
    } catch (const Error&) {
      continue;
    }
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      errors[i] = sampsonDistance(F, corrs[i]);
      if (errors[i] <= cfg.threshold) ++count;
    }
    const double cost = mixtureCost(errors, sigma, range);
    if (cost < best_cost) {
      best_cost = cost;
      best = F;
      best_count = count;
      budget = std::min(cfg.max_iterations,
                        requiredIterations(static_cast<double>(best_count) / static_cast<double>(n), 8,
                                           cfg.confidence, cfg.max_iterations));
    }
  }
  if (!best) throw Error(ErrorCode::InsufficientMatches, "no valid eight-point hypothesis");

  std::vector<bool> mask = inlierMask(*best);
  Mat3 F = *best;
  for (int round = 0; round < 10; ++round) {
    if (countTrue(mask) < 8)
      throw Error(ErrorCode::InsufficientMatches, "fewer than 8 inliers (" + std::to_string(countTrue(mask)) + ")");
    const auto inl = select(corrs, mask);
    F = eightPoint(inl).matrix();
    auto next = inlierMask(F);
    if (next == mask) break;
    mask = std::move(next);
  }
  mask = inlierMask(F);
  if (countTrue(mask) < 8)
    throw Error(ErrorCode::InsufficientMatches, "fewer than 8 inliers (" + std::to_string(countTrue(mask)) + ")");
  return FundamentalFit{FundamentalMatrix::fromMatrix(F), std::move(mask), it};
}

FundamentalFit estimateFundamentalRansac(std::span<const Correspondence> corrs, const RansacConfig& cfg) {
  auto fit = ransacFundamentalUnchecked(corrs, cfg);
  const auto inl = select(corrs, fit.inliers);
  RansacConfig hcfg = cfg;
  hcfg.seed = cfg.seed + 1;
  const auto hfit = estimateHomographyRansac(inl, hcfg);
  const double explained = static_cast<double>(hfit.inlierCount()) / static_cast<double>(inl.size());
  if (explained >= 0.95)
    throw Error(ErrorCode::DegenerateGeometry,
                "a single homography explains " + std::to_string(explained * 100.0) + "% of the inliers");
  return fit;
}

// --- Epipoles and lines -------------------------------------------------------------

EpipolePair epipoles(const Mat3& F) {
  Eigen::JacobiSVD<Mat3> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (!(s[0] > 0.0) || s[1] <= 1e-9 * s[0]) throw Error(ErrorCode::DegenerateGeometry, "rank < 2: epipoles are not unique");
  if (s[2] > 1e-9 * s[0]) throw Error(ErrorCode::DegenerateGeometry, "full-rank matrix has no epipoles");
  return EpipolePair{HPoint2(canonicalSign(svd.matrixV().col(2).normalized())),
                     HPoint2(canonicalSign(svd.matrixU().col(2).normalized()))};
}

EpipolePair epipoles(const FundamentalMatrix& F) { return epipoles(F.matrix()); }

Line2 epipolarLine(const FundamentalMatrix& F, const Vec2& x, EpipolarSide side) {
  const Vec3 h(x.x(), x.y(), 1.0);
  const Vec3 l = side == EpipolarSide::InJFromX ? Vec3(F.matrix() * h) : Vec3(F.matrix().transpose() * h);
  const double n = l.head<2>().norm();
  if (!(n > 1e-15)) throw Error(ErrorCode::DegenerateGeometry, "point coincides with the epipole");
  return Line2{l / n};
}

// --- Plane homographies ---------------------------------------------------------------

Mat3 planeInducedHomography(const CameraIntrinsics& K, const CameraIntrinsics& Kp, const Mat3& R, const Vec3& t,
                            const PlaneParams& plane) {
  if (std::abs(plane.d) <= 1e-9) throw Error(ErrorCode::DegeneratePlane, "plane passes through the first camera center");
  return Kp.matrix() * (R - t * plane.n.transpose() / plane.d) * K.inverse();
}

Mat3 planeInducedHomography(const CameraIntrinsics& K, const CameraIntrinsics& Kp, const RigidMotion& motion,
                            const PlaneParams& plane) {
  return planeInducedHomography(K, Kp, motion.rotation(), motion.direction(), plane);
}

RankOnePart rankOneEpipolarPart(const Mat3& H, const Mat3& H_inf, const Vec3& ep) {
  const Vec3 e = ep.normalized();
  const Mat3 diff = H - H_inf;
  const Vec3 m = diff.transpose() * e;
  const double residual = (diff - e * m.transpose()).norm();
  if (residual > 1e-3 * H.norm())
    throw Error(ErrorCode::ScaleMismatch, "H - H_inf is not rank one along e' (residual " + std::to_string(residual) + ")");
  return RankOnePart{m, residual};
}

// --- Homographies -----------------------------------------------------------------------

Mat3 homographyDlt(std::span<const Correspondence> corrs) {
  if (corrs.size() < 4) throw Error(ErrorCode::InsufficientMatches, "homography needs at least 4 correspondences");
  std::vector<Vec2> src, dst;
  for (const auto& c : corrs) {
    src.push_back(c.src);
    dst.push_back(c.dst);
  }
  const Mat3 t1 = hartleyNormalization(src);
  const Mat3 t2 = hartleyNormalization(dst);
  Eigen::MatrixXd a(static_cast<Eigen::Index>(std::max<std::size_t>(2 * corrs.size(), 9)), 9);
  a.setZero();
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const Vec3 x = t1 * Vec3(src[i].x(), src[i].y(), 1.0);
    const Vec3 xp = t2 * Vec3(dst[i].x(), dst[i].y(), 1.0);
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.block<1, 3>(r, 3) = -xp.z() * x.transpose();
    a.block<1, 3>(r, 6) = xp.y() * x.transpose();
    a.block<1, 3>(r + 1, 0) = xp.z() * x.transpose();
    a.block<1, 3>(r + 1, 6) = -xp.x() * x.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8];
  const Mat3 H = t2.inverse() * hn * t1;
  if (!H.allFinite() || std::abs(H.determinant()) < 1e-15 * std::pow(H.norm(), 3))
    throw Error(ErrorCode::DegenerateGeometry, "degenerate homography sample");
  return H / H.norm();
}

double transferError(const Mat3& H, const Correspondence& c) {
  const Vec3 q = H * Vec3(c.src.x(), c.src.y(), 1.0);
  if (std::abs(q.z()) < 1e-15) return std::numeric_limits<double>::infinity();
  return (q.head<2>() / q.z() - c.dst).norm();
}

HomographyFit estimateHomographyRansac(std::span<const Correspondence> corrs, const RansacConfig& cfg) {
  const std::size_t n = corrs.size();
  if (n < 4) throw Error(ErrorCode::InsufficientMatches, "homography needs at least 4 correspondences");
  std::mt19937_64 rng(cfg.seed);
  auto score = [&](const Mat3& H, std::vector<bool>* mask) {
    std::size_t count = 0;
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = transferError(H, corrs[i]);
      const bool in = e < cfg.threshold;
      if (mask) (*mask)[i] = in;
      count += in ? 1 : 0;
      err += in ? e * e : cfg.threshold * cfg.threshold;
    }
    return std::pair{count, err};
  };

  std::optional<Mat3> best;
  std::size_t best_count = 0;
  double best_err = std::numeric_limits<double>::infinity();
  int budget = cfg.max_iterations;
  int it = 0;
  std::vector<Correspondence> sample(4);
  for (; it < budget; ++it) {
    const auto idx = sampleIndices(rng, n, 4);
    for (std::size_t k = 0; k < 4; ++k) sample[k] = corrs[idx[k]];
    Mat3 H;
    try {
      H = homographyDlt(sample);
    } catch (const Error&) {
      continue;
    }
    const auto [count, err] = score(H, nullptr);
    if (count > best_count || (count == best_count && err < best_err)) {
      best = H;
      best_count = count;
      best_err = err;
      budget = requiredIterations(static_cast<double>(count) / static_cast<double>(n), 4, cfg.confidence,
                                  cfg.max_iterations);
    }
  }
  if (!best) throw Error(ErrorCode::InsufficientMatches, "no valid homography hypothesis");

  std::vector<bool> mask(n);
  score(*best, &mask);
  Mat3 H = *best;
  for (int round = 0; round < 10 && countTrue(mask) >= 4; ++round) {
    Mat3 refit;
    try {
      refit = homographyDlt(select(corrs, mask));
    } catch (const Error&) {
      break;
    }
    std::vector<bool> next(n);
    const auto [count, err] = score(refit, &next);
    if (count < countTrue(mask)) break;
    H = refit;
    if (next == mask) break;
    mask = std::move(next);
  }
  score(H, &mask);
  return HomographyFit{H, std::move(mask), it};
}

}  // namespace epistitch
