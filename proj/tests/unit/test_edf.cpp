#include <doctest.h>

#include <cmath>
#include <random>

#include "epistitch/edf.hpp"
#include "epistitch/error.hpp"
#include "epistitch/synth.hpp"
#include "fixtures.hpp"

using namespace epistitch;
using namespace fixtures;

namespace {

std::vector<ControlResidual> randomResiduals(int n, std::uint64_t seed, double scale = 3.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 640.0), v(0.0, 480.0), g(-scale, scale);
  std::vector<ControlResidual> out;
  for (int i = 0; i < n; ++i) out.push_back({Vec2(u(rng), v(rng)), Vec2(g(rng), g(rng))});
  return out;
}

// Independent oracle: the plain bordered TPS system per axis, assembled in
// raw pixel coordinates and solved by full-pivot QR.
struct DenseTps {
  std::vector<Vec2> c;
  Eigen::MatrixXd coef;  // (n + 3) x 2

  DenseTps(const std::vector<ControlResidual>& r, double rho) {
    const auto n = static_cast<Eigen::Index>(r.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + 3, n + 3);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n + 3, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      c.push_back(r[static_cast<std::size_t>(i)].center);
      for (Eigen::Index j = 0; j < n; ++j) {
        const double d = (r[static_cast<std::size_t>(i)].center - r[static_cast<std::size_t>(j)].center).norm();
        a(i, j) = d > 0 ? d * d * std::log(d) : 0.0;
      }
      a(i, i) += rho;
      const Vec2 p = r[static_cast<std::size_t>(i)].center;
      a(i, n) = a(n, i) = p.x();
      a(i, n + 1) = a(n + 1, i) = p.y();
      a(i, n + 2) = a(n + 2, i) = 1.0;
      b(i, 0) = r[static_cast<std::size_t>(i)].g.x();
      b(i, 1) = r[static_cast<std::size_t>(i)].g.y();
    }
    coef = a.fullPivHouseholderQr().solve(b);
  }

  Vec2 operator()(const Vec2& p) const {
    const auto n = static_cast<Eigen::Index>(c.size());
    Vec2 out = Vec2::Zero();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = (p - c[static_cast<std::size_t>(i)]).norm();
      const double phi = d > 0 ? d * d * std::log(d) : 0.0;
      out += phi * Vec2(coef(i, 0), coef(i, 1));
    }
    for (int k = 0; k < 2; ++k) out[k] += coef(n, k) * p.x() + coef(n + 1, k) * p.y() + coef(n + 2, k);
    return out;
  }
};

const HPoint2 kEprime(Vec3(8320.0, 240.0, 1.0));

double meanMisfit(const EDFModel& m, const std::vector<ControlResidual>& r) {
  double s = 0.0;
  for (const auto& c : r) s += (m.displacement(c.center) - c.g).norm();
  return s / static_cast<double>(r.size());
}

}  // namespace

TEST_SUITE("edf") {
  TEST_CASE("kernel") {
    CHECK(tpsKernel(0.0) == 0.0);
    CHECK(tpsKernel(1.0) == 0.0);
    CHECK(tpsKernel(std::exp(1.0)) == doctest::Approx(std::exp(2.0)));
  }

  TEST_CASE("residuals") {
    const SceneSpec s = parallaxSpec(1, false);
    const ScenePair p = makeScenePair(s);
    const ResidualSet r = computeResiduals(p.truth.H_inf, p.corrs);
    REQUIRE(r.items.size() == p.corrs.size());
    const Vec3 ep = p.truth.epipoles->ep.coords() / p.truth.epipoles->ep.coords().z();
    for (std::size_t i = 0; i < r.items.size(); ++i) {
      const Correspondence& c = p.corrs[r.source[i]];
      const ControlResidual& it = r.items[i];
      CHECK((it.center + it.g - c.dst).norm() <= 1e-12 * c.dst.norm());
      Eigen::Matrix3d tri;
      tri << it.center.x(), c.dst.x(), ep.x(), it.center.y(), c.dst.y(), ep.y(), 1.0, 1.0, 1.0;
      CHECK(std::abs(tri.determinant()) / 2.0 <= 1e-6);
      const Line2 l = epipolarLine(p.truth.fundamental(), c.src, EpipolarSide::InJFromX);
      CHECK(std::abs(l.signedDistance(it.center)) <= 1e-9);
    }
    CHECK(r.maxNorm() > 2.0);

    // x' = proj(H x) gives a zero residual.
    const Correspondence exact[] = {{Vec2(10, 20), transfer(p.truth.H_inf, Vec2(10, 20))}};
    const ResidualSet z = computeResiduals(p.truth.H_inf, exact);
    CHECK(z.items[0].g.norm() <= 1e-12);

    Mat3 H = Mat3::Identity();
    H(2, 0) = 1.0;
    H(2, 2) = -5.0;
    const Correspondence mixed[] = {{Vec2(5, 3), Vec2(0, 0)}, {Vec2(1, 1), Vec2(0, 0)}};
    const ResidualSet q = computeResiduals(H, mixed);
    CHECK(q.points_at_infinity == 1);
    REQUIRE(q.items.size() == 1);
    CHECK(q.source[0] == 1);
  }

  TEST_CASE("zero residuals give the zero model") {
    std::vector<ControlResidual> r = randomResiduals(12, 1);
    for (auto& c : r) c.g = Vec2::Zero();
    const EDFModel m = fitEdf(r, kEprime, EDFConfig{});
    CHECK(m.w.cwiseAbs().maxCoeff() == 0.0);
    CHECK(m.wprime.cwiseAbs().maxCoeff() == 0.0);
    CHECK(m.m.norm() == 0.0);
    CHECK(m.mprime.norm() == 0.0);
    CHECK(m.displacement(Vec2(100, 100)).norm() == 0.0);
    CHECK(EDFModel{}.displacement(Vec2(3, 4)).norm() == 0.0);
  }

  TEST_CASE("interpolation with rho = 0 matches an independent dense solve") {
    const std::vector<ControlResidual> r = randomResiduals(10, 7);
    EDFConfig cfg;
    cfg.rho = 0.0;
    const EDFModel m = fitEdf(r, kEprime, cfg);
    for (const auto& c : r) CHECK((m.displacement(c.center) - c.g).norm() <= 1e-8);
    const DenseTps oracle(r, 0.0);
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-100.0, 740.0), v(-100.0, 580.0);
    for (int i = 0; i < 50; ++i) {
      const Vec2 p(u(rng), v(rng));
      CHECK((m.displacement(p) - oracle(p)).norm() <= 1e-6);
    }
    CHECK(edfSystemResidual(m, r, cfg.coupling) <= 1e-8);
  }

  TEST_CASE("regularized fit matches the dense solve and keeps the side conditions") {
    const std::vector<ControlResidual> r = randomResiduals(40, 8);
    const EDFConfig cfg;
    const EDFModel m = fitEdf(r, kEprime, cfg);
    const DenseTps oracle(r, cfg.effectiveRho());
    for (const auto& c : r) CHECK((m.displacement(c.center) - oracle(c.center)).norm() <= 1e-6);

    double gmax = 0.0;
    for (const auto& c : r) gmax = std::max(gmax, c.g.norm());
    Vec3 side_u = Vec3::Zero(), side_v = Vec3::Zero();
    for (std::size_t i = 0; i < m.centers.size(); ++i) {
      const Vec3 row(m.centers[i].x(), m.centers[i].y(), 1.0);
      side_u += m.w[static_cast<Eigen::Index>(i)] * row;
      side_v += m.wprime[static_cast<Eigen::Index>(i)] * row;
    }
    CHECK(side_u.cwiseAbs().maxCoeff() <= 1e-8 * gmax);
    CHECK(side_v.cwiseAbs().maxCoeff() <= 1e-8 * gmax);
    CHECK(edfSystemResidual(m, r, cfg.coupling) <= 1e-8);
  }

  TEST_CASE("control misfit grows with rho") {
    SceneSpec s = parallaxSpec(4, false);
    s.noise_sigma = 0.5;
    const ScenePair p = makeScenePair(s);
    const ResidualSet rs = computeResiduals(p.truth.H_inf, p.corrs);
    const HPoint2 ep = p.truth.epipoles->ep;
    double last = -1.0;
    for (double rho : {0.0, 8.0 * std::numbers::pi, 80.0 * std::numbers::pi}) {
      EDFConfig cfg;
      cfg.rho = rho;
      const double mis = meanMisfit(fitEdf(rs.items, ep, cfg), rs.items);
      CHECK(mis > last);
      last = mis;
    }
  }

  TEST_CASE("epipolar adherence at control points") {
    const ScenePair p = makeScenePair(parallaxSpec(5, false));
    const ResidualSet rs = computeResiduals(p.truth.H_inf, p.corrs);
    EDFConfig cfg;
    cfg.rho = 0.0;
    const EDFModel m = fitEdf(rs.items, p.truth.epipoles->ep, cfg);
    for (std::size_t i = 0; i < rs.items.size(); ++i) {
      const Vec2 q = rs.items[i].center + m.displacement(rs.items[i].center);
      const Line2 l = epipolarLine(p.truth.fundamental(), p.corrs[rs.source[i]].src, EpipolarSide::InJFromX);
      CHECK(std::abs(l.signedDistance(q)) <= 1e-6);
    }
  }

  TEST_CASE("RBF-free fields point along the epipole") {
    EDFModel m;
    m.centers = {Vec2(0, 0), Vec2(100, 0), Vec2(0, 100)};
    m.w = m.wprime = Eigen::VectorXd::Zero(3);
    m.m = m.mprime = Vec3(1e-3, -2e-3, 0.4);
    m.eprime = Vec2(3.0, -1.5);
    for (const Vec2& p : {Vec2(0, 0), Vec2(50, 70), Vec2(-300, 1000)}) {
      const Vec2 d = m.displacement(p);
      CHECK(std::abs(d.x() * m.eprime.y() - d.y() * m.eprime.x()) <= 1e-12 * (1.0 + d.norm()));
    }

    // Affine residuals along e' are reproduced by the shared-m variant with
    // vanishing kernel weights.
    const Vec2 dir(8320.0, 240.0);
    std::vector<ControlResidual> r = randomResiduals(15, 3);
    for (auto& c : r) c.g = dir * (1e-7 * c.center.x() - 2e-7 * c.center.y() + 3e-4);
    EDFConfig cfg;
    cfg.coupling = AffineCoupling::SharedEpipolar;
    const EDFModel s = fitEdf(r, kEprime, cfg);
    CHECK(s.w.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(s.wprime.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((s.m - s.mprime).norm() <= 1e-15);
    for (const auto& c : r) CHECK((s.displacement(c.center) - c.g).norm() <= 1e-9);
    CHECK(edfSystemResidual(s, r, cfg.coupling) <= 1e-8);
  }

  TEST_CASE("fit errors") {
    std::vector<ControlResidual> line;
    for (int i = 0; i < 6; ++i) line.push_back({Vec2(10.0 * i, 5.0 * i), Vec2(1, 0)});
    try {
      (void)fitEdf(line, kEprime, EDFConfig{});
      FAIL("expected SingularSystem");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::SingularSystem);
    }
    const std::vector<ControlResidual> two = {{Vec2(0, 0), Vec2(1, 1)}, {Vec2(5, 5), Vec2(1, 1)}};
    CHECK_THROWS_AS(fitEdf(two, kEprime, EDFConfig{}), Error);
    try {
      (void)fitEdf(randomResiduals(10, 2), HPoint2(Vec3(1.0, 0.2, 0.0)), EDFConfig{});
      FAIL("expected EpipoleAtInfinity");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EpipoleAtInfinity);
    }

    // Duplicates are merged, not rejected.
    std::vector<ControlResidual> dup = randomResiduals(6, 4);
    dup.push_back({dup[0].center, dup[0].g + Vec2(2.0, 0.0)});
    EDFConfig cfg;
    cfg.rho = 0.0;
    const EDFModel m = fitEdf(dup, kEprime, cfg);
    CHECK(m.centers.size() == 6);
    CHECK((m.displacement(dup[0].center) - (dup[0].g + Vec2(1.0, 0.0))).norm() <= 1e-8);
  }

  TEST_CASE("plain TPS fallback interpolates") {
    const std::vector<ControlResidual> r = randomResiduals(10, 11);
    EDFConfig cfg;
    cfg.rho = 0.0;
    const EDFModel m = fitPlainTps(r, cfg);
    for (const auto& c : r) CHECK((m.displacement(c.center) - c.g).norm() <= 1e-8);
  }

  TEST_CASE("fits are deterministic") {
    const std::vector<ControlResidual> r = randomResiduals(30, 12);
    const EDFModel a = fitEdf(r, kEprime, EDFConfig{});
    const EDFModel b = fitEdf(r, kEprime, EDFConfig{});
    CHECK(a.w == b.w);
    CHECK(a.wprime == b.wprime);
    CHECK(a.m == b.m);
    CHECK(a.mprime == b.mprime);
  }

  TEST_CASE("taper weight") {
    CHECK(taperWeight(-1.0, 10.0) == 1.0);
    CHECK(taperWeight(0.0, 10.0) == 1.0);
    CHECK(taperWeight(10.0, 10.0) == 0.0);
    CHECK(taperWeight(25.0, 10.0) == 0.0);
    CHECK(taperWeight(5.0, 10.0) == doctest::Approx(0.5));
    CHECK(taperWeight(1e-9, 10.0) == doctest::Approx(1.0));
    CHECK(taperWeight(10.0 - 1e-9, 10.0) == doctest::Approx(0.0));
    CHECK(taperWeight(1.0, 0.0) == 0.0);
  }

  TEST_CASE("displacement grid") {
    const ScenePair p = makeScenePair(parallaxSpec(6, false));
    const ResidualSet rs = computeResiduals(p.truth.H_inf, p.corrs);
    const EDFConfig cfg;
    const EDFModel m = fitEdf(rs.items, p.truth.epipoles->ep, cfg);
    const Rect ref{0, 0, 639, 479};
    const Rect bbox{-180.5, -60.25, 700.0, 530.0};
    const DisplacementGrid g = buildDisplacementGrid(m, bbox, ref, cfg);
    CHECK(g.anchor(0, 0).x() <= bbox.x0);
    CHECK(g.anchor(0, 0).y() <= bbox.y0);
    CHECK(g.anchor(g.nu - 1, g.nv - 1).x() >= bbox.x1);
    CHECK(g.anchor(g.nu - 1, g.nv - 1).y() >= bbox.y1);

    const double T = cfg.taper_factor * m.max_residual;
    double max_step = 0.0;
    for (int j = 0; j < g.nv; ++j)
      for (int i = 0; i < g.nu; ++i) {
        const Vec2 a = g.anchor(i, j);
        const Vec2 d = g.displacement[g.index(i, j)];
        const double w = g.weight[g.index(i, j)];
        CHECK(d.allFinite());
        if (ref.distanceTo(a) >= T) CHECK(d.norm() == 0.0);
        if (ref.contains(a)) {
          CHECK(w == 1.0);
          CHECK(d == m.displacement(a));
        }
        if (i > 0) max_step = std::max(max_step, std::abs(w - g.weight[g.index(i - 1, j)]));
        if (j > 0) max_step = std::max(max_step, std::abs(w - g.weight[g.index(i, j - 1)]));
      }
    // Smoothstep has peak slope 1.5 / T.
    CHECK(max_step < 1.5 * g.spacing / T);
    CHECK(max_step > 0.0);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(20.0, 620.0), v(20.0, 460.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const Vec2 q(u(rng), v(rng));
      worst = std::max(worst, (g.interpolate(q) - m.displacement(q)).norm());
    }
    CHECK(worst < 0.1);
  }

  TEST_CASE("grid guards") {
    const EDFModel m = fitEdf(randomResiduals(10, 3), kEprime, EDFConfig{});
    const Rect ref{0, 0, 639, 479};
    try {
      (void)buildDisplacementGrid(m, Rect{0, 0, 1e5, 1e5}, ref, EDFConfig{});
      FAIL("expected ExcessiveGrid");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ExcessiveGrid);
    }
    CHECK_THROWS_AS(buildDisplacementGrid(m, Rect{5, 5, 1, 1}, ref, EDFConfig{}), Error);
  }
}
