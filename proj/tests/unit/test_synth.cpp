#include <doctest.h>

#include <cmath>

#include "epistitch/error.hpp"
#include "epistitch/synth.hpp"
#include "fixtures.hpp"

using namespace epistitch;
using namespace fixtures;

TEST_SUITE("synth") {
  TEST_CASE("translation rig ground truth") {
    const CameraIntrinsics I{1.0, 0.0, 0.0};
    const GroundTruth gt = groundTruthGeometry(I, I, Mat3::Identity(), Vec3(1, 0, 0));
    Mat3 expected;
    expected << 0, 0, 0, 0, 0, -1, 0, 1, 0;
    CHECK(minSignDiff(gt.fundamental().matrix(), expected) <= 1e-15);
    CHECK((gt.H_inf - Mat3::Identity()).norm() <= 1e-15);
    CHECK_FALSE(gt.degenerate);
  }

  TEST_CASE("generated correspondences satisfy the epipolar constraint") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      SceneSpec s = genericRig(seed);
      s.plane_points = 100;
      s.planes = roomCorner();
      const ScenePair p = makeScenePair(s);
      const Mat3& F = p.truth.fundamental().matrix();
      for (const auto& c : p.corrs)
        CHECK(std::abs(Vec3(c.dst.x(), c.dst.y(), 1).dot(F * Vec3(c.src.x(), c.src.y(), 1))) <= 1e-10);
    }
  }

  TEST_CASE("pure rotation is flagged degenerate") {
    SceneSpec s = rotationSpec(3, false);
    const GroundTruth gt = groundTruthGeometry(s.K, s.Kp, s.R, s.t);
    CHECK(gt.degenerate);
    CHECK_FALSE(gt.F.has_value());
    CHECK((gt.H_inf - s.Kp.matrix() * s.R * s.K.inverse()).norm() <= 1e-12);
    try {
      (void)gt.fundamental();
      FAIL("expected DegenerateGeometry");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DegenerateGeometry);
    }
    const ScenePair p = makeScenePair(s);
    for (const auto& c : p.corrs) CHECK((transfer(p.truth.H_inf, c.src) - c.dst).norm() <= 1e-9);
  }

  TEST_CASE("determinism") {
    SceneSpec s = parallaxSpec(12);
    s.noise_sigma = 0.7;
    s.outlier_fraction = 0.1;
    const ScenePair a = makeScenePair(s);
    const ScenePair b = makeScenePair(s);
    CHECK(a.ref == b.ref);
    CHECK(a.tgt == b.tgt);
    REQUIRE(a.corrs.size() == b.corrs.size());
    for (std::size_t i = 0; i < a.corrs.size(); ++i) {
      CHECK(a.corrs[i].src == b.corrs[i].src);
      CHECK(a.corrs[i].dst == b.corrs[i].dst);
    }
    CHECK(a.is_inlier == b.is_inlier);
    s.seed = 13;
    const ScenePair c = makeScenePair(s);
    CHECK(c.corrs[0].src != a.corrs[0].src);
  }

  TEST_CASE("plane points transfer by their plane homography") {
    const SceneSpec s = parallaxSpec(2, false);
    const ScenePair p = makeScenePair(s);
    REQUIRE(p.truth.plane_homographies.size() == 2);
    int seen[2] = {0, 0};
    for (std::size_t i = 0; i < p.corrs.size(); ++i) {
      const int k = p.plane_index[i];
      REQUIRE(k >= 0);
      ++seen[k];
      CHECK((transfer(p.truth.plane_homographies[static_cast<std::size_t>(k)], p.corrs[i].src) - p.corrs[i].dst).norm() <= 1e-6);
      const auto g = groundTruthTransfer(s, p.corrs[i].src);
      REQUIRE(g.has_value());
      CHECK((*g - p.corrs[i].dst).norm() <= 1e-6);
    }
    CHECK(seen[0] > 0);
    CHECK(seen[1] > 0);
  }

  TEST_CASE("the infinite homography transfers distant points") {
    SceneSpec s = parallaxSpec(3, false);
    s.planes = {PlaneParams{Vec3(0, 0, 1), -1e6}};
    const ScenePair p = makeScenePair(s);
    for (const auto& c : p.corrs) CHECK((transfer(p.truth.H_inf, c.src) - c.dst).norm() <= 1e-2);
  }

  TEST_CASE("the two-wall scene has parallax along epipolar lines") {
    const ScenePair p = makeScenePair(parallaxSpec(4, false));
    const Vec3 ep = p.truth.epipoles->ep.coords();
    double gmax = 0.0;
    for (const auto& c : p.corrs) {
      const Vec2 xi = transfer(p.truth.H_inf, c.src);
      gmax = std::max(gmax, (c.dst - xi).norm());
      const Vec3 a(xi.x(), xi.y(), 1.0), b(c.dst.x(), c.dst.y(), 1.0);
      CHECK(std::abs(a.cross(b).normalized().dot(ep.normalized())) <= 1e-9);
    }
    CHECK(gmax > 2.0);
  }

  TEST_CASE("noise and outliers") {
    SceneSpec s = parallaxSpec(5, false);
    s.noise_sigma = 1.0;
    s.outlier_fraction = 0.25;
    const ScenePair p = makeScenePair(s);
    int outliers = 0;
    double sq = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < p.corrs.size(); ++i) {
      CHECK(p.corrs[i].src.x() >= -0.5);
      CHECK(p.corrs[i].src.x() <= s.width - 0.5);
      if (!p.is_inlier[i]) {
        ++outliers;
        continue;
      }
      sq += (p.corrs[i].dst - p.clean[i].dst).squaredNorm();
      ++n;
    }
    CHECK(outliers == doctest::Approx(0.25 * p.corrs.size()).epsilon(0.05));
    CHECK(std::sqrt(sq / (2.0 * n)) == doctest::Approx(1.0).epsilon(0.15));
  }

  TEST_CASE("rendered images") {
    const ScenePair p = makeScenePair(parallaxSpec(6));
    CHECK(p.ref.width() == 640);
    CHECK(p.ref.height() == 480);
    CHECK(p.ref.channels() == 3);
    CHECK(p.ref.mask().count() == 640u * 480u);
    SceneSpec g = parallaxSpec(6);
    g.channels = 1;
    g.width = 320;
    g.height = 240;
    g.K = g.Kp = CameraIntrinsics{400, 160, 120};
    const ScenePair q = makeScenePair(g);
    CHECK(q.tgt.channels() == 1);
    CHECK(q.tgt.width() == 320);
  }

  TEST_CASE("invalid specs") {
    SceneSpec s = parallaxSpec(1, false);
    s.width = 0;
    CHECK_THROWS_AS(makeScenePair(s), Error);
    s = parallaxSpec(1, false);
    s.planes = {PlaneParams{Vec3(0, 0, 1), 5.0}};  // plane behind both cameras
    try {
      (void)makeScenePair(s);
      FAIL("expected InvalidSpec");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidSpec);
    }
    s = parallaxSpec(1, false);
    s.outlier_fraction = 1.5;
    CHECK_THROWS_AS(makeScenePair(s), Error);
  }
}
