#include <doctest.h>

#include <cmath>
#include <random>

#include "epistitch/error.hpp"
#include "epistitch/metrics.hpp"
#include "epistitch/stitch.hpp"
#include "epistitch/synth.hpp"
#include "epistitch/warp.hpp"
#include "fixtures.hpp"

using namespace epistitch;
using namespace fixtures;

namespace {

ImageBuffer smoothTexture(int w, int h, int channels = 1) {
  ImageBuffer img(w, h, channels, true);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(x, y, c) = toByte(128.0 + 60.0 * std::sin(x / 17.0 + c) * std::cos(y / 23.0) + 20.0 * std::sin((x + y) / 41.0));
  return img;
}

ImageBuffer noiseTexture(int w, int h, std::uint64_t seed) {
  ImageBuffer img(w, h, 1, true);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, 255);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y, 0) = static_cast<std::uint8_t>(d(rng));
  return img;
}

ImageBuffer constant(int w, int h, std::uint8_t v) {
  ImageBuffer img(w, h, 1, true);
  for (auto& s : img.data()) s = v;
  return img;
}

Mat3 translation(double dx, double dy) {
  Mat3 t = Mat3::Identity();
  t(0, 2) = dx;
  t(1, 2) = dy;
  return t;
}

DisplacementGrid zeroGrid(ImageSize target, const Mat3& H, int cell = 10) {
  EDFConfig cfg;
  cfg.cell_px = cell;
  const Rect ref{0, 0, 639, 479};
  return buildDisplacementGrid(EDFModel{}, warpedBounds(target, H), ref, cfg);
}

Vec2 bilinearForward(const Vec2& st, const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double s = st.x(), t = st.y();
  return a + s * (b - a) + t * (d - a) + s * t * (a - b + c - d);
}

}  // namespace

TEST_SUITE("warp") {
  TEST_CASE("canvas for identity and translation") {
    const ImageSize sz{640, 480};
    const Canvas c = computeCanvas(sz, sz, Mat3::Identity(), zeroGrid(sz, Mat3::Identity()));
    CHECK(c.ox == 0);
    CHECK(c.oy == 0);
    CHECK(c.width == 640);
    CHECK(c.height == 480);

    const Mat3 T = translation(100.0, 0.0);
    const Canvas t = computeCanvas(sz, sz, T, zeroGrid(sz, T));
    CHECK(t.ox == 0);
    CHECK(t.oy == 0);
    CHECK(t.width == 740);
    CHECK(t.height == 480);
  }

  TEST_CASE("corners near the line at infinity are discarded") {
    // Pan so that the right target edge maps to w = 1e-9 after normalization.
    const CameraIntrinsics K{800, 320, 240};
    // Normalized w(u) = (1 - tan(theta) (u - cx) / f) / (1 - tan(theta) (319.5 - cx) / f).
    const double eps = 1e-9;
    const double theta = std::atan(K.f * (1.0 - eps) / ((639.0 - K.cx) - eps * (319.5 - K.cx)));
    CHECK(theta > deg(60.0));
    const ImageSize sz{640, 480};
    const Mat3 H = normalizeBaseHomography(K.matrix() * rotationY(theta) * K.inverse(), sz);
    const Vec3 corner = H * Vec3(639, 0, 1);
    CHECK(corner.z() == doctest::Approx(1e-9).epsilon(1e-3));
    CHECK((H * Vec3(319.5, 239.5, 1)).z() == doctest::Approx(1.0));

    const Rect b = warpedBounds(sz, H);
    CHECK(std::isfinite(b.x0));
    CHECK(std::isfinite(b.x1));
    const Vec2 left_top = transfer(H, Vec2(0, 0)), left_bottom = transfer(H, Vec2(0, 479));
    CHECK(b.x0 == doctest::Approx(std::min(left_top.x(), left_bottom.x())));
    CHECK(b.x1 == doctest::Approx(std::max(left_top.x(), left_bottom.x())));
    const Canvas c = computeCanvas(sz, sz, H, zeroGrid(sz, H));
    CHECK(c.width > 0);
    CHECK(static_cast<double>(c.width) * c.height <= 64.0 * 640 * 480);

    Mat3 all_behind = Mat3::Identity();
    all_behind(2, 2) = -1.0;
    CHECK_THROWS_AS(warpedBounds(sz, all_behind), Error);
  }

  TEST_CASE("canvas cap") {
    const ImageSize sz{640, 480};
    Mat3 S = Mat3::Identity();
    S(0, 0) = S(1, 1) = 20.0;
    try {
      (void)computeCanvas(sz, sz, S, zeroGrid(sz, S, 40));
      FAIL("expected ExcessiveCanvas");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ExcessiveCanvas);
    }
  }

  TEST_CASE("inverse bilinear recovers the quad parameters") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> jitter(-3.0, 3.0), unit(0.0, 1.0);
    int tested = 0;
    for (int k = 0; k < 200; ++k) {
      const Vec2 a(jitter(rng), jitter(rng)), b(10 + jitter(rng), jitter(rng)), c(10 + jitter(rng), 10 + jitter(rng)),
          d(jitter(rng), 10 + jitter(rng));
      const Vec2 st(unit(rng), unit(rng));
      const Vec2 q = bilinearForward(st, a, b, c, d);
      const auto r = inverseBilinear(q, a, b, c, d);
      REQUIRE(r.has_value());
      CHECK((*r - st).norm() <= 1e-9);
      CHECK((bilinearForward(*r, a, b, c, d) - q).norm() <= 1e-9);
      ++tested;
    }
    CHECK(tested == 200);
    // Parallelogram (linear case) and a point outside.
    const auto lin = inverseBilinear(Vec2(6, 2), Vec2(0, 0), Vec2(10, 0), Vec2(14, 4), Vec2(4, 4));
    REQUIRE(lin.has_value());
    CHECK((*lin - Vec2(0.4, 0.5)).norm() <= 1e-12);
    CHECK_FALSE(inverseBilinear(Vec2(20, 20), Vec2(0, 0), Vec2(10, 0), Vec2(10, 10), Vec2(0, 10)).has_value());
  }

  TEST_CASE("identity warp reproduces the target") {
    const ImageBuffer tgt = noiseTexture(640, 480, 3);
    const ImageSize sz{640, 480};
    const DisplacementGrid g = zeroGrid(sz, Mat3::Identity());
    const Canvas c = computeCanvas(sz, sz, Mat3::Identity(), g);
    const WarpOutput out = backwardWarp(tgt, buildWarpMesh(g, Mat3::Identity()), Mat3::Identity(), c);
    CHECK(out.image.mask().count() == 640u * 480u);
    CHECK(out.image == tgt);
    CHECK(out.invalid_quads == 0);
    CHECK(out.inversion_failures == 0);
  }

  TEST_CASE("integer translation is exact") {
    const ImageBuffer tgt = noiseTexture(640, 480, 4);
    const ImageSize sz{640, 480};
    const Mat3 T = translation(37.0, -12.0);
    const DisplacementGrid g = zeroGrid(sz, T);
    const Canvas c = computeCanvas(sz, sz, T, g);
    const WarpOutput out = backwardWarp(tgt, buildWarpMesh(g, T), T, c);
    int diff = 0;
    std::size_t covered = 0;
    for (int y = 0; y < c.height; ++y)
      for (int x = 0; x < c.width; ++x) {
        const Vec2 r = c.toReference(Vec2(x, y)) - Vec2(37.0, -12.0);
        const bool inside = r.x() >= 0 && r.y() >= 0 && r.x() <= 639 && r.y() <= 479;
        CHECK(out.image.valid(x, y) == inside);
        if (!inside) continue;
        ++covered;
        diff = std::max(diff, std::abs(out.image.at(x, y, 0) - tgt.at(static_cast<int>(r.x()), static_cast<int>(r.y()), 0)));
      }
    CHECK(diff == 0);
    CHECK(covered == 640u * 480u);
    CHECK(out.covered_pixels == covered);
  }

  TEST_CASE("homography round trip on a smooth texture") {
    const ImageBuffer tgt = smoothTexture(640, 480);
    const ImageSize sz{640, 480};
    const SceneSpec s = singlePlaneSpec(2, false);
    const Mat3 H = normalizeBaseHomography(groundTruthGeometry(s.K, s.Kp, s.R, s.t, s.planes).plane_homographies[0], sz);
    const DisplacementGrid g = zeroGrid(sz, H);
    const Canvas c = computeCanvas(sz, sz, H, g);
    const WarpOutput fwd = backwardWarp(tgt, buildWarpMesh(g, H), H, c);

    // Map back: canvas pixel -> reference frame -> target.
    const Mat3 back = H.inverse() * translation(c.ox, c.oy);
    const ImageSize csz{c.width, c.height};
    EDFConfig cfg;
    const DisplacementGrid g2 = buildDisplacementGrid(EDFModel{}, warpedBounds(csz, back), Rect{0, 0, 639, 479}, cfg);
    const Canvas c2{0, 0, 640, 480};
    const WarpOutput rt = backwardWarp(fwd.image, buildWarpMesh(g2, back), back, c2);

    int worst = 0;
    std::size_t compared = 0;
    for (int y = 20; y < 460; ++y)
      for (int x = 20; x < 620; ++x) {
        if (!rt.image.valid(x, y)) continue;
        ++compared;
        worst = std::max(worst, std::abs(rt.image.at(x, y, 0) - tgt.at(x, y, 0)));
      }
    CHECK(compared > 100000u);
    CHECK(worst <= 2);
  }

  TEST_CASE("folded quads are rejected") {
    const ImageSize sz{640, 480};
    DisplacementGrid g = zeroGrid(sz, Mat3::Identity());
    // Pull anchor (5, 5) back across its upper-left quad.
    g.displacement[g.index(5, 5)] = Vec2(-25.0, -25.0);
    const WarpMesh mesh = buildWarpMesh(g, Mat3::Identity());
    CHECK_FALSE(mesh.quad_valid[mesh.quadIndex(4, 4)]);
    CHECK(mesh.quad_valid[mesh.quadIndex(10, 10)]);
    const WarpOutput out = backwardWarp(noiseTexture(640, 480, 1), mesh, Mat3::Identity(), Canvas{0, 0, 640, 480});
    CHECK(out.invalid_quads >= 1);
    CHECK(out.image.mask().count() < 640u * 480u);
  }

  TEST_CASE("warped pixels come from inside the target") {
    const ImageBuffer tgt = smoothTexture(640, 480);
    const ImageSize sz{640, 480};
    const SceneSpec s = parallaxSpec(1, false);
    const Mat3 H = normalizeBaseHomography(groundTruthGeometry(s.K, s.Kp, s.R, s.t).H_inf, sz);
    const DisplacementGrid g = zeroGrid(sz, H);
    const Canvas c = computeCanvas(sz, sz, H, g);
    const WarpOutput out = backwardWarp(tgt, buildWarpMesh(g, H), H, c);
    const Mat3 hinv = H.inverse();
    for (int y = 0; y < c.height; y += 3)
      for (int x = 0; x < c.width; x += 3) {
        if (!out.image.valid(x, y)) continue;
        const Vec2 src = transfer(hinv, c.toReference(Vec2(x, y)));
        CHECK(src.x() >= -1e-6);
        CHECK(src.y() >= -1e-6);
        CHECK(src.x() <= 639.0 + 1e-6);
        CHECK(src.y() <= 479.0 + 1e-6);
      }
  }

  TEST_CASE("feather weights") {
    const Mask m(5, 5, true);
    const auto w = featherWeights(m);
    CHECK(w[0] == 1.0);
    CHECK(w[2 * 5 + 2] == 3.0);
    CHECK(w[1 * 5 + 2] == 2.0);
    Mask hole(5, 5, true);
    hole.set(2, 2, false);
    const auto h = featherWeights(hole);
    CHECK(h[2 * 5 + 2] == 0.0);
    CHECK(h[1 * 5 + 2] == 1.0);
  }

  TEST_CASE("linear blend") {
    SUBCASE("disjoint masks") {
      ImageBuffer a = constant(100, 40, 50), b = constant(100, 40, 200);
      for (int y = 0; y < 40; ++y)
        for (int x = 0; x < 100; ++x) {
          a.mask().set(x, y, x < 50);
          b.mask().set(x, y, x >= 50);
        }
      const BlendOutput o = linearBlend(a, b);
      CHECK(o.empty_overlap);
      for (int y = 0; y < 40; ++y)
        for (int x = 0; x < 100; ++x) CHECK(o.image.at(x, y, 0) == (x < 50 ? 50 : 200));
      CHECK(o.image.mask() == (a.mask() | b.mask()));
    }
    SUBCASE("identical values") {
      ImageBuffer a = constant(60, 60, 77), b = constant(60, 60, 77);
      for (int y = 0; y < 60; ++y)
        for (int x = 0; x < 60; ++x) b.mask().set(x, y, x + y > 30);
      const BlendOutput o = linearBlend(a, b);
      CHECK_FALSE(o.empty_overlap);
      for (int y = 0; y < 60; ++y)
        for (int x = 0; x < 60; ++x) CHECK(o.image.at(x, y, 0) == 77);
    }
    SUBCASE("symmetric overlap") {
      ImageBuffer a = constant(300, 201, 100), b = constant(300, 201, 200);
      for (int y = 0; y < 201; ++y)
        for (int x = 0; x < 300; ++x) {
          a.mask().set(x, y, x < 200);
          b.mask().set(x, y, x >= 100);
        }
      const BlendOutput o = linearBlend(a, b);
      CHECK(std::abs(o.image.at(149, 100, 0) - 150) <= 1);
      CHECK(std::abs(o.image.at(150, 100, 0) - 150) <= 1);
      for (int x = 100; x < 200; ++x) {
        CHECK(o.image.at(x, 100, 0) >= 100);
        CHECK(o.image.at(x, 100, 0) <= 200);
        if (x > 100) CHECK(o.image.at(x, 100, 0) >= o.image.at(x - 1, 100, 0));
      }
    }
  }
}

TEST_SUITE("stitch") {
  TEST_CASE("parallax pair") {
    const ScenePair p = makeScenePair(parallaxSpec(1));
    const StitchResult r = stitch(p.ref, p.tgt, p.corrs);
    CHECK_FALSE(r.fallback);
    REQUIRE(r.calibration.has_value());
    const Mask ov = overlapMask(r.ref_mask, r.tgt_mask);
    CHECK(ssim(r.ref_layer, r.tgt_layer, ov) > 0.95);
    CHECK(r.diagnostics.at("control_misfit_mean_px") < 0.5);
    CHECK(r.diagnostics.at("objective_final") <= r.diagnostics.at("objective_initial"));
    CHECK(r.panorama.mask() == (r.ref_mask | r.tgt_mask));
    CHECK(r.diagnostics.at("inliers") == doctest::Approx(static_cast<double>(p.corrs.size())));
    // The warp carries matches close to their reference positions.
    double mean = 0.0;
    for (const auto& c : p.corrs) mean += (r.mapTargetPoint(c.src) - c.dst).norm();
    CHECK(mean / static_cast<double>(p.corrs.size()) < 0.5);
  }

  TEST_CASE("pure rotation falls back to a homography") {
    const ScenePair p = makeScenePair(rotationSpec(3));
    const StitchResult r = stitch(p.ref, p.tgt, p.corrs);
    CHECK(r.fallback);
    CHECK(r.diagnostics.at("fallback") == 1.0);
    const Mask ov = overlapMask(r.ref_mask, r.tgt_mask);
    CHECK(ssim(r.ref_layer, r.tgt_layer, ov) > 0.99);
    CHECK(r.panorama.mask() == (r.ref_mask | r.tgt_mask));
  }

  TEST_CASE("too few matches") {
    const ScenePair p = makeScenePair(parallaxSpec(1, false));
    const std::vector<Correspondence> seven(p.corrs.begin(), p.corrs.begin() + 7);
    try {
      (void)stitch(constant(640, 480, 0), constant(640, 480, 0), seven);
      FAIL("expected InsufficientMatches");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InsufficientMatches);
    }
  }

  TEST_CASE("stitching is deterministic") {
    const ScenePair p = makeScenePair(parallaxSpec(8));
    const StitchResult a = stitch(p.ref, p.tgt, p.corrs);
    const StitchResult b = stitch(p.ref, p.tgt, p.corrs);
    CHECK(a.panorama == b.panorama);
    CHECK(a.base_homography == b.base_homography);
  }
}
