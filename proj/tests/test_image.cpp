#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fdmo/image.h"
#include "fdmo/rng.h"
#include "test_util.h"

#include <cmath>

using namespace fdmo;

namespace {

PhotometricCalibration identity_calib(int w, int h) {
  PhotometricCalibration c;
  c.vignette = Image(w, h, 1.f);
  c.exposure = 1.0;
  return c;
}

}  // namespace

TEST_CASE("photometric_correct with identity calibration is a pass-through") {
  Image img = test::textured_image(32, 24, 5);
  const Image out = photometric_correct(img, identity_calib(32, 24));
  for (size_t i = 0; i < img.data.size(); ++i) {
    CHECK(out.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));
  }
}

TEST_CASE("photometric_correct divides by the vignette") {
  Image img(16, 16, 0.f);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) img.at(x, y) = float(4 * x + y);  // max 75, x2 stays < 255
  PhotometricCalibration calib = identity_calib(16, 16);
  for (auto& v : calib.vignette.data) v = 0.5f;
  const Image out = photometric_correct(img, calib);
  for (size_t i = 0; i < img.data.size(); ++i) {
    CHECK(out.data[i] == doctest::Approx(2.f * img.data[i]).epsilon(1e-5));
  }
}

TEST_CASE("photometric_correct default calibration needs no vignette") {
  // a loader without calibration files uses the default-constructed
  // calibration, which must behave as identity
  Image img = test::textured_image(20, 20, 6);
  const Image out = photometric_correct(img, PhotometricCalibration{});
  for (size_t i = 0; i < img.data.size(); ++i) {
    CHECK(out.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));
  }
}

TEST_CASE("photometric_correct rejects mismatched dimensions") {
  Image img(16, 16, 10.f);
  PhotometricCalibration calib = identity_calib(8, 8);
  CHECK_THROWS_AS(photometric_correct(img, calib), CalibrationMismatch);
}

TEST_CASE("build_pyramid keeps constant images constant") {
  const PinholeCamera cam(100, 100, 32, 24, 64, 48);
  Image img(64, 48, 77.f);
  const Pyramid pyr = build_pyramid(img, cam, 4);
  REQUIRE(pyr.num_levels() == 4);
  for (const Image& lvl : pyr.levels) {
    for (float v : lvl.data) CHECK(v == doctest::Approx(77.f));
  }
}

TEST_CASE("build_pyramid level dimensions halve") {
  const PinholeCamera cam(300, 300, 320, 240, 640, 480);
  Image img(640, 480, 0.f);
  const Pyramid pyr = build_pyramid(img, cam, 5);
  const int w[] = {640, 320, 160, 80, 40};
  const int h[] = {480, 240, 120, 60, 30};
  for (int l = 0; l < 5; ++l) {
    CHECK(pyr.levels[size_t(l)].width == w[l]);
    CHECK(pyr.levels[size_t(l)].height == h[l]);
    CHECK(pyr.cameras[size_t(l)].fx == doctest::Approx(300.0 / (1 << l)));
    CHECK(pyr.cameras[size_t(l)].cx == doctest::Approx(320.0 / (1 << l)));
  }
}

TEST_CASE("build_pyramid rejects too-small images") {
  const PinholeCamera cam(10, 10, 1, 1, 2, 2);
  Image img(2, 2, 0.f);
  CHECK_THROWS_AS(build_pyramid(img, cam, 3), TooSmall);
}

TEST_CASE("build_pyramid preserves mean intensity on smooth images") {
  const Image img = test::textured_image(128, 96, 7);
  const PinholeCamera cam(100, 100, 64, 48, 128, 96);
  const Pyramid pyr = build_pyramid(img, cam, 4);
  double mean0 = 0;
  for (float v : pyr.levels[0].data) mean0 += v;
  mean0 /= double(pyr.levels[0].data.size());
  for (int l = 1; l < 4; ++l) {
    double m = 0;
    for (float v : pyr.levels[size_t(l)].data) m += v;
    m /= double(pyr.levels[size_t(l)].data.size());
    CHECK(std::abs(m - mean0) < 0.5);
  }
}

TEST_CASE("sample_bilinear returns exact values at integer coordinates") {
  const Image img = test::textured_image(32, 32, 8);
  for (int y = 2; y < 29; y += 5) {
    for (int x = 2; x < 29; x += 5) {
      const IntensityGradient s = sample_bilinear(img, x, y);
      CHECK(s.intensity == doctest::Approx(img.at(x, y)));
    }
  }
}

TEST_CASE("sample_bilinear is exact on a linear ramp") {
  Image img(40, 30);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x) img.at(x, y) = float(x);
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const double u = rng.uniform(1.0, 37.9);
    const double v = rng.uniform(1.0, 27.9);
    const IntensityGradient s = sample_bilinear(img, u, v);
    CHECK(s.intensity == doctest::Approx(u).epsilon(1e-6));
    CHECK(s.gradient.x() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(s.gradient.y() == doctest::Approx(0.0).epsilon(1e-6));
  }
}

TEST_CASE("sample_bilinear is exact on affine images") {
  Image img(40, 30);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x) img.at(x, y) = float(3.0 + 1.5 * x - 0.75 * y);
  Rng rng(10);
  for (int i = 0; i < 50; ++i) {
    const double u = rng.uniform(1.0, 37.9);
    const double v = rng.uniform(1.0, 27.9);
    const IntensityGradient s = sample_bilinear(img, u, v);
    CHECK(s.intensity == doctest::Approx(3.0 + 1.5 * u - 0.75 * v).epsilon(1e-6));
    CHECK(s.gradient.x() == doctest::Approx(1.5).epsilon(1e-6));
    CHECK(s.gradient.y() == doctest::Approx(-0.75).epsilon(1e-6));
  }
}

TEST_CASE("sample_bilinear rejects out-of-domain coordinates") {
  const Image img = test::textured_image(32, 32, 11);
  CHECK_THROWS_AS(sample_bilinear(img, 31.0, 10.0), OutOfBounds);
  CHECK_THROWS_AS(sample_bilinear(img, 30.0, 10.0), OutOfBounds);
  CHECK_THROWS_AS(sample_bilinear(img, 0.5, 10.0), OutOfBounds);
  CHECK_NOTHROW(sample_bilinear(img, 29.9, 10.0));
}

TEST_CASE("select_candidate_points returns nothing on constant images") {
  const PinholeCamera cam(100, 100, 64, 48, 128, 96);
  const Pyramid pyr = build_pyramid(Image(128, 96, 100.f), cam, 3);
  CHECK(select_candidate_points(pyr, 500).empty());
}

TEST_CASE("select_candidate_points concentrates on a step edge") {
  const int w = 128, h = 96;
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = x < 64 ? 20.f : 220.f;
  const PinholeCamera cam(100, 100, 64, 48, w, h);
  const Pyramid pyr = build_pyramid(img, cam, 3);
  const auto pts = select_candidate_points(pyr, 200);
  CHECK(!pts.empty());
  for (const auto& p : pts) {
    // central differences respond at 63 and 64; accept the edge band
    CHECK(std::abs(p.px.x() - 63.5) <= 1.5);
  }
}

TEST_CASE("select_candidate_points hits the target with even spread") {
  const int w = 640, h = 480, target = 2000;
  const Image img = test::textured_image(w, h, 12);
  const PinholeCamera cam(300, 300, 320, 240, w, h);
  const Pyramid pyr = build_pyramid(img, cam, 5);
  const auto pts = select_candidate_points(pyr, target);
  CHECK(int(pts.size()) >= target / 2);
  CHECK(int(pts.size()) <= target);

  const int bx = (w + 31) / 32, by = (h + 31) / 32;
  std::vector<int> counts(size_t(bx) * by, 0);
  for (const auto& p : pts) {
    counts[size_t(int(p.px.y()) / 32) * bx + int(p.px.x()) / 32]++;
  }
  const double fair = double(pts.size()) / double(counts.size());
  for (int c : counts) CHECK(double(c) <= 3.0 * fair + 1.0);
}

TEST_CASE("select_candidate_points is deterministic") {
  const Image img = test::textured_image(160, 120, 13);
  const PinholeCamera cam(100, 100, 80, 60, 160, 120);
  const Pyramid pyr = build_pyramid(img, cam, 3);
  const auto a = select_candidate_points(pyr, 300);
  const auto b = select_candidate_points(pyr, 300);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].px == b[i].px);
    CHECK(a[i].level == b[i].level);
  }
}
