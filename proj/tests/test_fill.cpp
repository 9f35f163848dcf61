#include <doctest.h>

#include <cmath>
#include <limits>

#include "priority_oracle.hpp"
#include "structfill/fill.hpp"
#include "support.hpp"

using namespace structfill;
using namespace structfill::fill;
using namespace testing_support;
using imagery::Canvas;

namespace {

double lab_ssd(const Canvas& c, Pixel p, Pixel s, int l) {
  const int half = l / 2;
  double ssd = 0;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx) {
      if (!c.mask.known(p.x + dx, p.y + dy)) continue;
      const auto a = imagery::srgb_to_lab(c.image.at(p.x + dx, p.y + dy, 0), c.image.at(p.x + dx, p.y + dy, 1),
                                          c.image.at(p.x + dx, p.y + dy, 2));
      const auto b = imagery::srgb_to_lab(c.image.at(s.x + dx, s.y + dy, 0), c.image.at(s.x + dx, s.y + dy, 1),
                                          c.image.at(s.x + dx, s.y + dy, 2));
      for (int k = 0; k < 3; ++k) {
        const double d = static_cast<float>(a[k]) - static_cast<float>(b[k]);
        ssd += d * d;
      }
    }
  return ssd;
}

bool window_known(const MaskRegion& m, Pixel s, int l) {
  const int half = l / 2;
  for (int dy = -half; dy <= half; ++dy)
    for (int dx = -half; dx <= half; ++dx)
      if (!m.known(s.x + dx, s.y + dy)) return false;
  return true;
}

}  // namespace

TEST_SUITE("fill") {

TEST_CASE("confidence term") {
  const MaskRegion m = rect_mask(20, 20, 10, 0, 19, 19);
  Canvas c = Canvas::start(flat_image(20, 20, 50), m);
  CHECK(confidence(c.confidence, {4, 10}, 5, c.mask) == 1.0);
  CHECK(confidence(c.confidence, {15, 10}, 5, c.mask) == 0.0);
  // Two of five columns known.
  CHECK(confidence(c.confidence, {10, 10}, 5, c.mask) == doctest::Approx(10.0 / 25.0));
  for (auto& v : c.confidence.data()) v = v > 0 ? 0.5f : 0.0f;
  CHECK(confidence(c.confidence, {4, 10}, 5, c.mask) == doctest::Approx(0.5));
  // Off-image pixels are not known.
  Canvas d = Canvas::start(flat_image(20, 20, 50), m);
  CHECK(confidence(d.confidence, {0, 0}, 5, d.mask) == doctest::Approx(9.0 / 25.0));
}

TEST_CASE("data term and priority") {
  CHECK(data_term({0, 1}, {1, 0}) == 0.0);
  CHECK(data_term({255, 0}, {1, 0}) == doctest::Approx(1.0));
  CHECK(data_term({-255, 0}, {1, 0}) == doctest::Approx(1.0));
  CHECK(priority(0.0, 0.9) == 0.0);
  CHECK(priority(1.0, 0.4) == doctest::Approx(0.4));
  const Canvas flat = Canvas::start(flat_image(20, 20, 90), rect_mask(20, 20, 8, 8, 12, 12));
  for (const auto& f : compute_front(flat, 5)) {
    CHECK(f.data == 0.0);
    CHECK(f.priority == 0.0);
  }
}

TEST_CASE("front normal points into the hole") {
  const MaskRegion m = rect_mask(20, 20, 10, 0, 19, 19);
  const Vec2 n = front_normal(m, {10, 10});
  CHECK(n.x == doctest::Approx(1.0));
  CHECK(n.y == doctest::Approx(0.0));
  MaskRegion single(9, 9);
  single.set(4, 4, true);
  const Vec2 s = front_normal(single, {4, 4});
  CHECK(s.norm() == doctest::Approx(1.0));
}

TEST_CASE("isophote of a ramp") {
  RasterImage img(20, 20, 3);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) paint(img, x, y, static_cast<std::uint8_t>(3 * x + 5 * y));
  const MaskRegion m = rect_mask(20, 20, 10, 8, 14, 12);
  const Vec2 iso = isophote(img, m, {10, 10}, 5);
  CHECK(iso.x == doctest::Approx(-5.0));
  CHECK(iso.y == doctest::Approx(3.0));
}

TEST_CASE("front order matches the priority oracle") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    RasterImage img = noise_image(40, 40, seed);
    // Smooth the noise a little so gradients vary gently.
    RasterImage smooth = img;
    for (int y = 1; y < 39; ++y)
      for (int x = 1; x < 39; ++x)
        for (int c = 0; c < 3; ++c) {
          int s = 0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) s += img.at(x + dx, y + dy, c);
          smooth.at(x, y, c) = static_cast<std::uint8_t>(s / 9);
        }
    const MaskRegion m = seed % 2 ? rect_mask(40, 40, 15, 14, 21, 19) : disk_mask(40, 40, 20, 20, 4);
    Canvas canvas = Canvas::start(smooth, m);
    FillParams p;
    p.patch = 5;
    const FillResult r = fill_remaining(canvas, p);
    PriorityOracle oracle(smooth, m, 5);
    Canvas replay = Canvas::start(smooth, m);
    for (int k = 0; k < r.iterations; ++k) {
      const auto pick = oracle.pick();
      CHECK(pick.p == r.order[k]);
      CHECK(pick.c == doctest::Approx(r.step_confidence[k]).epsilon(1e-12));
      // The chosen exemplar is a minimum-SSD window among those fully known at the start.
      const double chosen = lab_ssd(replay, r.order[k], r.sources[k], 5);
      double best = std::numeric_limits<double>::infinity();
      for (int y = 2; y < 38; ++y)
        for (int x = 2; x < 38; ++x)
          if (window_known(m, {x, y}, 5)) best = std::min(best, lab_ssd(replay, r.order[k], {x, y}, 5));
      CHECK(chosen <= best + 1e-6 * std::max(1.0, best));
      oracle.apply(r.order[k], r.sources[k], r.step_confidence[k]);
      const int half = 2;
      for (int dy = -half; dy <= half; ++dy)
        for (int dx = -half; dx <= half; ++dx) {
          const int x = r.order[k].x + dx, y = r.order[k].y + dy;
          if (!replay.mask.in_bounds(x, y) || !replay.mask.target(x, y)) continue;
          for (int c = 0; c < 3; ++c) replay.image.at(x, y, c) = replay.image.at(r.sources[k].x + dx, r.sources[k].y + dy, c);
          replay.mask.set(x, y, false);
        }
    }
    CHECK(oracle.done());
    CHECK(oracle.image() == canvas.image);
  }
}

TEST_CASE("exemplar search") {
  SUBCASE("exact copy of the context") {
    RasterImage img = noise_image(40, 40, 77);
    // Context around (25,20) is copied from around (8,9).
    for (int dy = -3; dy <= 3; ++dy)
      for (int dx = -3; dx <= 3; ++dx)
        for (int c = 0; c < 3; ++c) img.at(25 + dx, 20 + dy, c) = img.at(8 + dx, 9 + dy, c);
    const MaskRegion m = rect_mask(40, 40, 25, 15, 32, 25);
    const Canvas canvas = Canvas::start(img, m);
    CHECK(best_exemplar(canvas, {25, 20}, 7) == Pixel{8, 9});
  }
  SUBCASE("periodic texture") {
    RasterImage img(60, 60, 3);
    for (int y = 0; y < 60; ++y)
      for (int x = 0; x < 60; ++x) {
        const int v = ((x % 7) * 31 + (y % 5) * 47) % 256;
        img.at(x, y, 0) = static_cast<std::uint8_t>(v);
        img.at(x, y, 1) = static_cast<std::uint8_t>((v * 3) % 256);
        img.at(x, y, 2) = static_cast<std::uint8_t>(255 - v);
      }
    const MaskRegion m = rect_mask(60, 60, 30, 30, 40, 40);
    const Canvas canvas = Canvas::start(img, m);
    const Pixel p{30, 33};
    const Pixel s = best_exemplar(canvas, p, 9);
    CHECK((s.x - p.x) % 7 == 0);
    CHECK((s.y - p.y) % 5 == 0);
  }
  SUBCASE("band mode stays near the front") {
    const RasterImage img = noise_image(200, 120, 5);
    const MaskRegion m = rect_mask(200, 120, 20, 50, 30, 60);
    const Canvas canvas = Canvas::start(img, m);
    const Pixel s = best_exemplar(canvas, {20, 55}, 5, SearchMode::Band);
    const int dx = std::max({20 - s.x, s.x - 30, 0}) - 1, dy = std::max({50 - s.y, s.y - 60, 0}) - 1;
    CHECK(std::max(dx, dy) <= 30);
    ExemplarSearch band(canvas, canvas.mask, 5, SearchMode::Band), full(canvas, canvas.mask, 5, SearchMode::Full);
    CHECK(band.source_count() < full.source_count());
  }
}

TEST_CASE("fill_remaining") {
  SUBCASE("empty mask") {
    const RasterImage img = noise_image(20, 20, 1);
    Canvas c = Canvas::start(img, MaskRegion(20, 20));
    const FillResult r = fill_remaining(c, FillParams{});
    CHECK(r.iterations == 0);
    CHECK(c.image == img);
  }
  SUBCASE("single pixel") {
    const RasterImage img = noise_image(30, 30, 2);
    MaskRegion m(30, 30);
    m.set(15, 15, true);
    Canvas c = Canvas::start(img, m);
    const FillResult r = fill_remaining(c, FillParams{});
    REQUIRE(r.iterations == 1);
    for (int ch = 0; ch < 3; ++ch) CHECK(c.image.at(15, 15, ch) == img.at(r.sources[0].x, r.sources[0].y, ch));
    CHECK(r.sources[0] == best_exemplar(Canvas::start(img, m), {15, 15}, 9));
  }
  SUBCASE("flat image") {
    const RasterImage img = flat_image(64, 64, 137);
    Canvas c = Canvas::start(img, rect_mask(64, 64, 24, 24, 39, 39));
    fill_remaining(c, FillParams{});
    CHECK(c.image == img);
  }
  SUBCASE("progress, source immutability and written confidences") {
    const RasterImage img = noise_image(48, 48, 3);
    const MaskRegion m = disk_mask(48, 48, 24, 22, 7);
    Canvas c = Canvas::start(img, m);
    FillParams p;
    p.patch = 7;
    p.snapshot_every = 1;
    std::vector<std::size_t> remaining;
    std::vector<MaskRegion> masks{m};
    std::vector<Grid<float>> confs;
    const FillResult r = fill_remaining(c, p, [&](int, const Canvas& cv) {
      remaining.push_back(cv.mask.count());
      masks.push_back(cv.mask);
      confs.push_back(cv.confidence);
    });
    CHECK(static_cast<std::size_t>(r.iterations) <= m.count());
    REQUIRE(remaining.size() == static_cast<std::size_t>(r.iterations));
    std::size_t prev = m.count();
    for (const std::size_t n : remaining) {
      CHECK(n < prev);
      prev = n;
    }
    CHECK(c.mask.empty());
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 48; ++x)
        if (!m.target(x, y))
          for (int ch = 0; ch < 3; ++ch) CHECK(c.image.at(x, y, ch) == img.at(x, y, ch));
    for (int k = 0; k < r.iterations; ++k)
      for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x)
          if (masks[k].target(x, y) && !masks[k + 1].target(x, y)) {
            CHECK(confs[k](x, y) == static_cast<float>(r.step_confidence[k]));
            CHECK(confs[k](x, y) > 0.0f);
            CHECK(confs[k](x, y) <= 1.0f);
          }
  }
  SUBCASE("no usable source window") {
    Canvas c = Canvas::start(noise_image(12, 12, 4), rect_mask(12, 12, 3, 3, 8, 8));
    CHECK_THROWS_AS(fill_remaining(c, FillParams{}), StageError);
  }
  SUBCASE("bad patch size") {
    Canvas c = Canvas::start(noise_image(12, 12, 4), rect_mask(12, 12, 5, 5, 6, 6));
    FillParams p;
    p.patch = 6;
    CHECK_THROWS_AS(fill_remaining(c, p), ConfigError);
  }
}

}
