#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "structfill/clothoid.hpp"
#include "structfill/contours.hpp"
#include "structfill/structure.hpp"
#include "structure_oracles.hpp"
#include "support.hpp"

using namespace structfill;
using namespace structfill::structure;
using namespace testing_support;
using imagery::MaskRegion;
using imagery::RasterImage;

namespace {

std::vector<EdgeTerminal> terminals_of(const RasterImage& img, const MaskRegion& m,
                                       const StructureParams& p = {}) {
  const auto edges = contours::gpb(imagery::to_channels(img, &m), contours::GpbParams{}, {}, &m);
  return collect_terminals(contours::build_hierarchy(edges, m), m, img, p);
}

double point_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  double t = len2 > 0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (a + ab * t)).norm();
}

// Enumerates every vertex subset containing both ends.
std::pair<double, std::vector<int>> brute_polyline(const std::vector<Vec2>& pts, double penalty) {
  const int n = static_cast<int>(pts.size());
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> arg;
  for (unsigned mask = 0; mask < (1u << (n - 2)); ++mask) {
    std::vector<int> v{0};
    for (int k = 1; k < n - 1; ++k)
      if (mask & (1u << (k - 1))) v.push_back(k);
    v.push_back(n - 1);
    double total = 0;
    for (std::size_t s = 0; s + 1 < v.size(); ++s) {
      double dev = 0;
      for (int m = v[s] + 1; m < v[s + 1]; ++m) dev = std::max(dev, point_segment(pts[m], pts[v[s]], pts[v[s + 1]]));
      total += dev + penalty;
    }
    if (total < best) {
      best = total;
      arg = v;
    }
  }
  return {best, arg};
}

}  // namespace

TEST_SUITE("structure") {

TEST_CASE("menger curvature reference values") {
  CHECK(menger_curvature({0, 0}, {1, 0}, {2, 0}) == 0.0);
  CHECK(menger_curvature({1, 0}, {0, 1}, {-1, 0}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(menger_curvature({-1, 0}, {0, 1}, {1, 0}) == doctest::Approx(-1.0).epsilon(1e-12));
  const double k = menger_curvature({2, 0}, {2 * std::cos(1.0), 2 * std::sin(1.0)}, {2 * std::cos(2.5), 2 * std::sin(2.5)});
  CHECK(std::abs(std::abs(k) - 0.5) < 1e-12);
}

TEST_CASE("menger curvature under rigid motion and reflection") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec2 p[3] = {{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}};
    const double k = menger_curvature(p[0], p[1], p[2]);
    const double a = u(rng), c = std::cos(a), s = std::sin(a);
    const Vec2 shift{u(rng), u(rng)};
    auto move = [&](Vec2 q) { return Vec2{c * q.x - s * q.y, s * q.x + c * q.y} + shift; };
    auto mirror = [](Vec2 q) { return Vec2{-q.x, q.y}; };
    CHECK(menger_curvature(move(p[0]), move(p[1]), move(p[2])) == doctest::Approx(k).epsilon(1e-9));
    CHECK(menger_curvature(mirror(p[0]), mirror(p[1]), mirror(p[2])) == doctest::Approx(-k).epsilon(1e-9));
  }
}

TEST_CASE("js divergence reference values") {
  const std::vector<double> a{1, 0}, b{0, 1};
  CHECK(js_divergence(a, b) == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
  const std::vector<double> c{0.75, 0.25}, d{0.25, 0.75};
  // Direct evaluation in long double.
  const long double oracle = 0.75L * std::log(1.5L) + 0.25L * std::log(0.5L) + 0.25L * std::log(0.5L) +
                             0.75L * std::log(1.5L);
  CHECK(std::abs(js_divergence(c, d) - static_cast<double>(oracle)) < 1e-12);
}

TEST_CASE("js divergence properties on random histograms") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto h1 = random_hist(rng, RegionHistogram::kBins), h2 = random_hist(rng, RegionHistogram::kBins);
    const double d12 = js_divergence(h1, h2), d21 = js_divergence(h2, h1);
    CHECK(std::abs(d12 - d21) < 1e-12);
    CHECK(d12 >= 0.0);
    CHECK(d12 <= 2 * std::log(2.0) + 1e-12);
    CHECK(std::abs(js_divergence(h1, h1)) < 1e-12);
  }
}

TEST_CASE("region histograms") {
  RasterImage img = flat_image(10, 10, 0);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) {
      img.at(x, y, 0) = 30;
      img.at(x, y, 1) = 140;
      img.at(x, y, 2) = 220;
    }
  std::vector<Pixel> region;
  for (int x = 0; x < 10; ++x) region.push_back({x, 3});
  const RegionHistogram h = region_histogram(img, region);
  int nonzero = 0;
  for (const double v : h.bins)
    if (v != 0) {
      ++nonzero;
      CHECK(v == doctest::Approx(1.0 / 3.0));
    }
  CHECK(nonzero == 3);

  const RasterImage noise = noise_image(20, 20, 5);
  std::vector<Pixel> all;
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 20; ++x) all.push_back({x, y});
  std::vector<Pixel> shuffled = all;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937(2));
  CHECK(region_histogram(noise, all).bins == region_histogram(noise, shuffled).bins);
}

TEST_CASE("two samples of one texture are close") {
  const RasterImage tex = noise_image(80, 40, 17);
  std::vector<Pixel> left, right;
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) {
      left.push_back({x, y});
      right.push_back({x + 40, y});
    }
  const StructureParams p;
  CHECK(js_divergence(region_histogram(tex, left), region_histogram(tex, right)) < p.delta_h);
}

TEST_CASE("pair cost") {
  std::mt19937_64 rng(5);
  const RegionHistogram a = hist_from(random_hist(rng, RegionHistogram::kBins));
  const RegionHistogram b = hist_from(random_hist(rng, RegionHistogram::kBins));
  const StructureParams p;
  const EdgeTerminal s = simple_terminal({0, 0}, {1, 0}, 0.8, a, b);
  CHECK(pair_cost(s, s, p) == 0.0);

  RegionHistogram one{}, other{};
  one.bins[0] = one.bins[16] = one.bins[32] = 1.0 / 3;
  other.bins[15] = other.bins[31] = other.bins[47] = 1.0 / 3;
  const EdgeTerminal far1 = simple_terminal({0, 0}, {1, 0}, 0.8, one, one);
  const EdgeTerminal far2 = simple_terminal({9, 0}, {-1, 0}, 0.8, other, other);
  CHECK(pair_cost(far1, far2, p) == kNoMatch);

  SUBCASE("flank order does not matter") {
    const RegionHistogram c = hist_from(random_hist(rng, RegionHistogram::kBins));
    const RegionHistogram d = hist_from(random_hist(rng, RegionHistogram::kBins));
    StructureParams loose;
    loose.delta_h = 2 * std::log(2.0);
    const EdgeTerminal t = simple_terminal({9, 0}, {-1, 0}, 0.5, c, d);
    const EdgeTerminal swapped = simple_terminal({9, 0}, {-1, 0}, 0.5, d, c);
    const double straight = js_divergence(a, c) + js_divergence(b, d);
    const double crossed = js_divergence(a, d) + js_divergence(b, c);
    const double expected = (0.3 + loose.eps_l) / 0.8 * std::min(straight, crossed);
    CHECK(pair_cost(s, t, loose) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(pair_cost(s, swapped, loose) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("non-crossing matching equals enumeration") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 8);
    std::vector<double> cost(n * n, kNoMatch);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (u(rng) > 0.6) cost[i * n + j] = cost[j * n + i] = u(rng);
    const double unmatched = 1.0;
    const Matching m = solve_noncrossing_matching(cost, n, unmatched);
    // Re-add the chosen matching's cost in enumeration order.
    std::vector<int> partner(n, -1);
    for (auto [i, j] : m.pairs) {
      CHECK(partner[i] == -1);
      CHECK(partner[j] == -1);
      partner[i] = j;
      partner[j] = i;
    }
    double total = 0;
    for (int a = 0; a < n; ++a) {
      if (partner[a] < 0) total += unmatched;
      else if (partner[a] > a) total += cost[a * n + partner[a]];
    }
    for (auto [a, b] : m.pairs)
      for (auto [c, d] : m.pairs) CHECK_FALSE((a < c && c < b && b < d));
    CHECK(total == brute_matching(cost, n, unmatched));
  }
}

TEST_CASE("match_pairs small cases") {
  const StructureParams p;
  CHECK(match_pairs({}, p).empty());
  RegionHistogram h{};
  h.bins[3] = h.bins[20] = h.bins[40] = 1.0 / 3;
  const EdgeTerminal a = simple_terminal({10, 10}, {1, 0}, 0.9, h, h);
  CHECK(match_pairs({a}, p).empty());
  EdgeTerminal b = simple_terminal({30, 10}, {-1, 0}, 0.7, h, h);
  b.boundary_position = 5;
  const auto pairs = match_pairs({a, b}, p);
  REQUIRE(pairs.size() == 1);
  CHECK(std::isfinite(pairs[0].cost));
  // Terminals on different boundary contours are never paired.
  b.component = 1;
  CHECK(match_pairs({a, b}, p).empty());
}

TEST_CASE("fit_polyline") {
  std::vector<Vec2> line;
  for (int i = 0; i < 12; ++i) line.push_back({i * 1.0, 0.5 * i});
  CHECK(fit_polyline(line, 2.0) == std::vector<int>{0, 11});

  std::vector<Vec2> ell;
  for (int i = 0; i <= 8; ++i) ell.push_back({static_cast<double>(i), 0});
  for (int i = 1; i <= 8; ++i) ell.push_back({8, static_cast<double>(i)});
  const auto v = fit_polyline(ell, 2.0);
  CHECK(v == std::vector<int>{0, 8, 16});
  CHECK(v == brute_polyline(ell, 2.0).second);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Vec2> pts;
    for (int i = 0; i < 12; ++i) pts.push_back({i * 2.0 + u(rng) * 0.3, u(rng)});
    const auto fit = fit_polyline(pts, 1.5);
    double total = 0;
    for (std::size_t s = 0; s + 1 < fit.size(); ++s) {
      double dev = 0;
      for (int m = fit[s] + 1; m < fit[s + 1]; ++m) dev = std::max(dev, point_segment(pts[m], pts[fit[s]], pts[fit[s + 1]]));
      total += dev + 1.5;
    }
    CHECK(total == doctest::Approx(brute_polyline(pts, 1.5).first).epsilon(1e-12));
    // Zero penalty keeps every point.
    CHECK(fit_polyline(pts, 0.0).size() == pts.size());
  }
}

TEST_CASE("end curvature from a circular trace") {
  const StructureParams p;
  EdgeTerminal t;
  const double r = 25.0;
  // Trace walks away from the hole along a circle through the origin.
  for (int i = 0; i < 40; ++i) {
    const double a = i / r;
    t.trace.push_back({r * std::sin(a), r - r * std::cos(a)});
  }
  const double k = estimate_end_curvature(t, p);
  CHECK(std::abs(k) == doctest::Approx(1.0 / r).epsilon(0.25));
  for (auto& q : t.trace) q.y = -q.y;
  CHECK(estimate_end_curvature(t, p) == doctest::Approx(-k));
  EdgeTerminal straight;
  for (int i = 0; i < 40; ++i) straight.trace.push_back({double(i), 0});
  CHECK(estimate_end_curvature(straight, p) == 0.0);
}

TEST_CASE("clothoid chains") {
  SUBCASE("straight") {
    const auto chains = solve_g2_chains({{0, 0}, 0.0, 0.0}, {{20, 0}, 0.0, 0.0});
    REQUIRE(!chains.empty());
    CHECK(chains[0].length() == doctest::Approx(20.0).epsilon(1e-6));
  }
  SUBCASE("circle arc is reproduced") {
    const double r = 15, k = 1 / r, sweep = 1.2;
    const CurveState from{{0, 0}, 0.0, k};
    const CurveState to{{r * std::sin(sweep), r - r * std::cos(sweep)}, sweep, k};
    const auto chains = solve_g2_chains(from, to);
    REQUIRE(!chains.empty());
    CHECK(chains[0].length() == doctest::Approx(r * sweep).epsilon(1e-5));
    for (double s = 0; s < chains[0].length(); s += 1.0)
      CHECK(chains[0].state_at(s).curvature == doctest::Approx(k).epsilon(1e-4));
  }
  SUBCASE("end state and joins") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1, 1);
    int solved = 0;
    for (int trial = 0; trial < 40; ++trial) {
      const CurveState from{{0, 0}, 0.5 * u(rng), 0.03 * u(rng)};
      const CurveState to{{20 + 5 * u(rng), 6 * u(rng)}, 0.5 * u(rng), 0.03 * u(rng)};
      const auto chains = solve_g2_chains(from, to);
      if (chains.empty()) continue;
      ++solved;
      const CurveState end = chains[0].end();
      CHECK((end.position - to.position).norm() < 1e-6);
      CHECK(std::abs(std::remainder(end.heading - to.heading, 2 * M_PI)) < 1e-6);
      CHECK(end.curvature == doctest::Approx(to.curvature).epsilon(1e-6));
      for (const double j : chains[0].join_discontinuities()) CHECK(std::abs(j) < 1e-9);
      CHECK(chains[0].length() <= 3.0 * (to.position - from.position).norm());
    }
    CHECK(solved >= 30);
  }
}

TEST_CASE("generate_curve straight and S-shaped") {
  const MaskRegion m = rect_mask(80, 80, 10, 10, 69, 69);
  const StructureParams p;
  RegionHistogram h{};
  h.bins[0] = h.bins[16] = h.bins[32] = 1.0 / 3;

  SUBCASE("collinear terminals give a straight segment") {
    const EdgePair pair{simple_terminal({10, 40}, {1, 0}, 1, h, h), simple_terminal({69, 40}, {-1, 0}, 1, h, h), 0.1};
    const auto r = generate_curve(pair, m, p);
    REQUIRE(r.curve);
    for (const double k : r.curve->curvatures) CHECK(std::abs(k) <= 1e-6);
    for (const Vec2 q : r.curve->samples) CHECK(std::abs(q.y - 40) < 1e-6);
    CHECK(check_curve(*r.curve, m, p).empty());
  }
  SUBCASE("mirrored oblique tangents give one inflection") {
    const Vec2 d{1, 0.4};
    const EdgePair pair{simple_terminal({10, 30}, d, 1, h, h), simple_terminal({69, 50}, -d, 1, h, h), 0.1};
    const auto r = generate_curve(pair, m, p);
    REQUIRE(r.curve);
    CHECK(check_curve(*r.curve, m, p).empty());
    int changes = 0, sign = 0;
    for (const double k : r.curve->curvatures) {
      if (std::abs(k) < 1e-9) continue;
      const int s = k > 0 ? 1 : -1;
      if (sign != 0 && s != sign) ++changes;
      sign = s;
    }
    CHECK(changes == 1);
  }
  SUBCASE("an infinite pair cost is refused") {
    const EdgePair pair{simple_terminal({10, 40}, {1, 0}, 1, h, h), simple_terminal({69, 40}, {-1, 0}, 1, h, h), kNoMatch};
    const auto r = generate_curve(pair, m, p);
    CHECK_FALSE(r.curve);
    CHECK(!r.warning.empty());
  }
}

TEST_CASE("terminals on synthetic scenes") {
  SUBCASE("uniform image") {
    CHECK(terminals_of(flat_image(64, 64, 120), disk_mask(64, 64, 32, 32, 10)).empty());
  }
  SUBCASE("line through a disk") {
    const auto ts = terminals_of(line_scene(), scene_disk());
    REQUIRE(ts.size() == 2);
    const double cosang = ts[0].tangent.dot(ts[1].tangent);
    CHECK(cosang <= -std::cos(5.0 * M_PI / 180.0));
    // The line's centre row meets the disk at x = 64 -+ 16.
    std::vector<int> xs{ts[0].hit_point.x, ts[1].hit_point.x};
    std::sort(xs.begin(), xs.end());
    CHECK(std::abs(xs[0] - 48) <= 2);
    CHECK(std::abs(xs[1] - 80) <= 2);
    for (const auto& t : ts) CHECK(std::abs(t.hit_point.y - 64) <= 1);
    const auto pairs = match_pairs(ts, StructureParams{});
    CHECK(pairs.size() == 1);
  }
  SUBCASE("step edge twin ridges fuse into one terminal per side") {
    const auto ts = terminals_of(step_scene(), scene_disk());
    REQUIRE(ts.size() == 2);
    for (const auto& t : ts) CHECK(std::abs(t.hit_point.x - 63.5) <= 2.0);
    CHECK(ts[0].tangent.dot(ts[1].tangent) <= -std::cos(5.0 * M_PI / 180.0));
  }
  SUBCASE("T junction with its stem entering the hole") {
    const auto ts = terminals_of(t_junction_scene(), scene_disk());
    CHECK(ts.size() == 3);
  }
}

TEST_CASE("parameter validation") {
  StructureParams p;
  CHECK_NOTHROW(p.validate());
  p.dt = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.delta_h = 2.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.trace_length = 5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

}
