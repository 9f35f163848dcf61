#include "structfill/structure.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace structfill::structure {

using contours::ContourArc;
using contours::ContourHierarchy;
using imagery::MaskRegion;
using imagery::RasterImage;

namespace {

constexpr std::array<Pixel, 8> kN8{{{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};

double heading_of(Vec2 v) { return std::atan2(v.y, v.x); }

double angle_between(double a, double b) {
  double d = std::fmod(std::abs(a - b), 2.0 * kPi);
  return d > kPi ? 2.0 * kPi - d : d;
}

using Counts = std::array<long, RegionHistogram::kBins>;

RegionHistogram normalise(const Counts& counts) {
  RegionHistogram h;
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), 0L));
  if (total <= 0.0) return h;
  for (int i = 0; i < RegionHistogram::kBins; ++i) h.bins[i] = counts[i] / total;
  return h;
}

/// Distance from p to segment ab.
double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  if (len2 <= 0.0) return (p - a).norm();
  const double u = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + ab * u)).norm();
}

/// Euclidean distance from p to the nearest target pixel centre, searched within `radius`.
double distance_to_target(const MaskRegion& mask, Vec2 p, int radius) {
  const Pixel c = round_to_pixel(p);
  double best = std::numeric_limits<double>::infinity();
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const int x = c.x + dx, y = c.y + dy;
      if (!mask.in_bounds(x, y) || !mask.target(x, y)) continue;
      best = std::min(best, (p - Vec2{double(x), double(y)}).norm());
    }
  }
  return best;
}

/// Principal direction of a point set; false when degenerate.
bool principal_direction(const std::vector<Vec2>& pts, Vec2& dir, Vec2& mean) {
  if (pts.size() < 2) return false;
  mean = {};
  for (const auto& p : pts) mean += p;
  mean = mean * (1.0 / pts.size());
  double cxx = 0, cyy = 0, cxy = 0;
  for (const auto& p : pts) {
    const Vec2 d = p - mean;
    cxx += d.x * d.x;
    cyy += d.y * d.y;
    cxy += d.x * d.y;
  }
  if (cxx + cyy <= 1e-12) return false;
  const double phi = 0.5 * std::atan2(2.0 * cxy, cxx - cyy);
  dir = {std::cos(phi), std::sin(phi)};
  return true;
}

class TerminalBuilder {
 public:
  TerminalBuilder(const ContourHierarchy& hier, const MaskRegion& mask, const RasterImage& img,
                  const StructureParams& params)
      : hier_(hier), mask_(mask), params_(params), bcomp_(mask.width(), mask.height(), -1),
        bpos_(mask.width(), mask.height(), -1), region_counts_(hier.region_count()) {
    contours_ = imagery::boundary(mask);
    for (std::size_t c = 0; c < contours_.size(); ++c) {
      for (std::size_t i = 0; i < contours_[c].size(); ++i) {
        bcomp_(contours_[c][i]) = static_cast<int>(c);
        bpos_(contours_[c][i]) = static_cast<int>(i);
      }
    }
    arc_of_ = Grid<int>(mask.width(), mask.height(), -1);
    // Junction pixels shared by several arcs belong to the strongest one.
    for (const auto& arc : hier.arcs())
      for (const Pixel p : arc.pixels)
        if (arc_of_(p) < 0 || hier.arcs()[arc_of_(p)].strength < arc.strength) arc_of_(p) = arc.id;
    for (auto& c : region_counts_) c.fill(0);
    const auto& labels = hier.labels();
    for (int y = 0; y < labels.height(); ++y) {
      for (int x = 0; x < labels.width(); ++x) {
        const int l = labels(x, y);
        if (l < 0) continue;
        for (const int b : histogram_bins(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2)))
          ++region_counts_[l][b];
      }
    }
  }

  std::vector<EdgeTerminal> run() {
    std::vector<EdgeTerminal> terminals;
    std::vector<char> emerged(hier_.arcs().size(), 0);
    for (int k = 1;; ++k) {
      const double t = params_.t_init - k * params_.dt;
      if (t < params_.delta_t) break;
      std::vector<const ContourArc*> fresh;
      for (const ContourArc* arc : contours::contours_at(hier_, t)) {
        if (emerged[arc->id]) continue;
        emerged[arc->id] = 1;
        fresh.push_back(arc);
      }
      if (fresh.empty()) continue;
      const auto clusters = hier_.clusters_at(t);
      for (const ContourArc* arc : fresh) add_arc_terminals(*arc, t, clusters, terminals);
    }
    if (params_.twin_gap > 0.0) fuse_twins(terminals);
    for (auto& term : terminals) term.curvature = estimate_end_curvature(term, params_);
    std::sort(terminals.begin(), terminals.end(), [](const EdgeTerminal& a, const EdgeTerminal& b) {
      return std::tie(a.component, a.boundary_position) < std::tie(b.component, b.boundary_position);
    });
    return terminals;
  }

 private:
  RegionHistogram cluster_histogram(int cluster, const std::vector<int>& clusters) const {
    Counts sum{};
    for (std::size_t r = 0; r < clusters.size(); ++r) {
      if (clusters[r] != cluster) continue;
      for (int b = 0; b < RegionHistogram::kBins; ++b) sum[b] += region_counts_[r][b];
    }
    return normalise(sum);
  }

  Pixel nearest_boundary(Vec2 p, int radius) const {
    const Pixel c = round_to_pixel(p);
    Pixel best{-1, -1};
    double best_d = std::numeric_limits<double>::infinity();
    for (int dy = -radius; dy <= radius; ++dy) {
      for (int dx = -radius; dx <= radius; ++dx) {
        const int x = c.x + dx, y = c.y + dy;
        if (!bcomp_.in_bounds(x, y) || bcomp_(x, y) < 0) continue;
        const double d = (p - Vec2{double(x), double(y)}).norm();
        if (d < best_d) {
          best_d = d;
          best = {x, y};
        }
      }
    }
    return best;
  }

  void add_arc_terminals(const ContourArc& arc, double level, const std::vector<int>& clusters,
                         std::vector<EdgeTerminal>& out) {
    std::map<Pixel, int> index;
    for (std::size_t i = 0; i < arc.pixels.size(); ++i) index[arc.pixels[i]] = static_cast<int>(i);

    std::vector<char> contact(arc.pixels.size(), 0);
    bool any = false;
    for (std::size_t i = 0; i < arc.pixels.size(); ++i) {
      const Pixel p = arc.pixels[i];
      for (const Pixel d : kN8) {
        if (mask_.in_bounds(p.x + d.x, p.y + d.y) && mask_.target(p.x + d.x, p.y + d.y)) {
          contact[i] = 1;
          any = true;
          break;
        }
      }
    }
    if (!any) return;

    std::vector<char> seen(arc.pixels.size(), 0);
    for (std::size_t seed = 0; seed < arc.pixels.size(); ++seed) {
      if (!contact[seed] || seen[seed]) continue;
      // One contact cluster = one crossing of the boundary.
      std::vector<int> cluster;
      std::vector<int> stack{static_cast<int>(seed)};
      seen[seed] = 1;
      while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        cluster.push_back(i);
        for (const Pixel d : kN8) {
          auto it = index.find({arc.pixels[i].x + d.x, arc.pixels[i].y + d.y});
          if (it == index.end() || !contact[it->second] || seen[it->second]) continue;
          seen[it->second] = 1;
          stack.push_back(it->second);
        }
      }
      Vec2 centroid;
      for (const int i : cluster) centroid += to_vec(arc.pixels[i]);
      centroid = centroid * (1.0 / cluster.size());

      const Pixel hit = nearest_boundary(centroid, 3);
      if (hit.x < 0) continue;
      bool duplicate = false;
      for (const auto& t : out) {
        if (t.arc_ref == arc.id && (to_vec(t.hit_point) - to_vec(hit)).norm() <= 2.0) duplicate = true;
      }
      if (duplicate) continue;

      // Geodesic walk from the contact cluster, continuing into neighbouring
      // arcs that belong to the same hierarchy contour (equal level).
      std::map<Pixel, int> dist;
      std::vector<Pixel> queue;
      for (const int i : cluster) {
        dist[arc.pixels[i]] = 0;
        queue.push_back(arc.pixels[i]);
      }
      for (std::size_t qi = 0; qi < queue.size(); ++qi) {
        const Pixel p = queue[qi];
        const int dp = dist[p];
        if (dp >= params_.trace_length) continue;
        for (const Pixel d : kN8) {
          const Pixel q{p.x + d.x, p.y + d.y};
          if (!arc_of_.in_bounds(q) || arc_of_(q) < 0 || dist.count(q)) continue;
          const ContourArc& other = hier_.arcs()[arc_of_(q)];
          if (other.id != arc.id && std::abs(other.strength - arc.strength) > 1e-9) continue;
          dist[q] = dp + 1;
          queue.push_back(q);
        }
      }

      EdgeTerminal term;
      term.hit_point = hit;
      term.strength = arc.strength;
      term.arc_ref = arc.id;
      term.emergence_level = level;
      term.component = bcomp_(hit);
      term.boundary_position = bpos_(hit);
      term.flank_regions = {clusters[arc.region_a], clusters[arc.region_b]};
      term.flank_histograms = {cluster_histogram(term.flank_regions[0], clusters),
                               cluster_histogram(term.flank_regions[1], clusters)};

      std::vector<Vec2> sums(params_.trace_length + 1);
      std::vector<int> counts(params_.trace_length + 1, 0);
      std::vector<Vec2> fit;
      for (const auto& [q, d] : dist) {
        sums[d] += to_vec(q);
        ++counts[d];
        if (d <= params_.tangent_window) fit.push_back(to_vec(q));
      }
      for (int d = 0; d <= params_.trace_length && counts[d] > 0; ++d) term.trace.push_back(sums[d] * (1.0 / counts[d]));
      // Stubs too short to fit a tangent, typically connectors between twin ridges.
      if (static_cast<int>(term.trace.size()) * 2 < params_.tangent_window) continue;

      Vec2 dir, mean;
      if (principal_direction(fit, dir, mean)) {
        if (dir.dot(to_vec(hit) - mean) < 0.0) dir = -dir;
      } else {
        dir = (to_vec(hit) - centroid).normalized();
        if (dir.norm() == 0.0) dir = {1.0, 0.0};
      }
      term.tangent = dir.normalized();
      out.push_back(std::move(term));
    }
  }

  /// Two nearly parallel terminals a few pixels apart that share a flank region
  /// are the two sides of one thin structure; replace them by its centreline.
  void fuse_twins(std::vector<EdgeTerminal>& terms) const {
    struct Candidate {
      double dist;
      std::size_t i, j;
    };
    std::vector<Candidate> cands;
    const double cos_limit = std::cos(20.0 * kPi / 180.0);
    for (std::size_t i = 0; i < terms.size(); ++i) {
      for (std::size_t j = i + 1; j < terms.size(); ++j) {
        const auto& a = terms[i];
        const auto& b = terms[j];
        if (a.component != b.component || a.arc_ref < 0 || b.arc_ref < 0) continue;
        const double d = (to_vec(a.hit_point) - to_vec(b.hit_point)).norm();
        if (d > params_.twin_gap || d < 1.0) continue;
        if (a.tangent.dot(b.tangent) < cos_limit) continue;
        if (shared_flank(a, b) < 0) continue;
        cands.push_back({d, i, j});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
      return std::tie(x.dist, x.i, x.j) < std::tie(y.dist, y.i, y.j);
    });
    std::vector<char> used(terms.size(), 0);
    std::vector<EdgeTerminal> fused;
    for (const auto& c : cands) {
      if (used[c.i] || used[c.j]) continue;
      used[c.i] = used[c.j] = 1;
      fused.push_back(fuse(terms[c.i], terms[c.j]));
    }
    std::vector<EdgeTerminal> out;
    for (std::size_t i = 0; i < terms.size(); ++i)
      if (!used[i]) out.push_back(std::move(terms[i]));
    for (auto& f : fused) out.push_back(std::move(f));
    terms = std::move(out);
  }

  /// Initial-region id shared by the flanks of both terminals at the lower of
  /// their emergence levels, or -1.
  int shared_flank(const EdgeTerminal& a, const EdgeTerminal& b) const {
    const double level = std::min(a.emergence_level, b.emergence_level);
    const auto clusters = hier_.clusters_at(level);
    const auto& arcs = hier_.arcs();
    const ContourArc& x = arcs[a.arc_ref];
    const ContourArc& y = arcs[b.arc_ref];
    for (const int ra : {x.region_a, x.region_b})
      for (const int rb : {y.region_a, y.region_b})
        if (clusters[ra] == clusters[rb]) return clusters[ra];
    return -1;
  }

  EdgeTerminal fuse(const EdgeTerminal& a, const EdgeTerminal& b) const {
    const double level = std::min(a.emergence_level, b.emergence_level);
    const auto clusters = hier_.clusters_at(level);
    const int shared = shared_flank(a, b);
    auto outer = [&](const EdgeTerminal& t) {
      const ContourArc& arc = hier_.arcs()[t.arc_ref];
      const int ca = clusters[arc.region_a], cb = clusters[arc.region_b];
      return ca == shared ? cb : ca;
    };

    EdgeTerminal f;
    f.tangent = (a.tangent + b.tangent).normalized();
    // Walk from the midpoint of the two contacts along the shared tangent to the hole.
    const Vec2 from = !a.trace.empty() && !b.trace.empty() ? (a.trace.front() + b.trace.front()) * 0.5
                                                           : (to_vec(a.hit_point) + to_vec(b.hit_point)) * 0.5;
    Pixel hit{-1, -1};
    for (double s = 0.0; s <= params_.twin_gap + 3.0; s += 0.25) {
      const Pixel q = round_to_pixel(from + f.tangent * s);
      if (!mask_.in_bounds(q.x, q.y)) break;
      if (mask_.target(q)) {
        if (bcomp_(q) >= 0) hit = q;
        break;
      }
    }
    if (hit.x < 0) hit = nearest_boundary((to_vec(a.hit_point) + to_vec(b.hit_point)) * 0.5,
                                          static_cast<int>(std::ceil(params_.twin_gap)));
    if (hit.x < 0) hit = a.hit_point;
    f.hit_point = hit;
    f.strength = std::max(a.strength, b.strength);
    f.arc_ref = -1;
    f.emergence_level = level;
    f.component = bcomp_(hit);
    f.boundary_position = bpos_(hit);
    f.flank_regions = {outer(a), outer(b)};
    f.flank_histograms = {cluster_histogram(f.flank_regions[0], clusters),
                          cluster_histogram(f.flank_regions[1], clusters)};
    const std::size_t n = std::min(a.trace.size(), b.trace.size());
    for (std::size_t i = 0; i < n; ++i) f.trace.push_back((a.trace[i] + b.trace[i]) * 0.5);
    return f;
  }

  const ContourHierarchy& hier_;
  const MaskRegion& mask_;
  const StructureParams& params_;
  std::vector<std::vector<Pixel>> contours_;
  Grid<int> bcomp_;
  Grid<int> bpos_;
  std::vector<Counts> region_counts_;
  Grid<int> arc_of_;
};

}  // namespace

void StructureParams::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(dt > 0.0 && dt < 1.0, "structure.dt must be in (0, 1)");
  require(delta_t > 0.0 && delta_t < t_init, "structure.delta_t must be in (0, t_init)");
  require(t_init > 0.0 && t_init <= 1.0, "structure.t_init must be in (0, 1]");
  require(delta_h > 0.0 && delta_h <= 2.0 * std::log(2.0), "structure.delta_h must be in (0, 2 ln 2]");
  require(eps_l >= 0.0 && eps_l <= 1.0, "structure.eps_l must be in [0, 1]");
  require(kappa_u >= 0.0, "structure.kappa_u must be >= 0");
  require(sample_spacing >= 1.0 && sample_spacing <= 20.0, "structure.sample_spacing must be in [1, 20]");
  require(eps_fit > 0.0, "structure.eps_fit must be > 0");
  require(seg_penalty >= 0.0, "structure.seg_penalty must be >= 0");
  require(tangent_window >= 2, "structure.tangent_window must be >= 2");
  require(trace_length >= tangent_window, "structure.trace_length must be >= tangent_window");
  require(twin_gap >= 0.0, "structure.twin_gap must be >= 0");
  require(min_chord >= 0.0, "structure.min_chord must be >= 0");
  require(max_end_curvature >= 0.0, "structure.max_end_curvature must be >= 0");
  require(escape_tolerance >= 0.0, "structure.escape_tolerance must be >= 0");
  require(join_tolerance > 0.0, "structure.join_tolerance must be > 0");
}

std::array<int, 3> histogram_bins(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const auto lab = imagery::srgb_to_lab(r, g, b);
  constexpr int n = RegionHistogram::kBinsPerChannel;
  auto bin = [](double v01) { return std::clamp(static_cast<int>(v01 * n), 0, n - 1); };
  return {bin(lab[0] / 100.0), n + bin((lab[1] + 128.0) / 256.0), 2 * n + bin((lab[2] + 128.0) / 256.0)};
}

RegionHistogram region_histogram(const RasterImage& img, std::span<const Pixel> region) {
  if (region.empty()) throw std::invalid_argument("region histogram of an empty region");
  Counts counts{};
  for (const Pixel p : region)
    for (const int b : histogram_bins(img.at(p.x, p.y, 0), img.at(p.x, p.y, 1), img.at(p.x, p.y, 2)))
      ++counts[b];
  return normalise(counts);
}

double js_divergence(std::span<const double> h1, std::span<const double> h2) {
  if (h1.size() != h2.size()) throw std::invalid_argument("histogram bin counts differ");
  double d = 0.0;
  for (std::size_t i = 0; i < h1.size(); ++i) {
    const double a = h1[i], b = h2[i];
    const double s = a + b;
    if (s <= 0.0) continue;
    if (a > 0.0) d += a * std::log(2.0 * a / s);
    if (b > 0.0) d += b * std::log(2.0 * b / s);
  }
  return std::max(0.0, d);
}

double js_divergence(const RegionHistogram& h1, const RegionHistogram& h2) {
  return js_divergence(std::span<const double>(h1.bins), std::span<const double>(h2.bins));
}

double pair_cost(const EdgeTerminal& s, const EdgeTerminal& t, const StructureParams& params) {
  const auto& hs = s.flank_histograms;
  const auto& ht = t.flank_histograms;
  const std::array<double, 2> straight{js_divergence(hs[0], ht[0]), js_divergence(hs[1], ht[1])};
  const std::array<double, 2> crossed{js_divergence(hs[0], ht[1]), js_divergence(hs[1], ht[0])};
  const auto& best = (crossed[0] + crossed[1] < straight[0] + straight[1]) ? crossed : straight;
  if (best[0] > params.delta_h || best[1] > params.delta_h) return kNoMatch;
  const double l_max = std::max(s.strength, t.strength);
  if (!(l_max > 0.0)) return kNoMatch;
  return (std::abs(s.strength - t.strength) + params.eps_l) / l_max * (best[0] + best[1]);
}

Matching solve_noncrossing_matching(std::span<const double> cost, int n, double unmatched_cost) {
  if (static_cast<int>(cost.size()) != n * n) throw std::invalid_argument("cost matrix size mismatch");
  Matching result;
  if (n <= 0) return result;
  // best[i][j]: optimum over the interval i..j; choice = partner of i or -1.
  std::vector<double> best(static_cast<std::size_t>(n + 1) * (n + 1), 0.0);
  std::vector<int> choice(static_cast<std::size_t>(n + 1) * (n + 1), -1);
  auto at = [n](int i, int j) { return static_cast<std::size_t>(i) * (n + 1) + j; };
  auto value = [&](int i, int j) { return i > j ? 0.0 : best[at(i, j)]; };
  for (int len = 1; len <= n; ++len) {
    for (int i = 0; i + len - 1 < n; ++i) {
      const int j = i + len - 1;
      double b = unmatched_cost + value(i + 1, j);
      int c = -1;
      for (int k = i + 1; k <= j; ++k) {
        const double m = cost[static_cast<std::size_t>(i) * n + k];
        if (!std::isfinite(m)) continue;
        const double v = m + value(i + 1, k - 1) + value(k + 1, j);
        if (v < b) {
          b = v;
          c = k;
        }
      }
      best[at(i, j)] = b;
      choice[at(i, j)] = c;
    }
  }
  result.cost = value(0, n - 1);
  std::vector<std::pair<int, int>> stack{{0, n - 1}};
  while (!stack.empty()) {
    auto [i, j] = stack.back();
    stack.pop_back();
    if (i > j) continue;
    const int k = choice[at(i, j)];
    if (k < 0) {
      stack.push_back({i + 1, j});
    } else {
      result.pairs.emplace_back(i, k);
      stack.push_back({i + 1, k - 1});
      stack.push_back({k + 1, j});
    }
  }
  std::sort(result.pairs.begin(), result.pairs.end());
  return result;
}

std::vector<EdgePair> match_pairs(const std::vector<EdgeTerminal>& terminals,
                                  const StructureParams& params) {
  std::map<int, std::vector<const EdgeTerminal*>> groups;
  for (const auto& t : terminals) groups[t.component].push_back(&t);
  std::vector<EdgePair> pairs;
  for (auto& [component, group] : groups) {
    std::stable_sort(group.begin(), group.end(), [](const EdgeTerminal* a, const EdgeTerminal* b) {
      return a->boundary_position < b->boundary_position;
    });
    const int n = static_cast<int>(group.size());
    if (n < 2) continue;
    std::vector<double> cost(static_cast<std::size_t>(n) * n, kNoMatch);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if ((to_vec(group[i]->hit_point) - to_vec(group[j]->hit_point)).norm() >= params.min_chord)
          cost[i * n + j] = cost[j * n + i] = pair_cost(*group[i], *group[j], params);
    const Matching m = solve_noncrossing_matching(cost, n, params.kappa_u);
    for (const auto& [i, j] : m.pairs) pairs.push_back({*group[i], *group[j], cost[i * n + j]});
  }
  std::stable_sort(pairs.begin(), pairs.end(),
                   [](const EdgePair& a, const EdgePair& b) { return a.cost < b.cost; });
  return pairs;
}

double menger_curvature(Vec2 p0, Vec2 p1, Vec2 p2) {
  const Vec2 a = p1 - p0, b = p2 - p1, c = p2 - p0;
  const double la = a.norm(), lb = b.norm(), lc = c.norm();
  if (la == 0.0 || lb == 0.0 || lc == 0.0) throw std::invalid_argument("coincident points");
  return 2.0 * a.cross(b) / (la * lb * lc);
}

std::vector<int> fit_polyline(std::span<const Vec2> points, double seg_penalty, double eps_fit) {
  const int n = static_cast<int>(points.size());
  if (n == 0) return {};
  if (n == 1) return {0};
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<int> prev(n, -1);
  best[0] = 0.0;
  for (int j = 1; j < n; ++j) {
    for (int i = 0; i < j; ++i) {
      if (!std::isfinite(best[i])) continue;
      double dev = 0.0;
      for (int m = i + 1; m < j; ++m) dev = std::max(dev, segment_distance(points[m], points[i], points[j]));
      if (dev > eps_fit) continue;
      const double v = best[i] + dev + seg_penalty;
      if (v < best[j]) {
        best[j] = v;
        prev[j] = i;
      }
    }
  }
  std::vector<int> vertices;
  for (int v = n - 1; v >= 0; v = prev[v]) vertices.push_back(v);
  std::reverse(vertices.begin(), vertices.end());
  return vertices;
}

double estimate_end_curvature(const EdgeTerminal& t, const StructureParams& params) {
  const int step = std::max(1, static_cast<int>(std::lround(params.sample_spacing)));
  std::vector<Vec2> travel;  // far end first, hit side last
  for (int i = 0; i < static_cast<int>(t.trace.size()); i += step) travel.push_back(t.trace[i]);
  std::reverse(travel.begin(), travel.end());
  if (travel.size() < 3) return 0.0;
  const auto v = fit_polyline(travel, params.seg_penalty, params.eps_fit);
  if (v.size() < 3) return 0.0;
  const std::size_t m = v.size();
  double k = 0.0;
  try {
    k = menger_curvature(travel[v[m - 3]], travel[v[m - 2]], travel[v[m - 1]]);
  } catch (const std::invalid_argument&) {
    return 0.0;
  }
  return std::clamp(k, -params.max_end_curvature, params.max_end_curvature);
}

namespace {

bool contained(const std::vector<Vec2>& samples, const MaskRegion& mask, double tolerance) {
  const int radius = static_cast<int>(std::ceil(tolerance)) + 1;
  for (const Vec2& p : samples) {
    const Pixel q = round_to_pixel(p);
    if (mask.in_bounds(q.x, q.y) && mask.target(q.x, q.y)) continue;
    if (distance_to_target(mask, p, radius) > tolerance) return false;
  }
  return true;
}

StructureCurve sample_chain(const ClothoidChain& chain, const EdgePair& pair) {
  StructureCurve curve;
  curve.length = chain.length();
  const int whole = static_cast<int>(std::floor(curve.length));
  std::vector<double> positions;
  for (int s = 0; s <= whole; ++s) positions.push_back(s);
  if (curve.length - whole > 1e-9) positions.push_back(curve.length);
  for (const double s : positions) {
    const CurveState st = chain.state_at(s);
    curve.samples.push_back(st.position);
    curve.headings.push_back(st.heading);
    curve.curvatures.push_back(st.curvature);
  }
  curve.join_jumps = chain.join_discontinuities();
  curve.pair = pair;
  return curve;
}

/// Quintic Hermite between the two terminals, resampled at unit arc length.
/// Second derivatives are set from the end curvatures, so the ends are G2.
StructureCurve hermite_curve(const CurveState& from, const CurveState& to, const EdgePair& pair) {
  const Vec2 p0 = from.position, p1 = to.position;
  const double chord = (p1 - p0).norm();
  const Vec2 t0{std::cos(from.heading), std::sin(from.heading)};
  const Vec2 t1{std::cos(to.heading), std::sin(to.heading)};
  const Vec2 m0 = t0 * chord, m1 = t1 * chord;
  const Vec2 a0 = t0.perp() * (from.curvature * chord * chord);
  const Vec2 a1 = t1.perp() * (to.curvature * chord * chord);
  auto eval = [&](double u, Vec2& pos, Vec2& d1, Vec2& d2) {
    const double u2 = u * u, u3 = u2 * u, u4 = u3 * u, u5 = u4 * u;
    pos = p0 * (1 - 10 * u3 + 15 * u4 - 6 * u5) + m0 * (u - 6 * u3 + 8 * u4 - 3 * u5) +
          a0 * (0.5 * u2 - 1.5 * u3 + 1.5 * u4 - 0.5 * u5) + a1 * (0.5 * u3 - u4 + 0.5 * u5) +
          m1 * (-4 * u3 + 7 * u4 - 3 * u5) + p1 * (10 * u3 - 15 * u4 + 6 * u5);
    d1 = p0 * (-30 * u2 + 60 * u3 - 30 * u4) + m0 * (1 - 18 * u2 + 32 * u3 - 15 * u4) +
         a0 * (u - 4.5 * u2 + 6 * u3 - 2.5 * u4) + a1 * (1.5 * u2 - 4 * u3 + 2.5 * u4) +
         m1 * (-12 * u2 + 28 * u3 - 15 * u4) + p1 * (30 * u2 - 60 * u3 + 30 * u4);
    d2 = p0 * (-60 * u + 180 * u2 - 120 * u3) + m0 * (-36 * u + 96 * u2 - 60 * u3) +
         a0 * (1 - 9 * u + 18 * u2 - 10 * u3) + a1 * (3 * u - 12 * u2 + 10 * u3) +
         m1 * (-24 * u + 84 * u2 - 60 * u3) + p1 * (60 * u - 180 * u2 + 120 * u3);
  };
  constexpr int kSteps = 4000;
  std::vector<double> us(kSteps + 1), arc(kSteps + 1, 0.0);
  Vec2 prev, d1, d2;
  eval(0.0, prev, d1, d2);
  for (int i = 0; i <= kSteps; ++i) {
    us[i] = static_cast<double>(i) / kSteps;
    Vec2 p;
    eval(us[i], p, d1, d2);
    if (i > 0) arc[i] = arc[i - 1] + (p - prev).norm();
    prev = p;
  }
  StructureCurve curve;
  curve.length = arc.back();
  curve.fallback = true;
  curve.pair = pair;
  std::vector<double> targets;
  const int whole = static_cast<int>(std::floor(curve.length));
  for (int s = 0; s <= whole; ++s) targets.push_back(s);
  if (curve.length - whole > 1e-9) targets.push_back(curve.length);
  std::size_t k = 0;
  for (const double s : targets) {
    while (k + 1 < arc.size() && arc[k + 1] < s) ++k;
    const double span = k + 1 < arc.size() ? arc[k + 1] - arc[k] : 0.0;
    const double f = span > 0.0 ? std::clamp((s - arc[k]) / span, 0.0, 1.0) : 0.0;
    const double u = k + 1 < us.size() ? us[k] + f * (us[k + 1] - us[k]) : 1.0;
    Vec2 p;
    eval(u, p, d1, d2);
    const double speed = d1.norm();
    curve.samples.push_back(p);
    curve.headings.push_back(std::atan2(d1.y, d1.x));
    curve.curvatures.push_back(speed > 0 ? d1.cross(d2) / (speed * speed * speed) : 0.0);
  }
  curve.samples.front() = p0;
  curve.samples.back() = p1;
  return curve;
}

}  // namespace

std::string check_curve(const StructureCurve& curve, const MaskRegion& mask,
                        const StructureParams& params) {
  std::ostringstream why;
  if (curve.samples.size() < 2) return "curve has fewer than two samples";
  const auto& s = curve.pair.source;
  const auto& t = curve.pair.target;
  if ((curve.samples.front() - to_vec(s.hit_point)).norm() > 1.0) return "start misses the source hit point";
  if ((curve.samples.back() - to_vec(t.hit_point)).norm() > 1.0) return "end misses the target hit point";
  constexpr double kMaxTangentError = 5.0 * kPi / 180.0;
  if (angle_between(curve.headings.front(), heading_of(s.tangent)) > kMaxTangentError)
    return "start tangent deviates from the source terminal";
  if (angle_between(curve.headings.back(), heading_of(-t.tangent)) > kMaxTangentError)
    return "end tangent deviates from the target terminal";
  for (const double j : curve.join_jumps) {
    if (std::abs(j) > params.join_tolerance) {
      why << "curvature jump " << j << " at a join";
      return why.str();
    }
  }
  if (std::abs(curve.curvatures.front() - s.curvature) > params.join_tolerance)
    return "start curvature does not continue the source arc";
  if (std::abs(curve.curvatures.back() + t.curvature) > params.join_tolerance)
    return "end curvature does not continue the target arc";
  if (!contained(curve.samples, mask, params.escape_tolerance)) return "curve leaves the target region";
  return {};
}

CurveResult generate_curve(const EdgePair& pair, const MaskRegion& mask, const StructureParams& params) {
  CurveResult result;
  if (!std::isfinite(pair.cost)) {
    result.warning = "pair has no finite cost";
    return result;
  }
  const EdgeTerminal& s = pair.source;
  const EdgeTerminal& t = pair.target;
  const CurveState from{to_vec(s.hit_point), heading_of(s.tangent), s.curvature};
  // Arriving at the target means travelling against its inward tangent, which
  // also flips the sign of its curvature.
  const CurveState to{to_vec(t.hit_point), heading_of(-t.tangent), -t.curvature};
  if ((to.position - from.position).norm() < 1.0) {
    result.warning = "terminals coincide";
    return result;
  }

  for (const auto& chain : solve_g2_chains(from, to)) {
    StructureCurve curve = sample_chain(chain, pair);
    if (check_curve(curve, mask, params).empty()) {
      result.curve = std::move(curve);
      return result;
    }
  }
  StructureCurve fallback = hermite_curve(from, to, pair);
  const std::string why = check_curve(fallback, mask, params);
  if (why.empty()) {
    result.curve = std::move(fallback);
    return result;
  }
  std::ostringstream msg;
  msg << "curve between (" << s.hit_point.x << "," << s.hit_point.y << ") and (" << t.hit_point.x << ","
      << t.hit_point.y << ") dropped: " << why;
  result.warning = msg.str();
  return result;
}

std::vector<EdgeTerminal> collect_terminals(const ContourHierarchy& hier, const MaskRegion& mask,
                                            const RasterImage& img, const StructureParams& params) {
  params.validate();
  if (hier.width() != mask.width() || hier.height() != mask.height())
    throw std::invalid_argument("hierarchy and mask dimensions differ");
  return TerminalBuilder(hier, mask, img, params).run();
}

}  // namespace structfill::structure
