#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>
#include <tuple>

#include "structfill/contours.hpp"

namespace structfill::contours {

using imagery::MaskRegion;

namespace {

constexpr std::array<Pixel, 4> kN4{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};
constexpr std::array<Pixel, 8> kN8{{{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};

class UnionFind {
 public:
  explicit UnionFind(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  int find(int a) {
    while (parent_[a] != a) {
      parent_[a] = parent_[parent_[a]];
      a = parent_[a];
    }
    return a;
  }
  /// Attaches the larger id under the smaller so representatives are stable.
  int unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
    return a;
  }

 private:
  std::vector<int> parent_;
};

/// Meyer flooding from regional minima of the quantised signal; ties by row-major index.
Grid<int> watershed(const Grid<int>& level, const MaskRegion& mask, int& region_count) {
  const int w = level.width(), h = level.height();
  constexpr int kUnset = -3;
  Grid<int> labels(w, h, kUnset);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask.target(x, y)) labels(x, y) = ContourHierarchy::kTarget;

  // Regional minima: 4-connected plateaus with no strictly lower neighbour.
  Grid<int> plateau(w, h, -1);
  int next = 0;
  std::vector<Pixel> members, stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (labels(x, y) != kUnset || plateau(x, y) >= 0) continue;
      const int v = level(x, y);
      members.clear();
      stack.assign(1, {x, y});
      plateau(x, y) = 1;
      bool minimum = true;
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        members.push_back(p);
        for (const Pixel d : kN4) {
          const int nx = p.x + d.x, ny = p.y + d.y;
          if (!labels.in_bounds(nx, ny) || labels(nx, ny) == ContourHierarchy::kTarget) continue;
          if (level(nx, ny) < v) minimum = false;
          if (level(nx, ny) == v && plateau(nx, ny) < 0) {
            plateau(nx, ny) = 1;
            stack.push_back({nx, ny});
          }
        }
      }
      if (minimum) {
        for (const Pixel p : members) labels(p) = next;
        ++next;
      }
    }
  }
  region_count = next;

  using Entry = std::pair<int, std::size_t>;  // (level, row-major index)
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue;
  Grid<std::uint8_t> queued(w, h, 0);
  auto push_neighbours = [&](int x, int y) {
    for (const Pixel d : kN4) {
      const int nx = x + d.x, ny = y + d.y;
      if (!labels.in_bounds(nx, ny) || labels(nx, ny) != kUnset || queued(nx, ny)) continue;
      queued(nx, ny) = 1;
      queue.emplace(level(nx, ny), labels.index(nx, ny));
    }
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (labels(x, y) >= 0) push_neighbours(x, y);

  while (!queue.empty()) {
    const auto [lv, idx] = queue.top();
    queue.pop();
    const int x = static_cast<int>(idx % w), y = static_cast<int>(idx / w);
    int found = kUnset;
    bool conflict = false;
    for (const Pixel d : kN4) {
      const int nx = x + d.x, ny = y + d.y;
      if (!labels.in_bounds(nx, ny)) continue;
      const int l = labels(nx, ny);
      if (l < 0) continue;
      if (found == kUnset) {
        found = l;
      } else if (l != found) {
        conflict = true;
      }
    }
    if (found == kUnset || conflict) {
      labels(x, y) = ContourHierarchy::kRidge;
    } else {
      labels(x, y) = found;
      push_neighbours(x, y);
    }
  }
  for (auto& l : labels.data())
    if (l == kUnset) l = ContourHierarchy::kRidge;
  return labels;
}

/// Oriented response at a ridge pixel, using the orientation nearest to the
/// local ridge direction (principal axis of ridge pixels in a 5x5 window).
double ridge_response(const EdgeSignal& signal, const Grid<int>& labels, int x, int y) {
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  int n = 0;
  for (int dy = -2; dy <= 2; ++dy) {
    for (int dx = -2; dx <= 2; ++dx) {
      if (!labels.in_bounds(x + dx, y + dy) || labels(x + dx, y + dy) != ContourHierarchy::kRidge)
        continue;
      sx += dx;
      sy += dy;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
      ++n;
    }
  }
  if (n < 2 || signal.oriented.empty()) return signal.magnitude(x, y);
  const double mx = sx / n, my = sy / n;
  const double cxx = sxx / n - mx * mx, cyy = syy / n - my * my, cxy = sxy / n - mx * my;
  if (cxx + cyy <= 0.0) return signal.magnitude(x, y);
  const double phi = 0.5 * std::atan2(2.0 * cxy, cxx - cyy);
  const int k = signal.orientations();
  int idx = static_cast<int>(std::lround(phi / (kPi / k)));
  idx = ((idx % k) + k) % k;
  return signal.oriented[idx](x, y);
}

struct Boundary {
  double sum = 0.0;
  long count = 0;
  std::vector<int> arcs;
  double strength() const { return count > 0 ? sum / count : 0.0; }
};

}  // namespace

ContourHierarchy::ContourHierarchy(Grid<int> labels, int region_count, std::vector<ContourArc> arcs,
                                   std::vector<Merge> merges)
    : labels_(std::move(labels)),
      region_count_(region_count),
      arcs_(std::move(arcs)),
      merges_(std::move(merges)) {}

std::vector<int> ContourHierarchy::clusters_at(double t) const {
  UnionFind uf(region_count_);
  for (const auto& m : merges_) {
    if (m.level > t) break;
    uf.unite(m.a, m.b);
  }
  std::vector<int> out(region_count_);
  for (int i = 0; i < region_count_; ++i) out[i] = uf.find(i);
  return out;
}

Grid<int> ContourHierarchy::regions_at(double t) const {
  const auto clusters = clusters_at(t);
  Grid<int> out = labels_;
  for (auto& l : out.data())
    if (l >= 0) l = clusters[l];
  return out;
}

int ContourHierarchy::region_count_at(double t) const {
  const auto clusters = clusters_at(t);
  int n = 0;
  for (int i = 0; i < region_count_; ++i)
    if (clusters[i] == i) ++n;
  return n;
}

ContourHierarchy build_hierarchy(const EdgeSignal& signal, const MaskRegion& mask) {
  const int w = signal.magnitude.width(), h = signal.magnitude.height();
  if (mask.width() != w || mask.height() != h)
    throw std::invalid_argument("edge signal and mask dimensions differ");
  if (mask.count() == static_cast<std::size_t>(w) * h)
    throw StageError("known region is empty; nothing to segment");

  float peak = 0.0f;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (mask.known(x, y)) peak = std::max(peak, signal.magnitude(x, y));
  Grid<int> level(w, h, 0);
  if (peak > 0.0f) {
    for (std::size_t i = 0; i < level.size(); ++i)
      level.data()[i] = static_cast<int>(std::lround(255.0 * signal.magnitude.data()[i] / peak));
  }

  int region_count = 0;
  Grid<int> labels = watershed(level, mask, region_count);

  // Group ridge pixels by the unordered pair of regions they separate.
  std::map<std::pair<int, int>, std::vector<Pixel>> pair_pixels;
  Grid<double> response(w, h, 0.0);
  std::vector<int> adjacent;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (labels(x, y) != ContourHierarchy::kRidge) continue;
      adjacent.clear();
      for (const Pixel d : kN8) {
        const int nx = x + d.x, ny = y + d.y;
        if (labels.in_bounds(nx, ny) && labels(nx, ny) >= 0) adjacent.push_back(labels(nx, ny));
      }
      std::sort(adjacent.begin(), adjacent.end());
      adjacent.erase(std::unique(adjacent.begin(), adjacent.end()), adjacent.end());
      if (adjacent.size() < 2) continue;
      response(x, y) = ridge_response(signal, labels, x, y);
      for (std::size_t i = 0; i < adjacent.size(); ++i)
        for (std::size_t j = i + 1; j < adjacent.size(); ++j)
          pair_pixels[{adjacent[i], adjacent[j]}].push_back({x, y});
    }
  }

  // Arcs are the 8-connected pieces of each pair's ridge set.
  std::vector<ContourArc> arcs;
  std::map<std::pair<int, int>, Boundary> boundaries;
  Grid<int> stamp(w, h, -1);
  int stamp_id = 0;
  for (auto& [key, pixels] : pair_pixels) {
    ++stamp_id;
    for (const Pixel p : pixels) stamp(p) = stamp_id;
    Boundary& b = boundaries[key];
    for (const Pixel seed : pixels) {
      if (stamp(seed) != stamp_id) continue;
      ContourArc arc;
      arc.id = static_cast<int>(arcs.size());
      arc.region_a = key.first;
      arc.region_b = key.second;
      std::vector<Pixel> stack{seed};
      stamp(seed) = -stamp_id;
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        arc.pixels.push_back(p);
        for (const Pixel d : kN8) {
          const int nx = p.x + d.x, ny = p.y + d.y;
          if (stamp.in_bounds(nx, ny) && stamp(nx, ny) == stamp_id) {
            stamp(nx, ny) = -stamp_id;
            stack.push_back({nx, ny});
          }
        }
      }
      std::sort(arc.pixels.begin(), arc.pixels.end(),
                [](Pixel a, Pixel b) { return std::tie(a.y, a.x) < std::tie(b.y, b.x); });
      double sum = 0.0;
      for (const Pixel p : arc.pixels) sum += response(p);
      arc.mean_signal = sum / static_cast<double>(arc.pixels.size());
      b.sum += sum;
      b.count += static_cast<long>(arc.pixels.size());
      b.arcs.push_back(arc.id);
      arcs.push_back(std::move(arc));
    }
  }
  double arc_peak = 0.0;
  for (const auto& a : arcs) arc_peak = std::max(arc_peak, a.mean_signal);
  if (arc_peak > 0.0)
    for (auto& a : arcs) a.mean_signal /= arc_peak;

  // Greedy merging of the weakest boundary; levels are forced non-decreasing,
  // which makes the result an ultrametric.
  std::vector<std::map<int, Boundary>> adjacency(region_count);
  for (auto& [key, b] : boundaries) {
    adjacency[key.first][key.second] = b;
    adjacency[key.second][key.first] = b;
  }
  std::vector<int> version(region_count, 0);
  std::vector<char> alive(region_count, 1);
  using Candidate = std::tuple<double, int, int, int, int>;  // strength, a, b, version a, version b
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> queue;
  for (const auto& [key, b] : boundaries) queue.emplace(b.strength(), key.first, key.second, 0, 0);

  std::vector<Merge> merges;
  double last_level = 0.0;
  while (!queue.empty()) {
    const auto [strength, a, b, va, vb] = queue.top();
    queue.pop();
    if (!alive[a] || !alive[b] || version[a] != va || version[b] != vb) continue;
    const double lvl = std::max(last_level, strength);
    last_level = lvl;
    for (const int arc_id : adjacency[a][b].arcs) arcs[arc_id].strength = lvl;
    merges.push_back({lvl, a, b});

    // Fold b into a (a < b, so a stays the representative).
    adjacency[a].erase(b);
    adjacency[b].erase(a);
    for (auto& [other, bd] : adjacency[b]) {
      adjacency[other].erase(b);
      Boundary& target = adjacency[a][other];
      target.sum += bd.sum;
      target.count += bd.count;
      target.arcs.insert(target.arcs.end(), bd.arcs.begin(), bd.arcs.end());
      adjacency[other][a] = target;
    }
    adjacency[b].clear();
    alive[b] = 0;
    ++version[a];
    for (const auto& [other, bd] : adjacency[a]) {
      const int lo = std::min(a, other), hi = std::max(a, other);
      queue.emplace(bd.strength(), lo, hi, version[lo], version[hi]);
    }
  }

  const double top = last_level;
  if (top > 0.0) {
    for (auto& m : merges) m.level /= top;
    for (auto& a : arcs) a.strength /= top;
  }
  return ContourHierarchy(std::move(labels), region_count, std::move(arcs), std::move(merges));
}

}  // namespace structfill::contours
