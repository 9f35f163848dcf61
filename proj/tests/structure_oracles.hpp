#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "structfill/structure.hpp"

namespace testing_support {

using namespace structfill;
using namespace structfill::structure;

inline std::vector<double> random_hist(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> h(n);
  double s = 0;
  for (auto& v : h) {
    v = u(rng) < 0.2 ? 0.0 : u(rng);
    s += v;
  }
  if (s == 0) {
    h[0] = 1;
    s = 1;
  }
  for (auto& v : h) v /= s;
  return h;
}

// Every non-crossing partial matching of 0..n-1 on a circle, with its cost.
inline double brute_matching(const std::vector<double>& cost, int n, double unmatched) {
  std::vector<int> partner(n, -1);
  double best = std::numeric_limits<double>::infinity();
  std::function<void(int)> rec = [&](int i) {
    if (i == n) {
      std::vector<std::pair<int, int>> ps;
      for (int a = 0; a < n; ++a)
        if (partner[a] > a) ps.emplace_back(a, partner[a]);
      for (auto [a, b] : ps)
        for (auto [c, d] : ps)
          if (a < c && c < b && b < d) return;
      double total = 0;
      for (int a = 0; a < n; ++a) {
        if (partner[a] < 0) total += unmatched;
        else if (partner[a] > a) total += cost[a * n + partner[a]];
      }
      best = std::min(best, total);
      return;
    }
    if (partner[i] >= 0) return rec(i + 1);
    rec(i + 1);
    for (int j = i + 1; j < n; ++j) {
      if (partner[j] >= 0 || !std::isfinite(cost[i * n + j])) continue;
      partner[i] = j;
      partner[j] = i;
      rec(i + 1);
      partner[i] = partner[j] = -1;
    }
  };
  rec(0);
  return best;
}

inline EdgeTerminal simple_terminal(Pixel hit, Vec2 tangent, double strength, const RegionHistogram& a,
                             const RegionHistogram& b) {
  EdgeTerminal t;
  t.hit_point = hit;
  t.tangent = tangent.normalized();
  t.strength = strength;
  t.flank_histograms = {a, b};
  return t;
}

inline RegionHistogram hist_from(const std::vector<double>& v) {
  RegionHistogram h;
  std::copy(v.begin(), v.end(), h.bins.begin());
  return h;
}

}  // namespace testing_support
