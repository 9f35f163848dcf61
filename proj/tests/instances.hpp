#pragma once

#include <functional>
#include <limits>
#include <random>

#include "structfill/propagation.hpp"
#include "support.hpp"

namespace testing_support {

using namespace structfill;
using namespace structfill::propagation;

// Smooth random image so neighbouring windows are related but distinct.
inline RasterImage blob_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  struct Wave {
    double fx, fy, ph, amp;
  };
  std::vector<Wave> waves[3];
  for (auto& ch : waves)
    for (int k = 0; k < 4; ++k) ch.push_back({u(rng) * 0.6, u(rng) * 0.6, u(rng) * 6.28, 20 + 30 * u(rng)});
  RasterImage img(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = 128;
        for (const auto& wv : waves[c]) v += wv.amp * std::sin(wv.fx * x + wv.fy * y + wv.ph);
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
  return img;
}

struct ChainInstance {
  imagery::Canvas canvas;
  std::vector<AnchorPoint> anchors;
  std::vector<CandidatePatch> candidates;
  PropagationParams params;
};

// Anchors on a slanted run across the left edge of a rectangular hole.
inline ChainInstance chain_instance(std::uint64_t seed, int anchors, int cands, int rotations) {
  std::mt19937_64 rng(seed);
  ChainInstance inst;
  const int w = 48, h = 48;
  const RasterImage img = blob_image(w, h, seed);
  const MaskRegion mask = rect_mask(w, h, 20, 14, 33, 33);
  inst.canvas = imagery::Canvas::start(img, mask);
  inst.params.patch = 9;
  inst.params.rotations = rotations;
  inst.params.m_max = cands;
  inst.params.seed = seed;
  inst.params.label_cap = 0;
  const int y0 = 16 + static_cast<int>(rng() % 10);
  const int slope = static_cast<int>(rng() % 3) - 1;
  for (int i = 0; i < anchors; ++i) {
    AnchorPoint a;
    a.center = {14 + 2 * i, y0 + slope * i};
    a.position = to_vec(a.center);
    a.index = i;
    a.patch = {a.center, 9};
    inst.anchors.push_back(a);
  }
  inst.candidates = collect_candidates(img, mask, 9, 36, cands, seed);
  return inst;
}

// Exhaustive minimum over all label vectors of the chain energy, evaluated
// with the energy kernels directly.
struct ChainOracle {
  std::vector<std::vector<double>> unary;
  std::vector<std::vector<double>> pair;  // edge i -> i+1, row-major
  int labels = 0;

  ChainOracle(const ChainInstance& inst, const BlockBank& bank) {
    labels = bank.label_count();
    const int n = static_cast<int>(inst.anchors.size());
    unary.assign(n, std::vector<double>(labels));
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < labels; ++k) unary[i][k] = node_energy(inst.anchors[i], bank.at(bank.label(k)), inst.canvas, inst.params);
    pair.assign(n > 0 ? n - 1 : 0, std::vector<double>(static_cast<std::size_t>(labels) * labels));
    for (int i = 0; i + 1 < n; ++i)
      for (int a = 0; a < labels; ++a)
        for (int b = 0; b < labels; ++b)
          pair[i][a * labels + b] = pairwise_energy(inst.anchors[i], bank.at(bank.label(a)), inst.anchors[i + 1],
                                                    bank.at(bank.label(b)), inst.params);
  }

  double energy(const std::vector<int>& x) const {
    double e = 0;
    for (std::size_t i = 0; i < x.size(); ++i) e += unary[i][x[i]];
    for (std::size_t i = 0; i + 1 < x.size(); ++i) e += pair[i][x[i] * labels + x[i + 1]];
    return e;
  }

  double minimum() const {
    const int n = static_cast<int>(unary.size());
    std::vector<int> x(n, 0);
    double best = std::numeric_limits<double>::infinity();
    std::function<void(int)> rec = [&](int i) {
      if (i == n) {
        best = std::min(best, energy(x));
        return;
      }
      for (int k = 0; k < labels; ++k) {
        x[i] = k;
        rec(i + 1);
      }
    };
    rec(0);
    return best;
  }
};

inline int label_index(const Label& l, int rotations) { return l.candidate * rotations + l.rotation; }

}  // namespace testing_support
