#include "structfill/contours.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace structfill::contours {

using imagery::ChannelStack;
using imagery::MaskRegion;

void GpbParams::validate() const {
  if (!(sigma > 0.0)) throw ConfigError("gpb.sigma must be > 0");
  if (!(beta >= 0.0)) throw ConfigError("gpb.beta must be >= 0");
  if (!(gamma >= 0.0)) throw ConfigError("gpb.gamma must be >= 0");
  if (!(beta + gamma > 0.0)) throw ConfigError("gpb.beta + gpb.gamma must be > 0");
  if (orientations < 4) throw ConfigError("gpb.orientations must be >= 4");
  if (radius < 2) throw ConfigError("gpb.radius must be >= 2");
  if (bins < 2 || bins > 256) throw ConfigError("gpb.bins must be in [2, 256]");
}

Grid<float> gaussian_derivative_edges(const Grid<float>& channel, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (channel.empty()) throw std::invalid_argument("empty grid");
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> g(2 * r + 1), dg(2 * r + 1);
  const double norm = 1.0 / (std::sqrt(2.0 * kPi) * sigma);
  for (int i = -r; i <= r; ++i) {
    g[i + r] = norm * std::exp(-(i * i) / (2.0 * sigma * sigma));
    dg[i + r] = -i / (sigma * sigma) * g[i + r];
  }

  const int w = channel.width(), h = channel.height();
  // Horizontal pass: derivative and smoothing rows; vertical pass combines them.
  Grid<double> row_d(w, h), row_s(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double d = 0.0, s = 0.0;
      for (int i = -r; i <= r; ++i) {
        const double v = channel.clamped(x - i, y);
        d += v * dg[i + r];
        s += v * g[i + r];
      }
      row_d(x, y) = d;
      row_s(x, y) = s;
    }
  }
  Grid<float> out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double gx = 0.0, gy = 0.0;
      for (int j = -r; j <= r; ++j) {
        gx += row_d.clamped(x, y - j) * g[j + r];
        gy += row_s.clamped(x, y - j) * dg[j + r];
      }
      out(x, y) = static_cast<float>(std::sqrt(gx * gx + gy * gy));
    }
  }
  return out;
}

namespace {

struct HalfDiscs {
  std::vector<Pixel> left;
  std::vector<Pixel> right;
};

HalfDiscs half_discs(double theta, int radius) {
  HalfDiscs hd;
  const double s = std::sin(theta), c = std::cos(theta);
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy > radius * radius) continue;
      const double side = -dx * s + dy * c;
      if (side > 1e-9) {
        hd.left.push_back({dx, dy});
      } else if (side < -1e-9) {
        hd.right.push_back({dx, dy});
      }
    }
  }
  return hd;
}

Grid<std::uint8_t> quantize(const Grid<float>& g, int bins) {
  Grid<std::uint8_t> q(g.width(), g.height());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double v = std::clamp(static_cast<double>(g.data()[i]), 0.0, 1.0);
    q.data()[i] = static_cast<std::uint8_t>(std::min(bins - 1, static_cast<int>(v * bins)));
  }
  return q;
}

}  // namespace

Grid<float> oriented_gradient(const ChannelStack& stack, double theta, int radius, int bins,
                              const MaskRegion* known) {
  if (radius < 2) throw std::invalid_argument("half-disc radius must be >= 2");
  const int w = stack.width(), h = stack.height();
  const HalfDiscs hd = half_discs(theta, radius);
  std::array<Grid<std::uint8_t>, ChannelStack::kChannels> binned;
  for (int c = 0; c < ChannelStack::kChannels; ++c) binned[c] = quantize(stack.channel(c), bins);

  Grid<float> out(w, h, 0.0f);
  std::vector<int> ha(bins), hb(bins);
  auto usable = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= w || y >= h) return false;
    return known == nullptr || known->known(x, y);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double total = 0.0;
      for (int c = 0; c < ChannelStack::kChannels; ++c) {
        std::fill(ha.begin(), ha.end(), 0);
        std::fill(hb.begin(), hb.end(), 0);
        int na = 0, nb = 0;
        const auto& q = binned[c];
        for (const Pixel o : hd.left) {
          if (!usable(x + o.x, y + o.y)) continue;
          ++ha[q(x + o.x, y + o.y)];
          ++na;
        }
        for (const Pixel o : hd.right) {
          if (!usable(x + o.x, y + o.y)) continue;
          ++hb[q(x + o.x, y + o.y)];
          ++nb;
        }
        if (na == 0 || nb == 0) continue;
        double chi = 0.0;
        for (int b = 0; b < bins; ++b) {
          const double pa = static_cast<double>(ha[b]) / na;
          const double pb = static_cast<double>(hb[b]) / nb;
          const double s = pa + pb;
          if (s > 0.0) chi += (pa - pb) * (pa - pb) / s;
        }
        total += 0.5 * chi;
      }
      out(x, y) = static_cast<float>(total);
    }
  }
  return out;
}

EdgeSignal gpb(const ChannelStack& stack, const GpbParams& params, const SpectralDetector& spectral,
               const MaskRegion* known) {
  params.validate();
  if (params.gamma > 0.0 && !spectral)
    throw ConfigError("gpb.gamma > 0 requires a spectral detector");

  const int w = stack.width(), h = stack.height();
  std::vector<Grid<float>> spectral_responses;
  if (params.gamma > 0.0) {
    spectral_responses = spectral(stack, params.orientations);
    if (static_cast<int>(spectral_responses.size()) != params.orientations)
      throw StageError("spectral detector returned the wrong number of orientations");
  }

  EdgeSignal signal{Grid<float>(w, h, 0.0f), {}};
  signal.oriented.reserve(params.orientations);
  for (int i = 0; i < params.orientations; ++i) {
    const double theta = kPi * i / params.orientations;
    Grid<float> og = oriented_gradient(stack, theta, params.radius, params.bins, known);
    for (std::size_t k = 0; k < og.size(); ++k) {
      const double mpb = og.data()[k] / static_cast<double>(ChannelStack::kChannels);
      double value = params.beta * mpb;
      if (params.gamma > 0.0) value += params.gamma * spectral_responses[i].data()[k];
      og.data()[k] = static_cast<float>(value);
      signal.magnitude.data()[k] = std::max(signal.magnitude.data()[k], og.data()[k]);
    }
    signal.oriented.push_back(std::move(og));
  }
  return signal;
}

std::vector<const ContourArc*> contours_at(const ContourHierarchy& hier, double t) {
  std::vector<const ContourArc*> out;
  for (const auto& arc : hier.arcs())
    if (arc.strength > t) out.push_back(&arc);
  return out;
}

}  // namespace structfill::contours
