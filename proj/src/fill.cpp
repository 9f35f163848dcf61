#include "structfill/fill.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "parallel.hpp"

namespace structfill::fill {

using imagery::Canvas;
using imagery::MaskRegion;
using imagery::RasterImage;

void FillParams::validate() const {
  if (patch < 5 || patch > 51 || patch % 2 == 0) throw ConfigError("patch_size must be odd and in [5, 51]");
  if (snapshot_every < 0) throw ConfigError("fill.snapshot_every must be >= 0");
}

double confidence(const Grid<float>& cmap, Pixel p, int l, const MaskRegion& mask) {
  const int half = l / 2;
  double sum = 0.0;
  for (int y = p.y - half; y <= p.y + half; ++y)
    for (int x = p.x - half; x <= p.x + half; ++x)
      if (mask.known(x, y)) sum += cmap(x, y);
  return sum / (static_cast<double>(l) * l);
}

Vec2 front_normal(const MaskRegion& mask, Pixel p) {
  const auto& bits = mask.bits();
  auto m = [&](int dx, int dy) { return static_cast<double>(bits.clamped(p.x + dx, p.y + dy)); };
  const double gx = (m(1, -1) + 2 * m(1, 0) + m(1, 1)) - (m(-1, -1) + 2 * m(-1, 0) + m(-1, 1));
  const double gy = (m(-1, 1) + 2 * m(0, 1) + m(1, 1)) - (m(-1, -1) + 2 * m(0, -1) + m(1, -1));
  Vec2 n{gx, gy};
  if (n.norm() > 1e-12) return n.normalized();
  // Symmetric neighbourhoods cancel out; point away from the known neighbours instead.
  Vec2 centroid;
  int count = 0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      if (mask.known(p.x + dx, p.y + dy)) {
        centroid += Vec2{double(dx), double(dy)};
        ++count;
      }
    }
  }
  if (count > 0) n = -(centroid * (1.0 / count));
  if (n.norm() > 1e-12) return n.normalized();
  return {1.0, 0.0};
}

namespace {

double gray(const RasterImage& img, int x, int y) {
  if (img.channels() < 3) return img.at(x, y, 0);
  return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
}

Vec2 gradient_at(const RasterImage& img, const MaskRegion& mask, int x, int y) {
  bool full = true;
  for (int dy = -1; dy <= 1 && full; ++dy)
    for (int dx = -1; dx <= 1 && full; ++dx) full = mask.known(x + dx, y + dy);
  if (full) {
    auto g = [&](int dx, int dy) { return gray(img, x + dx, y + dy); };
    const double gx = (g(1, -1) + 2 * g(1, 0) + g(1, 1)) - (g(-1, -1) + 2 * g(-1, 0) + g(-1, 1));
    const double gy = (g(-1, 1) + 2 * g(0, 1) + g(1, 1)) - (g(-1, -1) + 2 * g(0, -1) + g(1, -1));
    return {gx / 8.0, gy / 8.0};
  }
  auto axis = [&](int dx, int dy) {
    const bool fwd = mask.known(x + dx, y + dy), bwd = mask.known(x - dx, y - dy);
    if (fwd && bwd) return (gray(img, x + dx, y + dy) - gray(img, x - dx, y - dy)) / 2.0;
    if (fwd) return gray(img, x + dx, y + dy) - gray(img, x, y);
    if (bwd) return gray(img, x, y) - gray(img, x - dx, y - dy);
    return 0.0;
  };
  return {axis(1, 0), axis(0, 1)};
}

}  // namespace

Vec2 isophote(const RasterImage& img, const MaskRegion& mask, Pixel p, int l) {
  const int half = l / 2;
  Vec2 best;
  double best_mag = 0.0;
  for (int y = p.y - half; y <= p.y + half; ++y) {
    for (int x = p.x - half; x <= p.x + half; ++x) {
      if (!mask.known(x, y)) continue;
      const Vec2 g = gradient_at(img, mask, x, y);
      const double mag = g.norm();
      if (mag > best_mag) {
        best_mag = mag;
        best = g;
      }
    }
  }
  return {-best.y, best.x};
}

double data_term(Vec2 iso, Vec2 normal) { return std::abs(iso.dot(normal)) / 255.0; }

std::vector<FrontPixel> compute_front(const Canvas& canvas, int l) {
  std::vector<FrontPixel> front;
  const MaskRegion& mask = canvas.mask;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!imagery::is_boundary_pixel(mask, x, y)) continue;
      FrontPixel f;
      f.p = {x, y};
      f.normal = front_normal(mask, f.p);
      f.isophote = isophote(canvas.image, mask, f.p, l);
      f.confidence = confidence(canvas.confidence, f.p, l, mask);
      f.data = data_term(f.isophote, f.normal);
      f.priority = priority(f.confidence, f.data);
      front.push_back(f);
    }
  }
  return front;
}

ExemplarSearch::ExemplarSearch(const Canvas& canvas, const MaskRegion& source, int l, SearchMode mode)
    : l_(l), width_(canvas.image.width()) {
  const RasterImage& img = canvas.image;
  const int w = img.width(), h = img.height(), half = l / 2;
  lab_.resize(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto lab = img.channels() >= 3 ? imagery::srgb_to_lab(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2))
                                           : imagery::srgb_to_lab(img.at(x, y, 0), img.at(x, y, 0), img.at(x, y, 0));
      for (int c = 0; c < 3; ++c) lab_[(static_cast<std::size_t>(y) * w + x) * 3 + c] = static_cast<float>(lab[c]);
    }
  }

  std::vector<int> integral(static_cast<std::size_t>(w + 1) * (h + 1), 0);
  auto I = [&](int x, int y) -> int& { return integral[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) I(x + 1, y + 1) = I(x, y + 1) + I(x + 1, y) - I(x, y) + (source.target(x, y) ? 1 : 0);

  Grid<int> dist;
  if (mode == SearchMode::Band) {
    // Chessboard distance to the initial front by breadth-first search.
    dist = Grid<int>(w, h, -1);
    std::vector<Pixel> queue;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (imagery::is_boundary_pixel(source, x, y)) {
          dist(x, y) = 0;
          queue.push_back({x, y});
        }
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const Pixel p = queue[q];
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int x = p.x + dx, y = p.y + dy;
          if (!dist.in_bounds(x, y) || dist(x, y) >= 0) continue;
          dist(x, y) = dist(p) + 1;
          queue.push_back({x, y});
        }
    }
  }
  for (int y = half; y + half < h; ++y) {
    for (int x = half; x + half < w; ++x) {
      const int unknown = I(x + half + 1, y + half + 1) - I(x - half, y + half + 1) - I(x + half + 1, y - half) +
                          I(x - half, y - half);
      if (unknown != 0) continue;
      if (mode == SearchMode::Band && (dist(x, y) < 0 || dist(x, y) > 6 * l)) continue;
      sources_.push_back({x, y});
    }
  }
}

void ExemplarSearch::refresh(const RasterImage& img, const std::vector<Pixel>& written) {
  for (const Pixel p : written) {
    const auto lab = img.channels() >= 3 ? imagery::srgb_to_lab(img.at(p.x, p.y, 0), img.at(p.x, p.y, 1), img.at(p.x, p.y, 2))
                                         : imagery::srgb_to_lab(img.at(p.x, p.y, 0), img.at(p.x, p.y, 0), img.at(p.x, p.y, 0));
    for (int c = 0; c < 3; ++c) lab_[(static_cast<std::size_t>(p.y) * width_ + p.x) * 3 + c] = static_cast<float>(lab[c]);
  }
}

Pixel ExemplarSearch::find(const Canvas& canvas, Pixel p) const {
  if (sources_.empty()) throw StageError("no fully known source window for the exemplar search");
  const int half = l_ / 2;
  struct Tap {
    int dx, dy;
    float v[3];
  };
  std::vector<Tap> taps;
  for (int dy = -half; dy <= half; ++dy) {
    for (int dx = -half; dx <= half; ++dx) {
      const int x = p.x + dx, y = p.y + dy;
      if (!canvas.mask.known(x, y)) continue;
      const float* src = &lab_[(static_cast<std::size_t>(y) * width_ + x) * 3];
      taps.push_back({dx, dy, {src[0], src[1], src[2]}});
    }
  }

  const int n = static_cast<int>(sources_.size());
  const int chunks = std::clamp(static_cast<int>(std::thread::hardware_concurrency()), 1, 16) * 4;
  const int per = (n + chunks - 1) / chunks;
  std::vector<double> best(chunks, std::numeric_limits<double>::infinity());
  std::vector<int> arg(chunks, -1);
  detail::parallel_for(chunks, [&](int c) {
    const int lo = c * per, hi = std::min(n, lo + per);
    double b = std::numeric_limits<double>::infinity();
    int a = -1;
    for (int i = lo; i < hi; ++i) {
      const Pixel s = sources_[i];
      double ssd = 0.0;
      for (const Tap& t : taps) {
        const float* q = &lab_[(static_cast<std::size_t>(s.y + t.dy) * width_ + s.x + t.dx) * 3];
        const double d0 = q[0] - t.v[0], d1 = q[1] - t.v[1], d2 = q[2] - t.v[2];
        ssd += d0 * d0 + d1 * d1 + d2 * d2;
        if (ssd >= b) break;
      }
      if (ssd < b) {
        b = ssd;
        a = i;
      }
    }
    best[c] = b;
    arg[c] = a;
  });
  int winner = -1;
  double wb = std::numeric_limits<double>::infinity();
  for (int c = 0; c < chunks; ++c) {
    if (arg[c] >= 0 && best[c] < wb) {
      wb = best[c];
      winner = arg[c];
    }
  }
  if (winner < 0) winner = 0;
  return sources_[winner];
}

Pixel best_exemplar(const Canvas& canvas, Pixel p, int l, SearchMode mode) {
  return ExemplarSearch(canvas, canvas.mask, l, mode).find(canvas, p);
}

FillResult fill_remaining(Canvas& canvas, const FillParams& params, const SnapshotFn& snapshot) {
  params.validate();
  FillResult result;
  if (canvas.mask.empty()) return result;
  const int l = params.patch, half = l / 2;
  ExemplarSearch search(canvas, canvas.mask, l, params.search);
  if (search.source_count() == 0) throw StageError("no fully known source window for the exemplar search");
  const std::size_t initial = canvas.mask.count();
  std::size_t remaining = initial;

  while (remaining > 0) {
    const auto front = compute_front(canvas, l);
    if (front.empty()) throw StageError("fill stalled: target pixels remain but no front pixel is adjacent to a known pixel");
    const FrontPixel* pick = &front.front();
    for (const auto& f : front)
      if (f.priority > pick->priority) pick = &f;

    const Pixel p = pick->p;
    const Pixel src = search.find(canvas, p);
    const float c = static_cast<float>(pick->confidence);
    std::vector<Pixel> written;
    for (int dy = -half; dy <= half; ++dy) {
      for (int dx = -half; dx <= half; ++dx) {
        const int x = p.x + dx, y = p.y + dy;
        if (!canvas.mask.in_bounds(x, y) || !canvas.mask.target(x, y)) continue;
        for (int ch = 0; ch < canvas.image.channels(); ++ch)
          canvas.image.at(x, y, ch) = canvas.image.at(src.x + dx, src.y + dy, ch);
        canvas.confidence(x, y) = c;
        canvas.mask.set(x, y, false);
        written.push_back({x, y});
      }
    }
    if (written.empty()) throw StageError("fill stalled: selected window has no target pixel");
    search.refresh(canvas.image, written);
    remaining -= written.size();
    result.order.push_back(p);
    result.sources.push_back(src);
    result.step_confidence.push_back(pick->confidence);
    ++result.iterations;
    if (snapshot && params.snapshot_every > 0 && result.iterations % params.snapshot_every == 0)
      snapshot(result.iterations, canvas);
    if (static_cast<std::size_t>(result.iterations) > initial) throw StageError("fill stalled: no progress");
  }
  return result;
}

}  // namespace structfill::fill
