#pragma once

#include <functional>
#include <vector>

#include "structfill/common.hpp"
#include "structfill/imagery.hpp"

namespace structfill::fill {

enum class SearchMode { Full, Band };

struct FillParams {
  int patch = 9;
  SearchMode search = SearchMode::Full;  // Band restricts sources to 6 * patch around the initial front
  int snapshot_every = 0;                // 0 disables snapshots

  void validate() const;
};

struct FrontPixel {
  Pixel p;
  Vec2 normal;
  Vec2 isophote;
  double confidence = 0.0;
  double data = 0.0;
  double priority = 0.0;
};

/// Sum of confidences of the known pixels in the l x l window, over l^2.
double confidence(const Grid<float>& cmap, Pixel p, int l, const imagery::MaskRegion& mask);

/// Unit normal of the front at p, pointing into the target region.
Vec2 front_normal(const imagery::MaskRegion& mask, Pixel p);

/// Strongest gradient among the known pixels of the window, turned a quarter.
Vec2 isophote(const imagery::RasterImage& img, const imagery::MaskRegion& mask, Pixel p, int l);

double data_term(Vec2 isophote, Vec2 normal);

inline double priority(double c, double d) { return c * d; }

/// Every front pixel in row-major order with its terms filled in.
std::vector<FrontPixel> compute_front(const imagery::Canvas& canvas, int l);

/// Exhaustive SSD (Lab) search over windows that are fully known in `source`.
class ExemplarSearch {
 public:
  ExemplarSearch(const imagery::Canvas& canvas, const imagery::MaskRegion& source, int l, SearchMode mode);

  /// Centre of the best source window for the target window at p; ties go to the first in row-major order.
  Pixel find(const imagery::Canvas& canvas, Pixel p) const;
  /// Keeps the cached Lab values in step after pixels were written.
  void refresh(const imagery::RasterImage& img, const std::vector<Pixel>& written);
  std::size_t source_count() const { return sources_.size(); }

 private:
  int l_;
  int width_;
  std::vector<float> lab_;
  std::vector<Pixel> sources_;
};

Pixel best_exemplar(const imagery::Canvas& canvas, Pixel p, int l, SearchMode mode = SearchMode::Full);

struct FillResult {
  int iterations = 0;
  std::vector<Pixel> order;                // front pixel picked at each step
  std::vector<Pixel> sources;              // exemplar centre used at each step
  std::vector<double> step_confidence;     // C(p) at each step
};

using SnapshotFn = std::function<void(int iteration, const imagery::Canvas&)>;

/// Priority-ordered exemplar fill until no target pixel remains.
FillResult fill_remaining(imagery::Canvas& canvas, const FillParams& params, const SnapshotFn& snapshot = {});

}  // namespace structfill::fill
