#pragma once

#include <functional>
#include <vector>

#include "structfill/common.hpp"
#include "structfill/imagery.hpp"

namespace structfill::contours {

struct GpbParams {
  double sigma = 2.0;    // Gaussian scale of the derivative kernels, px
  double beta = 1.0;     // weight of the local (mPb) cue
  double gamma = 0.0;    // weight of the spectral (sPb) cue
  int orientations = 8;  // evenly spaced over [0, pi)
  int radius = 5;        // half-disc radius, px
  int bins = 16;         // histogram bins per half-disc and channel

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Oriented boundary signal: per-orientation grids plus their pointwise maximum.
struct EdgeSignal {
  Grid<float> magnitude;
  std::vector<Grid<float>> oriented;

  int orientations() const { return static_cast<int>(oriented.size()); }
  double angle(int i) const { return kPi * i / static_cast<double>(oriented.size()); }
};

/// Optional spectral cue; must return one grid per orientation.
using SpectralDetector =
    std::function<std::vector<Grid<float>>(const imagery::ChannelStack&, int orientations)>;

/// Gradient magnitude of the Gaussian-derivative responses, kernel truncated
/// at 3 sigma, clamp-to-edge borders.
Grid<float> gaussian_derivative_edges(const Grid<float>& channel, double sigma);

/// Sum over the four channels of the chi-squared distance between the
/// histograms of the two half-discs split by a diameter at angle theta.
/// When `known` is given, target pixels are left out of both histograms.
Grid<float> oriented_gradient(const imagery::ChannelStack& stack, double theta, int radius,
                              int bins = 16, const imagery::MaskRegion* known = nullptr);

EdgeSignal gpb(const imagery::ChannelStack& stack, const GpbParams& params,
               const SpectralDetector& spectral = {}, const imagery::MaskRegion* known = nullptr);

struct ContourArc {
  int id = 0;
  std::vector<Pixel> pixels;
  int region_a = 0;  // initial watershed regions on either side, region_a < region_b
  int region_b = 0;
  double mean_signal = 0.0;  // mean oriented response along the arc, normalised by the strongest arc
  double strength = 0.0;     // level in [0,1] at which the arc disappears
};

struct Merge {
  double level = 0.0;
  int a = 0;  // cluster representatives (initial region ids) at merge time
  int b = 0;
};

/// Ultrametric contour map over the known region.
class ContourHierarchy {
 public:
  static constexpr int kRidge = -1;
  static constexpr int kTarget = -2;

  ContourHierarchy() = default;
  ContourHierarchy(Grid<int> labels, int region_count, std::vector<ContourArc> arcs,
                   std::vector<Merge> merges);

  int width() const { return labels_.width(); }
  int height() const { return labels_.height(); }
  /// Initial watershed labels: >= 0 region id, kRidge on watershed lines, kTarget inside the hole.
  const Grid<int>& labels() const { return labels_; }
  int region_count() const { return region_count_; }
  const std::vector<ContourArc>& arcs() const { return arcs_; }
  const std::vector<Merge>& merges() const { return merges_; }

  /// Map from initial region id to the representative id of its cluster at threshold t.
  std::vector<int> clusters_at(double t) const;
  /// Per-pixel cluster ids at threshold t; ridge and target pixels keep their sentinels.
  Grid<int> regions_at(double t) const;
  int region_count_at(double t) const;

 private:
  Grid<int> labels_;
  int region_count_ = 0;
  std::vector<ContourArc> arcs_;
  std::vector<Merge> merges_;
};

ContourHierarchy build_hierarchy(const EdgeSignal& signal, const imagery::MaskRegion& mask);

/// Arcs with strength strictly greater than t.
std::vector<const ContourArc*> contours_at(const ContourHierarchy& hier, double t);

}  // namespace structfill::contours
