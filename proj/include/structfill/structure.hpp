#pragma once

#include <array>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "structfill/clothoid.hpp"
#include "structfill/common.hpp"
#include "structfill/contours.hpp"
#include "structfill/imagery.hpp"

namespace structfill::structure {

/// Tunables of the edge collection, pairing and curve generation steps.
struct StructureParams {
  double t_init = 1.0;
  double dt = 0.05;
  double delta_t = 0.1;               // sweep floor
  double delta_h = std::log(2.0);     // per-region divergence limit, half of the 2 ln 2 range
  double eps_l = 0.05;                // strength-difference floor
  double kappa_u = 1.5 * std::log(2.0);  // cost of leaving a terminal unmatched
  double sample_spacing = 3.0;        // px between curvature samples on the source arcs
  double eps_fit = 1.5;               // px, max deviation of a polyline segment
  double seg_penalty = 2.0;
  int tangent_window = 10;            // px of arc used for the tangent fit
  int trace_length = 40;              // px of arc centreline kept per terminal
  double twin_gap = 6.0;              // px; parallel terminals this close are fused (0 disables)
  double max_end_curvature = 0.1;     // px^-1 clamp on estimated boundary curvature
  double escape_tolerance = 2.0;      // px a curve may leave the target region
  double join_tolerance = 0.05;       // px^-1 allowed curvature jump at joins
  double min_chord = 3.0;             // px; terminals closer than this are never paired

  void validate() const;
};

struct RegionHistogram {
  static constexpr int kBinsPerChannel = 16;
  static constexpr int kBins = 3 * kBinsPerChannel;
  std::array<double, kBins> bins{};
};

struct EdgeTerminal {
  Pixel hit_point;           // target pixel on the boundary front
  Vec2 tangent;              // unit, pointing into the target region
  double strength = 0.0;     // hierarchy level of the source arc
  double curvature = 0.0;    // signed boundary curvature, travelling into the target region
  int arc_ref = -1;          // source arc id (-1 for fused twins)
  std::array<int, 2> flank_regions{-1, -1};  // cluster ids at the emergence level
  double emergence_level = 0.0;
  std::array<RegionHistogram, 2> flank_histograms{};
  int component = 0;         // boundary contour index
  double boundary_position = 0.0;  // index along the traced boundary contour
  /// Arc centreline at 1 px steps, starting next to the hit point and walking away from the hole.
  std::vector<Vec2> trace;
};

struct EdgePair {
  EdgeTerminal source;
  EdgeTerminal target;
  double cost = 0.0;
};

struct StructureCurve {
  std::vector<Vec2> samples;      // ~1 px spacing, source hit point to target hit point
  std::vector<double> headings;   // radians
  std::vector<double> curvatures; // signed, px^-1
  double length = 0.0;
  std::vector<double> join_jumps; // curvature discontinuities at interior joins
  bool fallback = false;          // quintic Hermite used instead of the clothoid chain
  EdgePair pair;
};

inline constexpr double kNoMatch = std::numeric_limits<double>::infinity();

/// Sweeps the hierarchy threshold downward and emits one terminal per place
/// an emerging arc meets the hole boundary.
std::vector<EdgeTerminal> collect_terminals(const contours::ContourHierarchy& hier,
                                            const imagery::MaskRegion& mask,
                                            const imagery::RasterImage& img,
                                            const StructureParams& params);

/// Bin index of a Lab colour in the concatenated 48-bin histogram, per channel.
std::array<int, 3> histogram_bins(std::uint8_t r, std::uint8_t g, std::uint8_t b);

RegionHistogram region_histogram(const imagery::RasterImage& img, std::span<const Pixel> region);

/// Jensen-Shannon style divergence in [0, 2 ln 2] (natural log).
double js_divergence(std::span<const double> h1, std::span<const double> h2);
double js_divergence(const RegionHistogram& h1, const RegionHistogram& h2);

/// Pairing cost of two terminals; kNoMatch when the best flank correspondence
/// has a region divergence above delta_h.
double pair_cost(const EdgeTerminal& s, const EdgeTerminal& t, const StructureParams& params);

struct Matching {
  std::vector<std::pair<int, int>> pairs;  // indices into the circular order, i < j
  double cost = 0.0;                       // sum of pair costs plus unmatched penalties
};

/// Minimum-cost non-crossing partial matching of n points on a circle by
/// interval DP. `cost` is row-major n x n; kNoMatch entries are never chosen.
Matching solve_noncrossing_matching(std::span<const double> cost, int n, double unmatched_cost);

/// Orders terminals along the boundary, matches them per boundary contour and
/// returns the pairs sorted by cost.
std::vector<EdgePair> match_pairs(const std::vector<EdgeTerminal>& terminals,
                                  const StructureParams& params);

/// Signed curvature of the circle through three points.
double menger_curvature(Vec2 p0, Vec2 p1, Vec2 p2);

/// Vertex indices of the polyline minimising the summed per-segment maximum
/// deviation plus seg_penalty per segment, subject to deviation <= eps_fit.
std::vector<int> fit_polyline(std::span<const Vec2> points, double seg_penalty,
                              double eps_fit = std::numeric_limits<double>::infinity());

/// Boundary curvature of a terminal from its arc trace: Menger curvature at
/// the first interior vertex of the fitted polyline, in the travel direction.
double estimate_end_curvature(const EdgeTerminal& t, const StructureParams& params);

struct CurveResult {
  std::optional<StructureCurve> curve;
  std::string warning;  // set when the pair was dropped
};

CurveResult generate_curve(const EdgePair& pair, const imagery::MaskRegion& mask,
                           const StructureParams& params);

/// Checks the endpoint, tangent, containment and curvature-join invariants.
/// Returns an empty string when all hold, otherwise a description of the first failure.
std::string check_curve(const StructureCurve& curve, const imagery::MaskRegion& mask,
                        const StructureParams& params);

}  // namespace structfill::structure
