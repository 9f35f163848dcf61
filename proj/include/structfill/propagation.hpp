#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "structfill/common.hpp"
#include "structfill/imagery.hpp"
#include "structfill/structure.hpp"

namespace structfill::propagation {

struct PropagationParams {
  int patch = 9;                // l, odd
  int m_max = 400;              // candidate cap
  int band = 0;                 // px around the boundary front; 0 means 4 * patch
  double delta = 1e-3;          // relative message change for convergence
  int max_iter = 50;
  double damping = 0.5;
  int rotations = 6;            // how many entries of kRotations are searched
  int label_cap = 64;           // labels kept per anchor before building edge tables; 0 keeps all
  bool literal_penalty = false; // SSD * P / lambda instead of mean SSD / P
  std::uint64_t seed = 0;

  int band_px() const { return band > 0 ? band : 4 * patch; }
  double free_energy() const { return 10.0 * patch * patch; }
  void validate() const;
};

/// Rotation set, ordered so that the first k entries form a useful subset.
inline constexpr std::array<double, 6> kRotations{0.0, kPi, kPi / 2, -kPi / 2, kPi / 4, -kPi / 4};

struct AnchorPoint {
  Pixel center;
  Vec2 position;   // exact point on the curve
  int curve_ref = 0;
  int index = 0;   // position along its curve
  imagery::PatchWindow patch;
};

struct CandidatePatch {
  int id = 0;  // 1-based
  Pixel source_center;
};

/// Candidate resampled under one rotation: l x l RGB values plus a validity flag
/// per pixel (bilinear taps that fall on unknown pixels are invalid).
struct RotatedBlock {
  int side = 0;
  int channels = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> valid;

  float value(int u, int v, int c) const { return values[(static_cast<std::size_t>(v) * side + u) * channels + c]; }
  bool ok(int u, int v) const { return valid[static_cast<std::size_t>(v) * side + u] != 0; }
};

struct Label {
  int candidate = 0;  // index into the candidate list
  int rotation = 0;   // index into kRotations

  double theta() const { return kRotations[rotation]; }
  friend bool operator==(const Label&, const Label&) = default;
};

/// Discrete pairwise energy model: per-vertex unary tables and per-edge tables.
struct LabelGraph {
  struct Edge {
    int a = 0;
    int b = 0;
    std::vector<double> table;  // row-major, labels(a) x labels(b)
  };
  std::vector<std::vector<double>> unary;
  std::vector<Edge> edges;

  int vertex_count() const { return static_cast<int>(unary.size()); }
  int labels(int v) const { return static_cast<int>(unary[v].size()); }
  double energy(const std::vector<int>& assignment) const;
  std::vector<std::vector<int>> neighbours() const;
  /// Vertex order of a simple path, or empty when the graph is not a single path.
  std::vector<int> path_order() const;
};

struct Solution {
  std::vector<int> labels;
  double energy = 0.0;
  bool converged = true;
  int iterations = 0;
  std::vector<double> trace;  // best-so-far energy per iteration
};

/// Exact min-sum dynamic programming along the given vertex order; consecutive
/// vertices must be joined by an edge and no other edges may exist.
Solution solve_chain(const LabelGraph& graph, const std::vector<int>& order);

/// Damped synchronous min-sum belief propagation, messages starting at zero.
Solution solve_bp(const LabelGraph& graph, double delta, int max_iter, double damping);

/// Exhaustive enumeration, for small graphs.
Solution solve_brute_force(const LabelGraph& graph);

std::vector<AnchorPoint> place_anchors(const structure::StructureCurve& curve, int l, int curve_ref = 0);

std::vector<CandidatePatch> collect_candidates(const imagery::RasterImage& img, const imagery::MaskRegion& mask,
                                               int l, int band, int cap, std::uint64_t seed);

RotatedBlock rotate_candidate(const imagery::Canvas& canvas, const CandidatePatch& cand, double theta, int l);

double node_energy(const AnchorPoint& anchor, const RotatedBlock& block, const imagery::Canvas& canvas,
                   const PropagationParams& params);

double pairwise_energy(const AnchorPoint& ai, const RotatedBlock& bi, const AnchorPoint& aj,
                       const RotatedBlock& bj, const PropagationParams& params);

struct StructureGraph {
  std::vector<AnchorPoint> anchors;
  std::vector<std::pair<int, int>> edges;  // a < b
  std::vector<std::vector<int>> adjacency;
};

/// Anchors of all curves; where two curves cross, their closest anchors are
/// merged into one shared vertex.
StructureGraph build_graph(const std::vector<structure::StructureCurve>& curves, int l);

struct PatchAssignment {
  std::vector<Label> labels;  // per anchor
  double total_energy = 0.0;
  bool converged = true;
  std::vector<std::vector<double>> traces;  // best-so-far energy per iteration, per graph component
};

/// Precomputed rotated blocks for every candidate and rotation.
class BlockBank {
 public:
  BlockBank(const imagery::Canvas& canvas, const std::vector<CandidatePatch>& cands, const PropagationParams& params);
  const RotatedBlock& at(const Label& label) const { return blocks_[label.candidate * rotations_ + label.rotation]; }
  int label_count() const { return static_cast<int>(blocks_.size()); }
  Label label(int i) const { return {i / rotations_, i % rotations_}; }

 private:
  int rotations_ = 1;
  std::vector<RotatedBlock> blocks_;
};

/// Exact DP over a path of anchors (no label pruning).
PatchAssignment optimize_chain(const std::vector<AnchorPoint>& anchors, const BlockBank& bank,
                               const imagery::Canvas& canvas, const PropagationParams& params);

/// Loopy BP over the structure graph (no label pruning).
PatchAssignment optimize_graph(const StructureGraph& graph, const BlockBank& bank, const imagery::Canvas& canvas,
                               const PropagationParams& params);

/// Re-evaluates node plus edge energies of an assignment from scratch.
double assignment_energy(const StructureGraph& graph, const BlockBank& bank, const imagery::Canvas& canvas,
                         const std::vector<Label>& labels, const PropagationParams& params);

/// Writes the chosen patches, feathered by distance to each patch centre.
void paste_assignment(imagery::Canvas& canvas, const std::vector<AnchorPoint>& anchors, const BlockBank& bank,
                      const std::vector<Label>& labels);

struct PropagationResult {
  StructureGraph graph;
  std::vector<CandidatePatch> candidates;
  PatchAssignment assignment;
  double recomputed_energy = 0.0;
  std::vector<std::string> warnings;
};

/// Whole stage: anchors, candidates, per-component DP or BP, pasting.
PropagationResult propagate(imagery::Canvas& canvas, const std::vector<structure::StructureCurve>& curves,
                            const PropagationParams& params);

}  // namespace structfill::propagation
