#pragma once

#include <vector>

#include "structfill/common.hpp"

namespace structfill::structure {

/// Arc of constant curvature rate: kappa(s) = kappa0 + rate * s for s in [0, length].
struct Clothoid {
  double kappa0 = 0.0;
  double rate = 0.0;
  double length = 0.0;

  double kappa_at(double s) const { return kappa0 + rate * s; }
  /// Heading change after arc length s.
  double turn_at(double s) const { return kappa0 * s + 0.5 * rate * s * s; }
  /// Position after arc length s in the canonical frame (start at origin, heading +x).
  Vec2 point_at(double s) const;
};

struct CurveState {
  Vec2 position;
  double heading = 0.0;  // radians
  double curvature = 0.0;
};

/// Clothoids placed end to end; each piece is rotated and translated onto the
/// end state of its predecessor.
class ClothoidChain {
 public:
  ClothoidChain(CurveState start, std::vector<Clothoid> pieces);

  double length() const { return total_; }
  const std::vector<Clothoid>& pieces() const { return pieces_; }
  CurveState start() const { return start_; }
  CurveState state_at(double s) const;
  CurveState end() const { return state_at(total_); }
  /// Curvature jump at each interior join.
  std::vector<double> join_discontinuities() const;

 private:
  CurveState start_;
  std::vector<Clothoid> pieces_;
  std::vector<CurveState> piece_starts_;
  std::vector<double> offsets_;
  double total_ = 0.0;
};

/// G2 two-point interpolation with three equal-length clothoids whose
/// curvature is continuous at the joins. The two interior knot curvatures and
/// the total length are solved by Newton iteration from several starting
/// lengths; converged chains no longer than `max_length_ratio` times the chord
/// are returned, smoothest (least integral of squared curvature) first.
std::vector<ClothoidChain> solve_g2_chains(const CurveState& from, const CurveState& to,
                                           double max_length_ratio = 3.0);

double bending_energy(const ClothoidChain& chain);

}  // namespace structfill::structure
