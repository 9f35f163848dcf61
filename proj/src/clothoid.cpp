#include "structfill/clothoid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace structfill::structure {

namespace {

// 5-point Gauss-Legendre nodes and weights on [-1, 1].
constexpr std::array<double, 5> kGlNodes{-0.9061798459386640, -0.5384693101056831, 0.0,
                                         0.5384693101056831, 0.9061798459386640};
constexpr std::array<double, 5> kGlWeights{0.2369268850561891, 0.4786286704993665,
                                           0.5688888888888889, 0.4786286704993665,
                                           0.2369268850561891};

double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

}  // namespace

Vec2 Clothoid::point_at(double s) const {
  if (s <= 0.0) return {};
  const int n = std::max(2, static_cast<int>(std::ceil(s)));
  const double h = s / n;
  Vec2 acc;
  for (int i = 0; i < n; ++i) {
    const double mid = (i + 0.5) * h;
    for (std::size_t k = 0; k < kGlNodes.size(); ++k) {
      const double u = mid + 0.5 * h * kGlNodes[k];
      const double th = turn_at(u);
      acc.x += kGlWeights[k] * std::cos(th);
      acc.y += kGlWeights[k] * std::sin(th);
    }
  }
  return acc * (0.5 * h);
}

ClothoidChain::ClothoidChain(CurveState start, std::vector<Clothoid> pieces)
    : start_(start), pieces_(std::move(pieces)) {
  if (pieces_.empty()) throw std::invalid_argument("clothoid chain needs at least one piece");
  CurveState cur = start_;
  double offset = 0.0;
  for (const auto& piece : pieces_) {
    if (!(piece.length >= 0.0)) throw std::invalid_argument("negative clothoid length");
    cur.curvature = piece.kappa0;
    piece_starts_.push_back(cur);
    offsets_.push_back(offset);
    cur.position += rotate(piece.point_at(piece.length), cur.heading);
    cur.heading += piece.turn_at(piece.length);
    offset += piece.length;
  }
  total_ = offset;
}

CurveState ClothoidChain::state_at(double s) const {
  s = std::clamp(s, 0.0, total_);
  std::size_t i = pieces_.size() - 1;
  while (i > 0 && offsets_[i] > s) --i;
  const Clothoid& piece = pieces_[i];
  const CurveState& base = piece_starts_[i];
  const double local = std::min(s - offsets_[i], piece.length);
  CurveState out;
  out.position = base.position + rotate(piece.point_at(local), base.heading);
  out.heading = base.heading + piece.turn_at(local);
  out.curvature = piece.kappa_at(local);
  return out;
}

std::vector<double> ClothoidChain::join_discontinuities() const {
  std::vector<double> jumps;
  for (std::size_t i = 1; i < pieces_.size(); ++i) {
    const auto& prev = pieces_[i - 1];
    jumps.push_back(pieces_[i].kappa0 - prev.kappa_at(prev.length));
  }
  return jumps;
}

double bending_energy(const ClothoidChain& chain) {
  double e = 0.0;
  for (const auto& p : chain.pieces()) {
    const double a = p.kappa0, b = p.kappa_at(p.length);
    e += p.length * (a * a + a * b + b * b) / 3.0;
  }
  return e;
}

namespace {

struct Unknowns {
  double k1, k2, length;
};

ClothoidChain make_chain(const CurveState& from, const CurveState& to, const Unknowns& u) {
  const double seg = u.length / 3.0;
  const std::array<double, 4> knots{from.curvature, u.k1, u.k2, to.curvature};
  std::vector<Clothoid> pieces;
  for (int i = 0; i < 3; ++i) pieces.push_back({knots[i], (knots[i + 1] - knots[i]) / seg, seg});
  return ClothoidChain(from, std::move(pieces));
}

/// Position residual in px, heading residual scaled by the chord so both are commensurate.
std::array<double, 3> residual(const CurveState& from, const CurveState& to, const Unknowns& u,
                               double turn, double chord) {
  const double seg = u.length / 3.0;
  const std::array<double, 4> knots{from.curvature, u.k1, u.k2, to.curvature};
  double total_turn = 0.0;
  for (int i = 0; i < 3; ++i) total_turn += 0.5 * (knots[i] + knots[i + 1]) * seg;
  const CurveState end = make_chain(from, to, u).end();
  return {end.position.x - to.position.x, end.position.y - to.position.y,
          (total_turn - turn) * chord};
}

double sq_norm(const std::array<double, 3>& r) { return r[0] * r[0] + r[1] * r[1] + r[2] * r[2]; }

bool solve3(std::array<std::array<double, 3>, 3> a, std::array<double, 3> b, std::array<double, 3>& x) {
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) < 1e-14) return false;
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (int r = col + 1; r < 3; ++r) {
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < 3; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  for (int r = 2; r >= 0; --r) {
    double s = b[r];
    for (int c = r + 1; c < 3; ++c) s -= a[r][c] * x[c];
    x[r] = s / a[r][r];
  }
  return true;
}

}  // namespace

std::vector<ClothoidChain> solve_g2_chains(const CurveState& from, const CurveState& to,
                                           double max_length_ratio) {
  const double chord = (to.position - from.position).norm();
  std::vector<ClothoidChain> solutions;
  if (chord < 1e-9) return solutions;
  const double turn = wrap_angle(to.heading - from.heading);

  for (const double ratio : {1.0, 1.15, 1.4, 1.8, 2.4}) {
    Unknowns u{0.0, 0.0, chord * ratio};
    // Start from the knot values that already satisfy the heading equation.
    const double mean_inner = (3.0 * turn / u.length - 0.5 * (from.curvature + to.curvature)) / 2.0;
    u.k1 = u.k2 = mean_inner;

    auto r = residual(from, to, u, turn, chord);
    bool converged = false;
    for (int iter = 0; iter < 60; ++iter) {
      if (std::sqrt(r[0] * r[0] + r[1] * r[1]) < 1e-9 && std::abs(r[2]) < 1e-9 * chord) {
        converged = true;
        break;
      }
      std::array<std::array<double, 3>, 3> jac{};
      const std::array<double, 3> steps{1e-6, 1e-6, 1e-6 * chord};
      for (int j = 0; j < 3; ++j) {
        Unknowns lo = u, hi = u;
        double* plo = j == 0 ? &lo.k1 : (j == 1 ? &lo.k2 : &lo.length);
        double* phi = j == 0 ? &hi.k1 : (j == 1 ? &hi.k2 : &hi.length);
        *plo -= steps[j];
        *phi += steps[j];
        const auto rl = residual(from, to, lo, turn, chord);
        const auto rh = residual(from, to, hi, turn, chord);
        for (int i = 0; i < 3; ++i) jac[i][j] = (rh[i] - rl[i]) / (2.0 * steps[j]);
      }
      std::array<double, 3> delta{};
      if (!solve3(jac, {-r[0], -r[1], -r[2]}, delta)) break;
      double lambda = 1.0;
      bool improved = false;
      for (int ls = 0; ls < 30; ++ls) {
        Unknowns trial{u.k1 + lambda * delta[0], u.k2 + lambda * delta[1],
                       u.length + lambda * delta[2]};
        if (trial.length > 0.2 * chord) {
          const auto rt = residual(from, to, trial, turn, chord);
          if (sq_norm(rt) < sq_norm(r)) {
            u = trial;
            r = rt;
            improved = true;
            break;
          }
        }
        lambda *= 0.5;
      }
      if (!improved) break;
    }
    if (!converged || u.length > max_length_ratio * chord) continue;

    ClothoidChain chain = make_chain(from, to, u);
    bool duplicate = false;
    for (const auto& s : solutions)
      if (std::abs(s.length() - chain.length()) < 1e-6) duplicate = true;
    if (!duplicate) solutions.push_back(std::move(chain));
  }
  std::sort(solutions.begin(), solutions.end(), [](const auto& a, const auto& b) {
    return bending_energy(a) < bending_energy(b);
  });
  return solutions;
}

}  // namespace structfill::structure
