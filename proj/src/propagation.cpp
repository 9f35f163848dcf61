#include "structfill/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "parallel.hpp"

namespace structfill::propagation {

using imagery::Canvas;
using imagery::MaskRegion;
using imagery::RasterImage;
using structure::StructureCurve;

void PropagationParams::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(patch >= 5 && patch <= 51 && patch % 2 == 1, "patch_size must be odd and in [5, 51]");
  require(m_max >= 1 && m_max <= 5000, "propagation.m_max must be in [1, 5000]");
  require(band == 0 || band >= patch, "propagation.band must be 0 (auto) or >= patch_size");
  require(delta > 0.0 && delta < 1.0, "propagation.delta must be in (0, 1)");
  require(max_iter >= 1 && max_iter <= 10000, "propagation.max_iter must be in [1, 10000]");
  require(damping >= 0.0 && damping < 1.0, "propagation.damping must be in [0, 1)");
  require(rotations >= 1 && rotations <= 6, "propagation.rotations must be in [1, 6]");
  require(label_cap >= 0, "propagation.label_cap must be >= 0");
}

// ---------------------------------------------------------------- label graphs

double LabelGraph::energy(const std::vector<int>& x) const {
  double e = 0.0;
  for (int v = 0; v < vertex_count(); ++v) e += unary[v][x[v]];
  for (const auto& edge : edges) e += edge.table[static_cast<std::size_t>(x[edge.a]) * labels(edge.b) + x[edge.b]];
  return e;
}

std::vector<std::vector<int>> LabelGraph::neighbours() const {
  std::vector<std::vector<int>> adj(vertex_count());
  for (const auto& e : edges) {
    adj[e.a].push_back(e.b);
    adj[e.b].push_back(e.a);
  }
  return adj;
}

std::vector<int> LabelGraph::path_order() const {
  const int n = vertex_count();
  if (n == 0) return {};
  if (static_cast<int>(edges.size()) != n - 1) return {};
  const auto adj = neighbours();
  int start = -1;
  for (int v = 0; v < n; ++v) {
    if (adj[v].size() > 2) return {};
    if (start < 0 && adj[v].size() <= 1) start = v;
  }
  if (start < 0) return {};
  std::vector<int> order{start};
  std::vector<char> seen(n, 0);
  seen[start] = 1;
  while (true) {
    int next = -1;
    for (const int w : adj[order.back()])
      if (!seen[w]) next = w;
    if (next < 0) break;
    seen[next] = 1;
    order.push_back(next);
  }
  if (static_cast<int>(order.size()) != n) return {};
  return order;
}

namespace {

/// Edge table lookup with orientation handled: cost of (label of u, label of v).
struct EdgeView {
  const LabelGraph::Edge* edge = nullptr;
  bool forward = true;
  int lb = 0;
  double operator()(int xu, int xv) const {
    return forward ? edge->table[static_cast<std::size_t>(xu) * lb + xv]
                   : edge->table[static_cast<std::size_t>(xv) * lb + xu];
  }
};

EdgeView view(const LabelGraph& g, int ei, int from) {
  const auto& e = g.edges[ei];
  return {&e, e.a == from, g.labels(e.b)};
}

int argmin(const std::vector<double>& v) {
  return static_cast<int>(std::min_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

Solution solve_chain(const LabelGraph& graph, const std::vector<int>& order) {
  const int n = static_cast<int>(order.size());
  if (n == 0) throw std::invalid_argument("empty chain");
  for (int v = 0; v < graph.vertex_count(); ++v)
    if (graph.labels(v) == 0) throw StageError("vertex without labels");
  if (static_cast<int>(graph.edges.size()) != n - 1) throw std::invalid_argument("graph is not a chain");
  std::map<std::pair<int, int>, int> edge_of;
  for (int i = 0; i < static_cast<int>(graph.edges.size()); ++i) {
    const auto& e = graph.edges[i];
    edge_of[{std::min(e.a, e.b), std::max(e.a, e.b)}] = i;
  }

  std::vector<std::vector<double>> xi(n);
  std::vector<std::vector<int>> back(n);
  xi[0] = graph.unary[order[0]];
  for (int i = 1; i < n; ++i) {
    const int u = order[i - 1], v = order[i];
    auto it = edge_of.find({std::min(u, v), std::max(u, v)});
    if (it == edge_of.end()) throw std::invalid_argument("chain order skips an edge");
    const EdgeView e = view(graph, it->second, u);
    const int lu = graph.labels(u), lv = graph.labels(v);
    xi[i].assign(lv, 0.0);
    back[i].assign(lv, 0);
    for (int t = 0; t < lv; ++t) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int s = 0; s < lu; ++s) {
        const double c = xi[i - 1][s] + e(s, t);
        if (c < best) {
          best = c;
          arg = s;
        }
      }
      xi[i][t] = graph.unary[v][t] + best;
      back[i][t] = arg;
    }
  }
  Solution sol;
  sol.labels.assign(graph.vertex_count(), 0);
  int t = argmin(xi[n - 1]);
  for (int i = n - 1; i >= 0; --i) {
    sol.labels[order[i]] = t;
    if (i > 0) t = back[i][t];
  }
  sol.energy = graph.energy(sol.labels);
  sol.iterations = 1;
  sol.trace = {sol.energy};
  return sol;
}

Solution solve_bp(const LabelGraph& graph, double delta, int max_iter, double damping) {
  const int n = graph.vertex_count();
  if (n == 0) throw std::invalid_argument("empty graph");
  for (int v = 0; v < n; ++v)
    if (graph.labels(v) == 0) throw StageError("vertex without labels");
  const int m = static_cast<int>(graph.edges.size());
  // msg[2e] flows a -> b (indexed by labels of b), msg[2e+1] flows b -> a.
  std::vector<std::vector<double>> msg(2 * m);
  for (int e = 0; e < m; ++e) {
    msg[2 * e].assign(graph.labels(graph.edges[e].b), 0.0);
    msg[2 * e + 1].assign(graph.labels(graph.edges[e].a), 0.0);
  }
  std::vector<std::vector<int>> incident(n);  // directed message ids arriving at v
  for (int e = 0; e < m; ++e) {
    incident[graph.edges[e].b].push_back(2 * e);
    incident[graph.edges[e].a].push_back(2 * e + 1);
  }

  auto beliefs = [&](int v) {
    std::vector<double> b = graph.unary[v];
    for (const int id : incident[v])
      for (std::size_t t = 0; t < b.size(); ++t) b[t] += msg[id][t];
    return b;
  };
  auto decode = [&] {
    std::vector<int> x(n);
    for (int v = 0; v < n; ++v) x[v] = argmin(beliefs(v));
    return x;
  };

  Solution sol;
  sol.labels = decode();
  sol.energy = graph.energy(sol.labels);
  sol.converged = false;
  for (int iter = 1; iter <= max_iter; ++iter) {
    std::vector<std::vector<double>> next(2 * m);
    for (int e = 0; e < m; ++e) {
      for (int dir = 0; dir < 2; ++dir) {
        const int from = dir == 0 ? graph.edges[e].a : graph.edges[e].b;
        const int to = dir == 0 ? graph.edges[e].b : graph.edges[e].a;
        const int reverse = 2 * e + (1 - dir);
        std::vector<double> h = beliefs(from);
        for (std::size_t t = 0; t < h.size(); ++t) h[t] -= msg[reverse][t];
        const EdgeView ev = view(graph, e, from);
        std::vector<double> out(graph.labels(to), std::numeric_limits<double>::infinity());
        for (int tj = 0; tj < graph.labels(to); ++tj)
          for (int ti = 0; ti < graph.labels(from); ++ti) out[tj] = std::min(out[tj], h[ti] + ev(ti, tj));
        const double lo = *std::min_element(out.begin(), out.end());
        for (auto& o : out) o -= lo;
        next[2 * e + dir] = std::move(out);
      }
    }
    double change = 0.0, scale = 1.0;
    for (int id = 0; id < 2 * m; ++id) {
      for (std::size_t t = 0; t < next[id].size(); ++t) {
        const double damped = damping * msg[id][t] + (1.0 - damping) * next[id][t];
        change = std::max(change, std::abs(damped - msg[id][t]));
        scale = std::max(scale, std::abs(damped));
        next[id][t] = damped;
      }
    }
    msg = std::move(next);
    const auto x = decode();
    const double e = graph.energy(x);
    if (e < sol.energy) {
      sol.energy = e;
      sol.labels = x;
    }
    sol.trace.push_back(sol.energy);
    sol.iterations = iter;
    if (change < delta * scale) {
      sol.converged = true;
      break;
    }
  }
  return sol;
}

Solution solve_brute_force(const LabelGraph& graph) {
  const int n = graph.vertex_count();
  std::vector<int> x(n, 0);
  Solution sol;
  sol.energy = std::numeric_limits<double>::infinity();
  while (true) {
    const double e = graph.energy(x);
    if (e < sol.energy) {
      sol.energy = e;
      sol.labels = x;
    }
    int v = n - 1;
    while (v >= 0 && ++x[v] == graph.labels(v)) x[v--] = 0;
    if (v < 0) break;
  }
  return sol;
}

// ---------------------------------------------------------------- anchors and candidates

std::vector<AnchorPoint> place_anchors(const StructureCurve& curve, int l, int curve_ref) {
  if (curve.samples.size() < 2) throw std::invalid_argument("curve needs at least two samples");
  const double step = std::max(1, l / 4);
  std::vector<double> cum{0.0};
  for (std::size_t i = 1; i < curve.samples.size(); ++i)
    cum.push_back(cum.back() + (curve.samples[i] - curve.samples[i - 1]).norm());
  const double total = cum.back();

  auto point_at = [&](double s) {
    const auto it = std::upper_bound(cum.begin(), cum.end(), s);
    const std::size_t i = std::clamp<std::size_t>(it - cum.begin(), 1, cum.size() - 1);
    const double span = cum[i] - cum[i - 1];
    const double f = span > 0.0 ? (s - cum[i - 1]) / span : 0.0;
    return curve.samples[i - 1] + (curve.samples[i] - curve.samples[i - 1]) * f;
  };
  auto make = [&](Vec2 p, int index) {
    AnchorPoint a;
    a.position = p;
    a.center = round_to_pixel(p);
    a.curve_ref = curve_ref;
    a.index = index;
    a.patch = {a.center, l};
    return a;
  };

  std::vector<AnchorPoint> anchors;
  for (int k = 0; k * step < total - 1e-9; ++k) anchors.push_back(make(point_at(k * step), k));
  anchors.push_back(make(curve.samples.back(), static_cast<int>(anchors.size())));
  return anchors;
}

std::vector<CandidatePatch> collect_candidates(const RasterImage& img, const MaskRegion& mask, int l, int band,
                                               int cap, std::uint64_t seed) {
  if (band < l) throw std::invalid_argument("candidate band narrower than the patch");
  const int w = img.width(), h = img.height(), half = l / 2;
  // Integral image of target pixels for the fully-known test.
  std::vector<int> integral(static_cast<std::size_t>(w + 1) * (h + 1), 0);
  auto I = [&](int x, int y) -> int& { return integral[static_cast<std::size_t>(y) * (w + 1) + x]; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) I(x + 1, y + 1) = I(x, y + 1) + I(x + 1, y) - I(x, y) + (mask.target(x, y) ? 1 : 0);

  std::vector<Pixel> front;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (imagery::is_boundary_pixel(mask, x, y)) front.push_back({x, y});

  const int stride = std::max(1, l / 2);
  const double band2 = static_cast<double>(band) * band;
  std::vector<CandidatePatch> all;
  for (int y = half; y + half < h; y += stride) {
    for (int x = half; x + half < w; x += stride) {
      const int unknown = I(x + half + 1, y + half + 1) - I(x - half, y + half + 1) - I(x + half + 1, y - half) +
                          I(x - half, y - half);
      if (unknown != 0) continue;
      bool near = false;
      for (const Pixel f : front) {
        const double dx = f.x - x, dy = f.y - y;
        if (dx * dx + dy * dy <= band2) {
          near = true;
          break;
        }
      }
      if (near) all.push_back({0, {x, y}});
    }
  }
  if (all.empty()) throw StageError("no fully known source patch near the target boundary");
  if (static_cast<int>(all.size()) > cap) {
    std::vector<CandidatePatch> picked;
    std::mt19937_64 rng(seed);
    std::sample(all.begin(), all.end(), std::back_inserter(picked), cap, rng);
    all = std::move(picked);
  }
  for (std::size_t i = 0; i < all.size(); ++i) all[i].id = static_cast<int>(i) + 1;
  return all;
}

RotatedBlock rotate_candidate(const Canvas& canvas, const CandidatePatch& cand, double theta, int l) {
  const RasterImage& img = canvas.image;
  RotatedBlock b;
  b.side = l;
  b.channels = img.channels();
  b.values.assign(static_cast<std::size_t>(l) * l * b.channels, 0.0f);
  b.valid.assign(static_cast<std::size_t>(l) * l, 0);
  const int half = l / 2;
  const double c = std::cos(theta), s = std::sin(theta);
  const double quarter = theta / (kPi / 2);
  const bool axis_aligned = std::abs(quarter - std::round(quarter)) < 1e-9;
  for (int v = 0; v < l; ++v) {
    for (int u = 0; u < l; ++u) {
      const double du = u - half, dv = v - half;
      const double sx = cand.source_center.x + c * du + s * dv;
      const double sy = cand.source_center.y - s * du + c * dv;
      const std::size_t at = static_cast<std::size_t>(v) * l + u;
      if (axis_aligned) {
        const int x = static_cast<int>(std::lround(sx)), y = static_cast<int>(std::lround(sy));
        if (!canvas.mask.known(x, y)) continue;
        for (int ch = 0; ch < b.channels; ++ch) b.values[at * b.channels + ch] = img.at(x, y, ch);
        b.valid[at] = 1;
        continue;
      }
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      const std::array<double, 4> wts{(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
      const std::array<Pixel, 4> taps{{{x0, y0}, {x0 + 1, y0}, {x0, y0 + 1}, {x0 + 1, y0 + 1}}};
      bool ok = true;
      for (int k = 0; k < 4; ++k)
        if (wts[k] > 1e-12 && !canvas.mask.known(taps[k])) ok = false;
      if (!ok) continue;
      for (int ch = 0; ch < b.channels; ++ch) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k)
          if (wts[k] > 1e-12) acc += wts[k] * img.at(taps[k].x, taps[k].y, ch);
        b.values[at * b.channels + ch] = static_cast<float>(acc);
      }
      b.valid[at] = 1;
    }
  }
  return b;
}

namespace {

double normalise_ssd(double ssd, int overlap, const PropagationParams& p) {
  const double area = static_cast<double>(p.patch) * p.patch;
  if (p.literal_penalty) return ssd / area;  // (SSD / lambda) * (lambda / l^2)
  return ssd * area / (static_cast<double>(overlap) * overlap);
}

}  // namespace

double node_energy(const AnchorPoint& anchor, const RotatedBlock& block, const Canvas& canvas,
                   const PropagationParams& params) {
  const int half = block.side / 2;
  double ssd = 0.0;
  int overlap = 0;
  for (int v = 0; v < block.side; ++v) {
    for (int u = 0; u < block.side; ++u) {
      const int x = anchor.center.x + u - half, y = anchor.center.y + v - half;
      if (!canvas.mask.known(x, y) || !block.ok(u, v)) continue;
      for (int c = 0; c < block.channels; ++c) {
        const double d = canvas.image.at(x, y, c) - block.value(u, v, c);
        ssd += d * d;
      }
      ++overlap;
    }
  }
  if (overlap == 0) return params.free_energy();
  return normalise_ssd(ssd, overlap, params);
}

double pairwise_energy(const AnchorPoint& ai, const RotatedBlock& bi, const AnchorPoint& aj, const RotatedBlock& bj,
                       const PropagationParams& params) {
  const int ox = aj.center.x - ai.center.x, oy = aj.center.y - ai.center.y;
  double ssd = 0.0;
  int overlap = 0;
  for (int v = 0; v < bi.side; ++v) {
    const int vj = v - oy;
    if (vj < 0 || vj >= bj.side) continue;
    for (int u = 0; u < bi.side; ++u) {
      const int uj = u - ox;
      if (uj < 0 || uj >= bj.side) continue;
      if (!bi.ok(u, v) || !bj.ok(uj, vj)) continue;
      for (int c = 0; c < bi.channels; ++c) {
        const double d = bi.value(u, v, c) - bj.value(uj, vj, c);
        ssd += d * d;
      }
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  return normalise_ssd(ssd, overlap, params);
}

// ---------------------------------------------------------------- graph

namespace {

bool segments_cross(Vec2 p, Vec2 p2, Vec2 q, Vec2 q2, Vec2& at) {
  const Vec2 r = p2 - p, s = q2 - q;
  const double den = r.cross(s);
  if (std::abs(den) < 1e-12) return false;
  const double t = (q - p).cross(s) / den, u = (q - p).cross(r) / den;
  if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) return false;
  at = p + r * t;
  return true;
}

int closest_anchor(const std::vector<AnchorPoint>& anchors, const std::vector<int>& ids, Vec2 at) {
  int best = ids.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (const int id : ids) {
    const double d = (anchors[id].position - at).norm();
    if (d < best_d) {
      best_d = d;
      best = id;
    }
  }
  return best;
}

}  // namespace

StructureGraph build_graph(const std::vector<StructureCurve>& curves, int l) {
  std::vector<AnchorPoint> raw;
  std::vector<std::vector<int>> per_curve;
  std::vector<std::pair<int, int>> raw_edges;
  for (std::size_t c = 0; c < curves.size(); ++c) {
    std::vector<int> ids;
    for (auto& a : place_anchors(curves[c], l, static_cast<int>(c))) {
      ids.push_back(static_cast<int>(raw.size()));
      raw.push_back(a);
    }
    for (std::size_t i = 1; i < ids.size(); ++i) raw_edges.push_back({ids[i - 1], ids[i]});
    per_curve.push_back(std::move(ids));
  }

  // Shared vertices at crossings.
  std::vector<int> parent(raw.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (std::size_t a = 0; a < curves.size(); ++a) {
    for (std::size_t b = a + 1; b < curves.size(); ++b) {
      const auto& sa = curves[a].samples;
      const auto& sb = curves[b].samples;
      std::vector<Vec2> hits;
      for (std::size_t i = 1; i < sa.size(); ++i) {
        for (std::size_t j = 1; j < sb.size(); ++j) {
          Vec2 at;
          if (!segments_cross(sa[i - 1], sa[i], sb[j - 1], sb[j], at)) continue;
          bool dup = false;
          for (const Vec2& h : hits)
            if ((h - at).norm() < l) dup = true;
          if (!dup) hits.push_back(at);
        }
      }
      for (const Vec2& at : hits) {
        const int ia = find(closest_anchor(raw, per_curve[a], at));
        const int ib = find(closest_anchor(raw, per_curve[b], at));
        if (ia != ib) parent[std::max(ia, ib)] = std::min(ia, ib);
      }
    }
  }

  StructureGraph g;
  std::vector<int> remap(raw.size(), -1);
  for (std::size_t v = 0; v < raw.size(); ++v) {
    if (find(static_cast<int>(v)) != static_cast<int>(v)) continue;
    remap[v] = static_cast<int>(g.anchors.size());
    g.anchors.push_back(raw[v]);
  }
  for (std::size_t v = 0; v < raw.size(); ++v) remap[v] = remap[find(static_cast<int>(v))];
  for (const auto& [a, b] : raw_edges) {
    const int x = std::min(remap[a], remap[b]), y = std::max(remap[a], remap[b]);
    if (x == y) continue;
    if (std::find(g.edges.begin(), g.edges.end(), std::make_pair(x, y)) == g.edges.end()) g.edges.push_back({x, y});
  }
  g.adjacency.assign(g.anchors.size(), {});
  for (const auto& [a, b] : g.edges) {
    g.adjacency[a].push_back(b);
    g.adjacency[b].push_back(a);
  }
  return g;
}

// ---------------------------------------------------------------- optimisation

BlockBank::BlockBank(const Canvas& canvas, const std::vector<CandidatePatch>& cands, const PropagationParams& params)
    : rotations_(params.rotations), blocks_(cands.size() * params.rotations) {
  detail::parallel_for(static_cast<int>(blocks_.size()), [&](int i) {
    const Label lab = label(i);
    blocks_[i] = rotate_candidate(canvas, cands[lab.candidate], lab.theta(), params.patch);
  });
}

namespace {

int window_context(const AnchorPoint& a, const MaskRegion& mask, int l) {
  int n = 0;
  const int half = l / 2;
  for (int y = a.center.y - half; y <= a.center.y + half; ++y)
    for (int x = a.center.x - half; x <= a.center.x + half; ++x) n += mask.known(x, y) ? 1 : 0;
  return n;
}

/// Energy tables for a set of graph vertices; `labels[v]` lists the bank labels kept for v.
struct ComponentModel {
  std::vector<int> vertices;  // graph vertex ids
  std::vector<std::vector<int>> labels;
  LabelGraph graph;
};

ComponentModel build_model(const StructureGraph& sg, const std::vector<int>& vertices, const BlockBank& bank,
                           const Canvas& canvas, const PropagationParams& params, int cap) {
  ComponentModel model;
  model.vertices = vertices;
  const int n = static_cast<int>(vertices.size());
  const int total = bank.label_count();
  std::map<int, int> local;
  for (int i = 0; i < n; ++i) local[vertices[i]] = i;

  std::vector<std::vector<double>> full(n);
  detail::parallel_for(n, [&](int i) {
    const AnchorPoint& a = sg.anchors[vertices[i]];
    full[i].resize(total);
    for (int k = 0; k < total; ++k) full[i][k] = node_energy(a, bank.at(bank.label(k)), canvas, params);
  });

  model.labels.assign(n, {});
  if (cap <= 0 || cap >= total) {
    for (auto& l : model.labels) {
      l.resize(total);
      std::iota(l.begin(), l.end(), 0);
    }
  } else {
    std::vector<char> context(n, 0);
    for (int i = 0; i < n; ++i) {
      if (window_context(sg.anchors[vertices[i]], canvas.mask, params.patch) == 0) continue;
      context[i] = 1;
      std::vector<int> order(total);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return full[i][x] < full[i][y]; });
      order.resize(cap);
      model.labels[i] = std::move(order);
    }
    // Anchors deep inside the hole borrow the labels of the nearest anchors that see known pixels.
    for (int i = 0; i < n; ++i) {
      if (context[i]) continue;
      std::vector<int> dist(n, -1), queue{i};
      dist[i] = 0;
      std::vector<int> sources;
      int found_at = -1;
      for (std::size_t q = 0; q < queue.size(); ++q) {
        const int v = queue[q];
        if (found_at >= 0 && dist[v] > found_at + 2) break;
        if (context[v]) {
          if (found_at < 0) found_at = dist[v];
          sources.push_back(v);
        }
        for (const int w : sg.adjacency[vertices[v]]) {
          auto it = local.find(w);
          if (it == local.end() || dist[it->second] >= 0) continue;
          dist[it->second] = dist[v] + 1;
          queue.push_back(it->second);
        }
      }
      std::vector<int> merged;
      std::vector<char> taken(total, 0);
      for (int r = 0; static_cast<int>(merged.size()) < cap && !sources.empty() && r < cap; ++r) {
        for (const int s : sources) {
          const int lab = model.labels[s][r];
          if (!taken[lab] && static_cast<int>(merged.size()) < cap) {
            taken[lab] = 1;
            merged.push_back(lab);
          }
        }
      }
      for (int k = 0; static_cast<int>(merged.size()) < cap && k < total; ++k)
        if (!taken[k]) merged.push_back(k);
      model.labels[i] = std::move(merged);
    }
  }

  model.graph.unary.resize(n);
  for (int i = 0; i < n; ++i)
    for (const int k : model.labels[i]) model.graph.unary[i].push_back(full[i][k]);

  std::vector<std::pair<int, int>> edges;
  for (const auto& [a, b] : sg.edges) {
    auto ia = local.find(a), ib = local.find(b);
    if (ia != local.end() && ib != local.end()) edges.push_back({ia->second, ib->second});
  }
  model.graph.edges.resize(edges.size());
  detail::parallel_for(static_cast<int>(edges.size()), [&](int e) {
    const auto [a, b] = edges[e];
    auto& edge = model.graph.edges[e];
    edge.a = a;
    edge.b = b;
    const AnchorPoint& pa = sg.anchors[vertices[a]];
    const AnchorPoint& pb = sg.anchors[vertices[b]];
    const int la = static_cast<int>(model.labels[a].size()), lb = static_cast<int>(model.labels[b].size());
    edge.table.resize(static_cast<std::size_t>(la) * lb);
    for (int x = 0; x < la; ++x)
      for (int y = 0; y < lb; ++y)
        edge.table[static_cast<std::size_t>(x) * lb + y] = pairwise_energy(
            pa, bank.at(bank.label(model.labels[a][x])), pb, bank.at(bank.label(model.labels[b][y])), params);
  });
  return model;
}

std::vector<std::vector<int>> components(const StructureGraph& g) {
  std::vector<int> comp(g.anchors.size(), -1);
  std::vector<std::vector<int>> out;
  for (std::size_t s = 0; s < g.anchors.size(); ++s) {
    if (comp[s] >= 0) continue;
    std::vector<int> members{static_cast<int>(s)};
    comp[s] = static_cast<int>(out.size());
    for (std::size_t q = 0; q < members.size(); ++q) {
      for (const int w : g.adjacency[members[q]]) {
        if (comp[w] >= 0) continue;
        comp[w] = comp[s];
        members.push_back(w);
      }
    }
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  return out;
}

struct ComponentResult {
  Solution solution;
  bool used_bp = false;
};

ComponentResult solve_component(const ComponentModel& model, const PropagationParams& params) {
  ComponentResult r;
  const auto order = model.graph.path_order();
  if (!order.empty()) {
    r.solution = solve_chain(model.graph, order);
  } else {
    r.used_bp = true;
    r.solution = solve_bp(model.graph, params.delta, params.max_iter, params.damping);
  }
  return r;
}

PatchAssignment optimise(const StructureGraph& sg, const BlockBank& bank, const Canvas& canvas,
                         const PropagationParams& params, int cap, std::vector<std::string>* warnings) {
  if (bank.label_count() == 0) throw StageError("empty candidate list");
  PatchAssignment out;
  out.labels.assign(sg.anchors.size(), Label{});
  const auto comps = components(sg);
  for (std::size_t c = 0; c < comps.size(); ++c) {
    const ComponentModel model = build_model(sg, comps[c], bank, canvas, params, cap);
    const ComponentResult r = solve_component(model, params);
    for (std::size_t i = 0; i < model.vertices.size(); ++i)
      out.labels[model.vertices[i]] = bank.label(model.labels[i][r.solution.labels[i]]);
    out.total_energy += r.solution.energy;
    out.traces.push_back(r.solution.trace);
    if (r.used_bp && !r.solution.converged) {
      out.converged = false;
      if (warnings) {
        std::ostringstream msg;
        msg << "belief propagation did not converge on component " << c << " after " << r.solution.iterations
            << " iterations";
        warnings->push_back(msg.str());
      }
    }
  }
  return out;
}

}  // namespace

PatchAssignment optimize_chain(const std::vector<AnchorPoint>& anchors, const BlockBank& bank, const Canvas& canvas,
                               const PropagationParams& params) {
  if (anchors.empty()) throw std::invalid_argument("no anchors");
  StructureGraph g;
  g.anchors = anchors;
  for (std::size_t i = 1; i < anchors.size(); ++i) g.edges.push_back({static_cast<int>(i) - 1, static_cast<int>(i)});
  g.adjacency.assign(anchors.size(), {});
  for (const auto& [a, b] : g.edges) {
    g.adjacency[a].push_back(b);
    g.adjacency[b].push_back(a);
  }
  return optimise(g, bank, canvas, params, 0, nullptr);
}

PatchAssignment optimize_graph(const StructureGraph& graph, const BlockBank& bank, const Canvas& canvas,
                               const PropagationParams& params) {
  if (graph.anchors.empty()) throw std::invalid_argument("no anchors");
  PatchAssignment out;
  out.labels.assign(graph.anchors.size(), Label{});
  for (const auto& comp : components(graph)) {
    const ComponentModel model = build_model(graph, comp, bank, canvas, params, 0);
    const Solution s = solve_bp(model.graph, params.delta, params.max_iter, params.damping);
    for (std::size_t i = 0; i < model.vertices.size(); ++i)
      out.labels[model.vertices[i]] = bank.label(model.labels[i][s.labels[i]]);
    out.total_energy += s.energy;
    out.converged = out.converged && s.converged;
    out.traces.push_back(s.trace);
  }
  return out;
}

double assignment_energy(const StructureGraph& graph, const BlockBank& bank, const Canvas& canvas,
                         const std::vector<Label>& labels, const PropagationParams& params) {
  double e = 0.0;
  for (std::size_t v = 0; v < graph.anchors.size(); ++v)
    e += node_energy(graph.anchors[v], bank.at(labels[v]), canvas, params);
  for (const auto& [a, b] : graph.edges)
    e += pairwise_energy(graph.anchors[a], bank.at(labels[a]), graph.anchors[b], bank.at(labels[b]), params);
  return e;
}

void paste_assignment(Canvas& canvas, const std::vector<AnchorPoint>& anchors, const BlockBank& bank,
                      const std::vector<Label>& labels) {
  const int w = canvas.image.width(), h = canvas.image.height(), ch = canvas.image.channels();
  std::vector<double> acc(static_cast<std::size_t>(w) * h * ch, 0.0);
  std::vector<double> weight(static_cast<std::size_t>(w) * h, 0.0);
  std::vector<double> conf(static_cast<std::size_t>(w) * h, 0.0);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const RotatedBlock& b = bank.at(labels[i]);
    const int half = b.side / 2;
    const Pixel c = anchors[i].center;
    double csum = 0.0;
    int cnt = 0;
    for (int y = c.y - half; y <= c.y + half; ++y) {
      for (int x = c.x - half; x <= c.x + half; ++x) {
        if (!canvas.mask.known(x, y)) continue;
        csum += canvas.confidence(x, y);
        ++cnt;
      }
    }
    const double patch_conf = cnt > 0 ? csum / cnt : 0.0;
    for (int v = 0; v < b.side; ++v) {
      for (int u = 0; u < b.side; ++u) {
        const int x = c.x + u - half, y = c.y + v - half;
        if (!canvas.mask.in_bounds(x, y) || !canvas.mask.target(x, y) || !b.ok(u, v)) continue;
        const double wt = 1.0 + half - std::max(std::abs(u - half), std::abs(v - half));
        const std::size_t at = static_cast<std::size_t>(y) * w + x;
        for (int k = 0; k < ch; ++k) acc[at * ch + k] += wt * b.value(u, v, k);
        weight[at] += wt;
        conf[at] += wt * patch_conf;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t at = static_cast<std::size_t>(y) * w + x;
      if (weight[at] <= 0.0) continue;
      for (int k = 0; k < ch; ++k)
        canvas.image.at(x, y, k) = static_cast<std::uint8_t>(std::clamp(std::lround(acc[at * ch + k] / weight[at]), 0L, 255L));
      canvas.confidence(x, y) = static_cast<float>(conf[at] / weight[at]);
      canvas.mask.set(x, y, false);
    }
  }
}

PropagationResult propagate(Canvas& canvas, const std::vector<StructureCurve>& curves,
                            const PropagationParams& params) {
  params.validate();
  PropagationResult result;
  if (curves.empty()) return result;
  result.graph = build_graph(curves, params.patch);
  for (auto& a : result.graph.anchors) {
    a.center.x = std::clamp(a.center.x, 0, canvas.image.width() - 1);
    a.center.y = std::clamp(a.center.y, 0, canvas.image.height() - 1);
    a.patch.center = a.center;
  }
  result.candidates = collect_candidates(canvas.image, canvas.mask, params.patch, params.band_px(), params.m_max,
                                         params.seed);
  const BlockBank bank(canvas, result.candidates, params);
  result.assignment = optimise(result.graph, bank, canvas, params, params.label_cap, &result.warnings);
  result.recomputed_energy = assignment_energy(result.graph, bank, canvas, result.assignment.labels, params);
  paste_assignment(canvas, result.graph.anchors, bank, result.assignment.labels);
  return result;
}

}  // namespace structfill::propagation
