#include "structfill/debug.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <opencv2/imgproc.hpp>

namespace structfill::debug {

namespace fs = std::filesystem;
using imagery::MaskRegion;
using imagery::RasterImage;

namespace {

cv::Mat to_mat(const RasterImage& img) {
  cv::Mat m(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) m.at<cv::Vec3b>(y, x)[c] = img.at(x, y, std::min(c, img.channels() - 1));
  return m;
}

RasterImage from_mat(const cv::Mat& m) {
  RasterImage img(m.cols, m.rows, 3);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = m.at<cv::Vec3b>(y, x)[c];
  return img;
}

/// Darkens and tints the target region so overlays stay readable.
cv::Mat base_layer(const RasterImage& img, const MaskRegion& mask) {
  cv::Mat m = to_mat(img);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x)
      if (mask.target(x, y)) m.at<cv::Vec3b>(y, x) = cv::Vec3b(40, 40, 70);
  return m;
}

cv::Point pt(Vec2 v) { return {static_cast<int>(std::lround(v.x)), static_cast<int>(std::lround(v.y))}; }

std::string numbered(const char* stem, int n, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05d.%s", stem, n, ext);
  return buf;
}

}  // namespace

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create debug directory: " + dir.string());
  const fs::path probe = dir / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw IoError("debug directory is not writable: " + dir.string());
  }
  fs::remove(probe, ec);
}

RasterImage render_hierarchy(const contours::ContourHierarchy& hier, double level) {
  const auto regions = hier.regions_at(level);
  RasterImage img(hier.width(), hier.height(), 3);
  for (int y = 0; y < hier.height(); ++y) {
    for (int x = 0; x < hier.width(); ++x) {
      const int r = regions(x, y);
      std::array<int, 3> rgb{0, 0, 0};
      if (r == contours::ContourHierarchy::kTarget) {
        rgb = {60, 60, 90};
      } else if (r >= 0) {
        const unsigned h = static_cast<unsigned>(r) * 2654435761u;
        rgb = {static_cast<int>(80 + (h & 0x7f)), static_cast<int>(80 + ((h >> 8) & 0x7f)),
               static_cast<int>(80 + ((h >> 16) & 0x7f))};
      }
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>(rgb[c]);
    }
  }
  // Ridge pixels of arcs that have merged away take the colour of a neighbour.
  for (const auto& arc : hier.arcs()) {
    if (arc.strength > level) continue;
    for (const Pixel p : arc.pixels) {
      for (int d = 0; d < 4; ++d) {
        const int nx = p.x + (d == 0) - (d == 1), ny = p.y + (d == 2) - (d == 3);
        if (!hier.labels().in_bounds(nx, ny) || regions(nx, ny) < 0) continue;
        for (int c = 0; c < 3; ++c) img.at(p.x, p.y, c) = img.at(nx, ny, c);
        break;
      }
    }
  }
  return img;
}

RasterImage render_structure(const RasterImage& img, const MaskRegion& mask,
                             const std::vector<structure::EdgeTerminal>& terminals,
                             const std::vector<structure::EdgePair>& pairs,
                             const std::vector<structure::StructureCurve>& curves) {
  cv::Mat m = base_layer(img, mask);
  for (const auto& pair : pairs)
    cv::line(m, pt(to_vec(pair.source.hit_point)), pt(to_vec(pair.target.hit_point)), cv::Scalar(255, 220, 0), 1);
  for (const auto& curve : curves)
    for (std::size_t i = 1; i < curve.samples.size(); ++i)
      cv::line(m, pt(curve.samples[i - 1]), pt(curve.samples[i]),
               curve.fallback ? cv::Scalar(255, 0, 255) : cv::Scalar(255, 0, 0), 1);
  for (const auto& t : terminals) {
    const Vec2 p = to_vec(t.hit_point);
    cv::line(m, pt(p), pt(p + t.tangent * 8.0), cv::Scalar(0, 255, 0), 1);
    cv::circle(m, pt(p), 2, cv::Scalar(0, 255, 0), -1);
  }
  return from_mat(m);
}

RasterImage render_anchors(const RasterImage& img, const MaskRegion& mask,
                           const std::vector<propagation::AnchorPoint>& anchors) {
  cv::Mat m = base_layer(img, mask);
  for (const auto& a : anchors) {
    const int h = a.patch.half();
    cv::rectangle(m, cv::Point(a.center.x - h, a.center.y - h), cv::Point(a.center.x + h, a.center.y + h),
                  cv::Scalar(0, 200, 255), 1);
  }
  for (const auto& a : anchors) cv::circle(m, cv::Point(a.center.x, a.center.y), 1, cv::Scalar(255, 0, 0), -1);
  return from_mat(m);
}

void write_edges(const fs::path& dir, const contours::EdgeSignal& edges) {
  float peak = 0.0f;
  for (const float v : edges.magnitude.data()) peak = std::max(peak, v);
  imagery::save_grayscale(edges.magnitude, dir / "edges.png", peak > 0.0f ? 1.0f / peak : 1.0f);
}

void write_hierarchy(const fs::path& dir, const contours::ContourHierarchy& hier, const std::vector<double>& levels) {
  for (const double t : levels) {
    char name[64];
    std::snprintf(name, sizeof name, "hierarchy_t%.2f.png", t);
    imagery::save_image(render_hierarchy(hier, t), dir / name);
  }
}

void write_structure(const fs::path& dir, const RasterImage& img, const MaskRegion& mask,
                     const std::vector<structure::EdgeTerminal>& terminals,
                     const std::vector<structure::EdgePair>& pairs,
                     const std::vector<structure::StructureCurve>& curves) {
  imagery::save_image(render_structure(img, mask, terminals, pairs, curves), dir / "structure_overlay.png");
}

void write_anchors(const fs::path& dir, const RasterImage& img, const MaskRegion& mask,
                   const std::vector<propagation::AnchorPoint>& anchors) {
  imagery::save_image(render_anchors(img, mask, anchors), dir / "anchor_overlay.png");
}

void write_energy_trace(const fs::path& dir, const std::vector<std::vector<double>>& traces) {
  std::ofstream out(dir / "energy_trace.csv");
  if (!out) throw IoError("cannot write " + (dir / "energy_trace.csv").string());
  out << "component,iteration,energy\n";
  out.precision(17);
  for (std::size_t c = 0; c < traces.size(); ++c)
    for (std::size_t i = 0; i < traces[c].size(); ++i) out << c << ',' << i + 1 << ',' << traces[c][i] << '\n';
}

void write_fill_snapshot(const fs::path& dir, int iteration, const imagery::Canvas& canvas) {
  imagery::save_image(from_mat(base_layer(canvas.image, canvas.mask)), dir / numbered("fill", iteration, "png"));
}

}  // namespace structfill::debug
