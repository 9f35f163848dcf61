#include "structfill/imagery.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace structfill::imagery {

namespace {

// Direction codes, clockwise on screen (y grows downward).
constexpr std::array<Pixel, 8> kDirs{{{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

const std::array<double, 256>& linear_table() {
  static const std::array<double, 256> table = [] {
    std::array<double, 256> t{};
    for (int i = 0; i < 256; ++i) t[i] = srgb_to_linear(i / 255.0);
    return t;
  }();
  return table;
}

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

RasterImage::RasterImage(int width, int height, int channels)
    : RasterImage(width, height, channels,
                  std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) *
                                            std::max(height, 0) * std::max(channels, 0))) {}

RasterImage::RasterImage(int width, int height, int channels, std::vector<std::uint8_t> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (width < 1 || height < 1) throw std::invalid_argument("image dimensions must be positive");
  if (channels != 1 && channels != 3 && channels != 4)
    throw std::invalid_argument("image must have 1, 3 or 4 channels");
  if (data_.size() != static_cast<std::size_t>(width) * height * channels)
    throw std::invalid_argument("image data length does not match dimensions");
}

std::size_t MaskRegion::count() const {
  return static_cast<std::size_t>(std::count_if(bits_.data().begin(), bits_.data().end(),
                                                [](std::uint8_t b) { return b != 0; }));
}

const Grid<float>& ChannelStack::channel(int i) const {
  switch (i) {
    case 0: return brightness;
    case 1: return color_a;
    case 2: return color_b;
    default: return texture;
  }
}

std::array<double, 3> srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const auto& lin = linear_table();
  const double rl = lin[r], gl = lin[g], bl = lin[b];
  const double x = (0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl) / 0.95047;
  const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
  const double z = (0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl) / 1.08883;
  const double fx = lab_f(x), fy = lab_f(y), fz = lab_f(z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

RasterImage load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("input image not found: " + path.string());
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw IoError("cannot decode image: " + path.string());
  if (raw.depth() != CV_8U) throw IoError("unsupported bit depth (8-bit only): " + path.string());
  if (raw.cols < 1 || raw.rows < 1) throw IoError("zero-dimension image: " + path.string());

  cv::Mat rgb;
  switch (raw.channels()) {
    case 1: cv::cvtColor(raw, rgb, cv::COLOR_GRAY2RGB); break;
    case 3: cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB); break;
    default: throw IoError("unsupported channel count in " + path.string());
  }
  std::vector<std::uint8_t> data(rgb.total() * 3);
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<std::uint8_t>(y);
    std::copy(row, row + rgb.cols * 3, data.begin() + static_cast<std::ptrdiff_t>(y) * rgb.cols * 3);
  }
  return RasterImage(rgb.cols, rgb.rows, 3, std::move(data));
}

MaskRegion load_mask(const std::filesystem::path& path, int expected_width, int expected_height) {
  if (!std::filesystem::exists(path)) throw IoError("mask not found: " + path.string());
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw IoError("cannot decode mask: " + path.string());
  if (raw.depth() != CV_8U) throw IoError("mask must be 8-bit: " + path.string());
  cv::Mat gray;
  if (raw.channels() == 1) {
    gray = raw;
  } else if (raw.channels() == 3) {
    cv::cvtColor(raw, gray, cv::COLOR_BGR2GRAY);
  } else if (raw.channels() == 4) {
    cv::cvtColor(raw, gray, cv::COLOR_BGRA2GRAY);
  } else {
    throw IoError("unsupported mask channel count: " + path.string());
  }
  if (gray.cols != expected_width || gray.rows != expected_height) {
    throw IoError("mask dimensions " + std::to_string(gray.cols) + "x" + std::to_string(gray.rows) +
                  " do not match image " + std::to_string(expected_width) + "x" +
                  std::to_string(expected_height));
  }
  MaskRegion mask(gray.cols, gray.rows);
  for (int y = 0; y < gray.rows; ++y) {
    const auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < gray.cols; ++x) mask.set(x, y, row[x] > 127);
  }
  validate_job_mask(mask);
  return mask;
}

void validate_job_mask(const MaskRegion& mask) {
  const std::size_t n = mask.count();
  if (n == 0) throw IoError("empty target region");
  if (n == static_cast<std::size_t>(mask.width()) * mask.height())
    throw IoError("target region covers the entire image");
}

void save_image(const RasterImage& img, const std::filesystem::path& path) {
  const int type = img.channels() == 1 ? CV_8UC1 : (img.channels() == 3 ? CV_8UC3 : CV_8UC4);
  cv::Mat src(img.height(), img.width(), type, const_cast<std::uint8_t*>(img.data().data()));
  cv::Mat out;
  if (img.channels() == 3) {
    cv::cvtColor(src, out, cv::COLOR_RGB2BGR);
  } else if (img.channels() == 4) {
    cv::cvtColor(src, out, cv::COLOR_RGBA2BGRA);
  } else {
    out = src;
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), out);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) throw IoError("cannot write " + path.string());
}

void save_grayscale(const Grid<float>& grid, const std::filesystem::path& path, float scale) {
  RasterImage img(grid.width(), grid.height(), 1);
  for (int y = 0; y < grid.height(); ++y)
    for (int x = 0; x < grid.width(); ++x)
      img.at(x, y, 0) = static_cast<std::uint8_t>(std::lround(255.0f * clamp01(grid(x, y) * scale)));
  save_image(img, path);
}

void save_mask(const MaskRegion& mask, const std::filesystem::path& path) {
  RasterImage img(mask.width(), mask.height(), 1);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) img.at(x, y, 0) = mask.target(x, y) ? 255 : 0;
  save_image(img, path);
}

ChannelStack to_channels(const RasterImage& img, const MaskRegion* known) {
  if (img.channels() != 3) throw std::invalid_argument("to_channels expects a 3-channel image");
  const int w = img.width(), h = img.height();
  ChannelStack stack{Grid<float>(w, h), Grid<float>(w, h), Grid<float>(w, h), Grid<float>(w, h)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto lab = srgb_to_lab(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
      stack.brightness(x, y) = clamp01(lab[0] / 100.0);
      stack.color_a(x, y) = clamp01((lab[1] + 128.0) / 255.0);
      stack.color_b(x, y) = clamp01((lab[2] + 128.0) / 255.0);
    }
  }
  // Standard deviation of brightness over a 5x5 window; 0.5 is the largest
  // possible deviation of values in [0,1]. Target pixels are left out when a
  // mask is given so the hole's contents cannot leak into the known region.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sum = 0.0, sum_sq = 0.0;
      int n = 0;
      for (int dy = -2; dy <= 2; ++dy) {
        for (int dx = -2; dx <= 2; ++dx) {
          const int cx = std::clamp(x + dx, 0, w - 1), cy = std::clamp(y + dy, 0, h - 1);
          if (known != nullptr && known->target(cx, cy)) continue;
          const double v = stack.brightness(cx, cy);
          sum += v;
          sum_sq += v * v;
          ++n;
        }
      }
      if (n == 0) {
        stack.texture(x, y) = 0.0f;
        continue;
      }
      const double mean = sum / n;
      const double var = std::max(0.0, sum_sq / n - mean * mean);
      stack.texture(x, y) = clamp01(2.0 * std::sqrt(var));
    }
  }
  return stack;
}

bool is_boundary_pixel(const MaskRegion& mask, int x, int y) {
  if (!mask.in_bounds(x, y) || !mask.target(x, y)) return false;
  return mask.known(x + 1, y) || mask.known(x - 1, y) || mask.known(x, y + 1) || mask.known(x, y - 1);
}

Grid<int> target_components(const MaskRegion& mask, int* count) {
  Grid<int> labels(mask.width(), mask.height(), -1);
  int next = 0;
  std::vector<Pixel> stack;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.target(x, y) || labels(x, y) >= 0) continue;
      labels(x, y) = next;
      stack.push_back({x, y});
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        for (const Pixel d : kDirs) {
          const int nx = p.x + d.x, ny = p.y + d.y;
          if (mask.in_bounds(nx, ny) && mask.target(nx, ny) && labels(nx, ny) < 0) {
            labels(nx, ny) = next;
            stack.push_back({nx, ny});
          }
        }
      }
      ++next;
    }
  }
  if (count) *count = next;
  return labels;
}

std::vector<std::vector<Pixel>> boundary(const MaskRegion& mask) {
  const int w = mask.width(), h = mask.height();
  Grid<std::uint8_t> is_edge(w, h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) is_edge(x, y) = is_boundary_pixel(mask, x, y) ? 1 : 0;

  Grid<std::uint8_t> visited(w, h, 0);
  std::vector<std::vector<Pixel>> contours;

  // Axis neighbours are tried before diagonals so corners are not skipped;
  // within each group the left turn (toward the interior) comes first.
  auto candidate_order = [](int dir) {
    std::array<int, 8> order{};
    const std::array<int, 8> rel{-2, 0, 2, 4, -1, 1, 3, -3};
    for (int i = 0; i < 8; ++i) order[i] = ((dir + rel[i]) % 8 + 8) % 8;
    if (dir % 2 == 1) {
      // For a diagonal heading the first four entries are diagonals; swap groups.
      std::rotate(order.begin(), order.begin() + 4, order.end());
    }
    return order;
  };

  for (int sy = 0; sy < h; ++sy) {
    for (int sx = 0; sx < w; ++sx) {
      if (!is_edge(sx, sy) || visited(sx, sy)) continue;
      std::vector<Pixel> contour;
      struct Frame {
        Pixel p;
        int dir;
      };
      std::vector<Frame> stack{{{sx, sy}, 4}};
      visited(sx, sy) = 1;
      contour.push_back({sx, sy});
      while (!stack.empty()) {
        Frame& top = stack.back();
        bool moved = false;
        for (const int d : candidate_order(top.dir)) {
          const int nx = top.p.x + kDirs[d].x, ny = top.p.y + kDirs[d].y;
          if (!is_edge.in_bounds(nx, ny) || !is_edge(nx, ny) || visited(nx, ny)) continue;
          visited(nx, ny) = 1;
          contour.push_back({nx, ny});
          stack.push_back({{nx, ny}, d});
          moved = true;
          break;
        }
        if (!moved) stack.pop_back();
      }
      contours.push_back(std::move(contour));
    }
  }
  return contours;
}

Canvas Canvas::start(const RasterImage& image, const MaskRegion& mask) {
  if (image.width() != mask.width() || image.height() != mask.height())
    throw std::invalid_argument("image and mask dimensions differ");
  Canvas c{image, mask, Grid<float>(image.width(), image.height(), 0.0f)};
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) c.confidence(x, y) = mask.target(x, y) ? 0.0f : 1.0f;
  return c;
}

}  // namespace structfill::imagery
