#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "structfill/common.hpp"

namespace structfill::imagery {

/// 8-bit-per-channel raster, row-major, interleaved channels in RGB(A) order.
class RasterImage {
 public:
  RasterImage() = default;
  RasterImage(int width, int height, int channels);
  RasterImage(int width, int height, int channels, std::vector<std::uint8_t> data);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  bool empty() const { return data_.empty(); }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  std::uint8_t& at(int x, int y, int c) { return data_[offset(x, y) + c]; }
  std::uint8_t at(int x, int y, int c) const { return data_[offset(x, y) + c]; }

  const std::vector<std::uint8_t>& data() const { return data_; }
  std::vector<std::uint8_t>& data() { return data_; }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Binary target region: true marks a pixel to be removed and re-synthesized.
class MaskRegion {
 public:
  MaskRegion() = default;
  MaskRegion(int width, int height) : bits_(width, height, 0) {}

  int width() const { return bits_.width(); }
  int height() const { return bits_.height(); }
  bool in_bounds(int x, int y) const { return bits_.in_bounds(x, y); }

  bool target(int x, int y) const { return bits_(x, y) != 0; }
  bool target(Pixel p) const { return target(p.x, p.y); }
  /// In bounds and outside the target region.
  bool known(int x, int y) const { return bits_.in_bounds(x, y) && bits_(x, y) == 0; }
  bool known(Pixel p) const { return known(p.x, p.y); }

  void set(int x, int y, bool value) { bits_(x, y) = value ? 1 : 0; }
  void set(Pixel p, bool value) { set(p.x, p.y, value); }

  std::size_t count() const;
  bool empty() const { return count() == 0; }

  const Grid<std::uint8_t>& bits() const { return bits_; }

  friend bool operator==(const MaskRegion&, const MaskRegion&) = default;

 private:
  Grid<std::uint8_t> bits_;
};

/// Brightness, Lab opponent colors and a local-contrast texture channel, all in [0, 1].
struct ChannelStack {
  Grid<float> brightness;
  Grid<float> color_a;
  Grid<float> color_b;
  Grid<float> texture;

  int width() const { return brightness.width(); }
  int height() const { return brightness.height(); }
  const Grid<float>& channel(int i) const;
  static constexpr int kChannels = 4;
};

struct PatchWindow {
  Pixel center;
  int side = 9;

  int half() const { return (side - 1) / 2; }
  bool valid() const { return side >= 3 && side % 2 == 1; }
  bool contains(Pixel p) const {
    return std::abs(p.x - center.x) <= half() && std::abs(p.y - center.y) <= half();
  }
};

/// Mutable fill state shared by the propagation and fill stages.
struct Canvas {
  RasterImage image;
  MaskRegion mask;
  Grid<float> confidence;  // 1 on the source region at start, 0 on the target

  static Canvas start(const RasterImage& image, const MaskRegion& mask);
};

/// CIE-Lab (D65) of an 8-bit sRGB triple: L in [0,100], a/b roughly in [-128,127].
std::array<double, 3> srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b);

RasterImage load_image(const std::filesystem::path& path);
MaskRegion load_mask(const std::filesystem::path& path, int expected_width, int expected_height);
void save_image(const RasterImage& img, const std::filesystem::path& path);
void save_grayscale(const Grid<float>& grid, const std::filesystem::path& path, float scale = 1.0f);
void save_mask(const MaskRegion& mask, const std::filesystem::path& path);

/// Throws IoError unless the region is non-empty and leaves some pixel known.
void validate_job_mask(const MaskRegion& mask);

/// With `known`, the texture statistics use source pixels only.
ChannelStack to_channels(const RasterImage& img, const MaskRegion* known = nullptr);

/// Target pixels 4-adjacent to a known pixel, one traced list per 8-connected
/// component, counter-clockwise from the topmost-leftmost pixel of each component.
std::vector<std::vector<Pixel>> boundary(const MaskRegion& mask);

/// 8-connected components of the target region; label -1 on known pixels.
Grid<int> target_components(const MaskRegion& mask, int* count = nullptr);

bool is_boundary_pixel(const MaskRegion& mask, int x, int y);

}  // namespace structfill::imagery
