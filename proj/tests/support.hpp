#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "structfill/imagery.hpp"

namespace testing_support {

using structfill::imagery::MaskRegion;
using structfill::imagery::RasterImage;

inline std::filesystem::path data_dir() { return STRUCTFILL_TEST_DATA; }

inline RasterImage flat_image(int w, int h, std::uint8_t v) {
  return RasterImage(w, h, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3, v));
}

inline void paint(RasterImage& img, int x, int y, std::uint8_t v) {
  for (int c = 0; c < 3; ++c) img.at(x, y, c) = v;
}

inline MaskRegion disk_mask(int w, int h, int cx, int cy, int r) {
  MaskRegion m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) m.set(x, y, true);
  return m;
}

inline MaskRegion rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
  MaskRegion m(w, h);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) m.set(x, y, true);
  return m;
}

// 128x128 light background, 3 px dark horizontal line on rows 63..65.
inline RasterImage line_scene() {
  RasterImage img = flat_image(128, 128, 200);
  for (int y = 63; y <= 65; ++y)
    for (int x = 0; x < 128; ++x) paint(img, x, y, 40);
  return img;
}

// Light left half, dark right half starting at column 64.
inline RasterImage step_scene() {
  RasterImage img = flat_image(128, 128, 200);
  for (int y = 0; y < 128; ++y)
    for (int x = 64; x < 128; ++x) paint(img, x, y, 60);
  return img;
}

// Horizontal line across the image plus a vertical arm from the top edge
// that stops at the horizontal line.
inline RasterImage t_junction_scene() {
  RasterImage img = line_scene();
  for (int y = 0; y < 63; ++y)
    for (int x = 63; x <= 65; ++x) paint(img, x, y, 40);
  return img;
}

inline MaskRegion scene_disk() { return disk_mask(128, 128, 64, 64, 16); }

inline RasterImage noise_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, 255);
  RasterImage img(w, h, 3);
  for (auto& v : img.data()) v = static_cast<std::uint8_t>(d(rng));
  return img;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& stem) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / (stem + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testing_support
