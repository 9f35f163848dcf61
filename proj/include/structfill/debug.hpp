#pragma once

#include <filesystem>
#include <vector>

#include "structfill/contours.hpp"
#include "structfill/imagery.hpp"
#include "structfill/propagation.hpp"
#include "structfill/structure.hpp"

namespace structfill::debug {

/// Creates the directory if needed; IoError when it cannot be written.
void prepare_dir(const std::filesystem::path& dir);

imagery::RasterImage render_hierarchy(const contours::ContourHierarchy& hier, double level);
imagery::RasterImage render_structure(const imagery::RasterImage& img, const imagery::MaskRegion& mask,
                                      const std::vector<structure::EdgeTerminal>& terminals,
                                      const std::vector<structure::EdgePair>& pairs,
                                      const std::vector<structure::StructureCurve>& curves);
imagery::RasterImage render_anchors(const imagery::RasterImage& img, const imagery::MaskRegion& mask,
                                    const std::vector<propagation::AnchorPoint>& anchors);

void write_edges(const std::filesystem::path& dir, const contours::EdgeSignal& edges);
void write_hierarchy(const std::filesystem::path& dir, const contours::ContourHierarchy& hier,
                     const std::vector<double>& levels);
void write_structure(const std::filesystem::path& dir, const imagery::RasterImage& img,
                     const imagery::MaskRegion& mask, const std::vector<structure::EdgeTerminal>& terminals,
                     const std::vector<structure::EdgePair>& pairs,
                     const std::vector<structure::StructureCurve>& curves);
void write_anchors(const std::filesystem::path& dir, const imagery::RasterImage& img, const imagery::MaskRegion& mask,
                   const std::vector<propagation::AnchorPoint>& anchors);
void write_energy_trace(const std::filesystem::path& dir, const std::vector<std::vector<double>>& traces);
void write_fill_snapshot(const std::filesystem::path& dir, int iteration, const imagery::Canvas& canvas);

}  // namespace structfill::debug
