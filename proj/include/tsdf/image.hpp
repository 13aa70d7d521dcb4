#pragma once

#include <string>

#include "tsdf/grad.hpp"

namespace tsdf {

struct Rect {
  int x = 0, y = 0, w = 0, h = 0;
};

/// Per-pixel render outputs, rows in scanline order (row = y * width + x).
struct RenderBundle {
  int width = 0, height = 0;
  Mat rgb;     // P x 3
  Mat albedo;  // P x 3
  Mat mask;    // P x 1
  Mat depth;   // P x 1, world units

  static RenderBundle zeros(int w, int h);
  Eigen::Index pixels() const { return static_cast<Eigen::Index>(width) * height; }
  RenderBundle crop(const Rect& r) const;
  /// Box-filter resample to w x h (each output pixel averages the input pixels
  /// whose centers fall inside its footprint). Depth is averaged over covered
  /// input pixels only.
  RenderBundle resample(int w, int h) const;
};

/// 8-bit PNG, values clamped to [0, 1] and rounded. `channels` is 1 or 3.
void write_png(const std::string& path, const Mat& data, int width, int height);
Mat read_png(const std::string& path, int& width, int& height, int& channels);

/// Raw float32 raster: "DPT1", int32 width, int32 height, 4 reserved bytes,
/// then width*height little-endian floats.
void write_depth(const std::string& path, const Mat& depth, int width, int height);
Mat read_depth(const std::string& path, int& width, int& height);

/// Writes <prefix>_rgb.png, _albedo.png, _mask.png and _depth.dpt into dir.
void save_bundle(const RenderBundle& b, const std::string& dir, const std::string& prefix);
RenderBundle load_bundle(const std::string& dir, const std::string& prefix);

}  // namespace tsdf
