#include "tsdf/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <vector>

namespace tsdf {

RenderBundle RenderBundle::zeros(int w, int h) {
  RenderBundle b;
  b.width = w;
  b.height = h;
  const Eigen::Index p = static_cast<Eigen::Index>(w) * h;
  b.rgb = Mat::Zero(p, 3);
  b.albedo = Mat::Zero(p, 3);
  b.mask = Mat::Zero(p, 1);
  b.depth = Mat::Zero(p, 1);
  return b;
}

RenderBundle RenderBundle::crop(const Rect& r) const {
  if (r.x < 0 || r.y < 0 || r.w <= 0 || r.h <= 0 || r.x + r.w > width || r.y + r.h > height)
    throw std::out_of_range("crop rectangle outside image");
  RenderBundle out = zeros(r.w, r.h);
  for (int y = 0; y < r.h; ++y)
    for (int x = 0; x < r.w; ++x) {
      const Eigen::Index s = static_cast<Eigen::Index>(r.y + y) * width + (r.x + x);
      const Eigen::Index d = static_cast<Eigen::Index>(y) * r.w + x;
      out.rgb.row(d) = rgb.row(s);
      out.albedo.row(d) = albedo.row(s);
      out.mask.row(d) = mask.row(s);
      out.depth.row(d) = depth.row(s);
    }
  return out;
}

RenderBundle RenderBundle::resample(int w, int h) const {
  if (w == width && h == height) return *this;
  if (w <= 0 || h <= 0) throw std::invalid_argument("resample: size must be positive");
  RenderBundle out = zeros(w, h);
  Mat count = Mat::Zero(out.pixels(), 1), dcount = Mat::Zero(out.pixels(), 1);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int tx = std::min(w - 1, static_cast<int>((x + 0.5) * w / width));
      const int ty = std::min(h - 1, static_cast<int>((y + 0.5) * h / height));
      const Eigen::Index s = static_cast<Eigen::Index>(y) * width + x;
      const Eigen::Index d = static_cast<Eigen::Index>(ty) * w + tx;
      out.rgb.row(d) += rgb.row(s);
      out.albedo.row(d) += albedo.row(s);
      out.mask(d, 0) += mask(s, 0);
      count(d, 0) += 1.0;
      if (mask(s, 0) >= 0.5) {
        out.depth(d, 0) += depth(s, 0);
        dcount(d, 0) += 1.0;
      }
    }
  for (Eigen::Index d = 0; d < out.pixels(); ++d) {
    // Upsampling leaves holes; fill them from the nearest source pixel.
    if (count(d, 0) == 0.0) {
      const int x = static_cast<int>(d % w), y = static_cast<int>(d / w);
      const int sx = std::min(width - 1, static_cast<int>((x + 0.5) * width / w));
      const int sy = std::min(height - 1, static_cast<int>((y + 0.5) * height / h));
      const Eigen::Index s = static_cast<Eigen::Index>(sy) * width + sx;
      out.rgb.row(d) = rgb.row(s);
      out.albedo.row(d) = albedo.row(s);
      out.mask(d, 0) = mask(s, 0);
      out.depth(d, 0) = depth(s, 0);
      continue;
    }
    out.rgb.row(d) /= count(d, 0);
    out.albedo.row(d) /= count(d, 0);
    out.mask(d, 0) /= count(d, 0);
    out.depth(d, 0) = dcount(d, 0) > 0.0 ? out.depth(d, 0) / dcount(d, 0) : 0.0;
  }
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const std::string& path, const Mat& data, int width, int height) {
  const int channels = static_cast<int>(data.cols());
  if (channels != 1 && channels != 3) throw std::invalid_argument("write_png: 1 or 3 channels required");
  if (data.rows() != static_cast<Eigen::Index>(width) * height) throw std::invalid_argument("write_png: size mismatch");
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, 8, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<std::size_t>(width) * channels);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c) {
        const double v = data(static_cast<Eigen::Index>(y) * width + x, c);
        const double q = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
        row[static_cast<std::size_t>(x) * channels + c] = static_cast<png_byte>(std::lround(q * 255.0));
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Mat read_png(const std::string& path, int& width, int& height, int& channels) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw std::runtime_error("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng failed reading " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  channels = png_get_channels(png, info);
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  Mat out(static_cast<Eigen::Index>(width) * height, channels);
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c)
        out(static_cast<Eigen::Index>(y) * width + x, c) = row[static_cast<std::size_t>(x) * channels + c] / 255.0;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_depth(const std::string& path, const Mat& depth, int width, int height) {
  if (depth.size() != static_cast<Eigen::Index>(width) * height) throw std::invalid_argument("write_depth: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::int32_t header[3] = {width, height, 0};
  out.write("DPT1", 4);
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  std::vector<float> buf(depth.size());
  for (Eigen::Index k = 0; k < depth.size(); ++k) buf[k] = static_cast<float>(depth.data()[k]);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

Mat read_depth(const std::string& path, int& width, int& height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[4];
  std::int32_t header[3];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in || std::memcmp(magic, "DPT1", 4) != 0) throw std::runtime_error(path + ": not a DPT1 depth file");
  width = header[0];
  height = header[1];
  if (width <= 0 || height <= 0) throw std::runtime_error(path + ": invalid depth size");
  std::vector<float> buf(static_cast<std::size_t>(width) * height);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw std::runtime_error(path + ": truncated depth data");
  Mat out(static_cast<Eigen::Index>(buf.size()), 1);
  for (std::size_t k = 0; k < buf.size(); ++k) out(static_cast<Eigen::Index>(k), 0) = buf[k];
  return out;
}

void save_bundle(const RenderBundle& b, const std::string& dir, const std::string& prefix) {
  std::filesystem::create_directories(dir);
  const std::string base = (std::filesystem::path(dir) / prefix).string();
  write_png(base + "_rgb.png", b.rgb, b.width, b.height);
  write_png(base + "_albedo.png", b.albedo, b.width, b.height);
  write_png(base + "_mask.png", b.mask, b.width, b.height);
  write_depth(base + "_depth.dpt", b.depth, b.width, b.height);
}

RenderBundle load_bundle(const std::string& dir, const std::string& prefix) {
  const std::string base = (std::filesystem::path(dir) / prefix).string();
  RenderBundle b;
  int w, h, c;
  b.rgb = read_png(base + "_rgb.png", b.width, b.height, c);
  if (c != 3) throw std::runtime_error(base + "_rgb.png: expected RGB");
  b.albedo = read_png(base + "_albedo.png", w, h, c);
  if (c != 3 || w != b.width || h != b.height) throw std::runtime_error(base + "_albedo.png: shape mismatch");
  b.mask = read_png(base + "_mask.png", w, h, c);
  if (c != 1 || w != b.width || h != b.height) throw std::runtime_error(base + "_mask.png: shape mismatch");
  b.depth = read_depth(base + "_depth.dpt", w, h);
  if (w != b.width || h != b.height) throw std::runtime_error(base + "_depth.dpt: shape mismatch");
  return b;
}

}  // namespace tsdf
