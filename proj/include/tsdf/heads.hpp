#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tsdf/grad.hpp"

namespace tsdf {

enum class Activation { relu, softplus };

/// Fully connected network; `layers` linear maps with `hidden` activation
/// between them and no activation after the last one.
class MLP {
 public:
  MLP() = default;
  MLP(const std::string& name, int in_dim, int hidden_dim, int out_dim, int layers, Activation hidden,
      std::uint64_t seed);

  Var forward(Tape& tape, Var x);
  Mat forward(const Mat& x) const;

  int in_dim() const { return static_cast<int>(weights.front().value.rows()); }
  int out_dim() const { return static_cast<int>(weights.back().value.cols()); }
  Activation activation() const { return act_; }

  std::vector<Parameter> weights;  // in x out
  std::vector<Parameter> biases;   // 1 x out

 private:
  Activation act_ = Activation::relu;
};

/// Decoders mapping [feature, p] (width 3R + 3) to SDF, colors, deformation and
/// per-cell extraction weights.
struct HeadSet {
  MLP sdf;     // 4 layers, softplus hidden, 1 output
  MLP color;   // 4 layers, 6 outputs: albedo then shading
  MLP deform;  // 2 layers, 1 output
  MLP weight;  // 2 layers, 8 outputs

  static constexpr int kHidden = 64;
  /// Radius of the sphere the SDF head approximates at init. Fitting then
  /// carves the blob from the observed outside in, so it should enclose the
  /// object; unobserved space behind the surface keeps its initial sign.
  static constexpr double kSdfBlobRadius = 0.75;

  /// Seeded fan-in uniform init. The SDF head is then briefly fitted to
  /// |p| - kSdfBlobRadius (a blob centered in the box) with its feature inputs
  /// zeroed. Deformation and weight output layers start at zero.
  static HeadSet init(int feature_dim, std::uint64_t seed);
  /// Correctly shaped networks with plain fan-in init, for loading checkpoints.
  static HeadSet allocate(int feature_dim);

  int input_dim() const { return sdf.in_dim(); }
  std::vector<Parameter*> parameters();
};

Var head_input(Var feature, Var p);
Mat head_input(const Mat& feature, const Mat& p);

Var decode_sdf(HeadSet& heads, Var input);
Mat decode_sdf(const HeadSet& heads, const Mat& input);

struct ColorVars {
  Var albedo;   // B x 3
  Var shading;  // B x 3
};
struct ColorMats {
  Mat albedo;
  Mat shading;
};
ColorVars decode_color(HeadSet& heads, Var input);
ColorMats decode_color(const HeadSet& heads, const Mat& input);

/// Elementwise albedo * shading.
Var compose_color(Var albedo, Var shading);
Mat compose_color(const Mat& albedo, const Mat& shading);

/// Bounded to the open interval (-h/2, h/2).
Var decode_deform(HeadSet& heads, Var input, double h);
Mat decode_deform(const HeadSet& heads, const Mat& input, double h);

/// Strictly positive, B x 8.
Var decode_weights(HeadSet& heads, Var input);
Mat decode_weights(const HeadSet& heads, const Mat& input);

}  // namespace tsdf
