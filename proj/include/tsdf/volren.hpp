#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "tsdf/camera.hpp"
#include "tsdf/checkpoint.hpp"
#include "tsdf/image.hpp"

namespace tsdf {

struct RenderConfig {
  int n_coarse = 64;
  int n_fine = 64;
  /// Jittered strata and random inverse-CDF draws. When false, strata
  /// midpoints and evenly spaced quantiles are used and the result does not
  /// depend on the seed.
  bool perturb = false;
  std::uint64_t seed = 0;
  int chunk_rays = 128;
};

/// Entry/exit distances of a ray through the box; false if it misses or the
/// box lies behind the origin.
bool ray_box(const Ray& ray, const Bounds& box, double& near, double& far);

struct RaySamples {
  std::vector<double> t;      // sorted sample distances
  std::vector<double> delta;  // t[i+1] - t[i]; far - t[last] for the last sample
};

/// Density of B points (B x 3) as B x 1.
using DensityFn = std::function<Mat(const Mat&)>;

/// Coarse stratified samples on [near, far], plus n_fine samples drawn from the
/// histogram of coarse compositing weights (uniform if every weight is zero).
/// `density` is only called when n_fine > 0.
RaySamples sample_ray(const Ray& ray, double near, double far, int n_coarse, int n_fine, bool perturb,
                      std::uint64_t seed, const DensityFn& density);

/// Inverse-CDF draws from the piecewise-constant density with bin edges
/// `edges` (n+1 increasing values) and non-negative bin `weights` (n values).
/// Falls back to uniform when the weights sum to zero.
std::vector<double> importance_samples(const std::vector<double>& edges, const std::vector<double>& weights,
                                       int n, bool perturb, std::mt19937_64& rng);

/// Per-ray seed derived from a base seed and absolute pixel coordinates.
std::uint64_t pixel_seed(std::uint64_t base, int px, int py);

struct Composite {
  Var rgb;      // B x 3
  Var albedo;   // B x 3
  Var mask;     // B x 1
  Var depth;    // B x 1
  Var weights;  // B x K
};

/// Quadrature over B rays with K samples each. sigma is B x K; albedo and
/// shading are (B*K) x 3 with sample k of ray b at row b*K + k.
Composite composite(Var sigma, const Mat& delta, const Mat& t, Var albedo, Var shading);

/// Taped render of rays that all carry the same number of samples.
Composite render_rays(Tape& tape, Model& model, Var beta, const std::vector<Ray>& rays,
                      const std::vector<RaySamples>& samples);

/// Untaped render of a full view or of a pixel rectangle of it. Depth is zeroed
/// where mask < 0.5.
RenderBundle render_view(const Model& model, double beta, const Camera& cam, const RenderConfig& cfg,
                         std::optional<Rect> patch = std::nullopt);

/// Differentiable render of a rectangle. Rays are split into chunks, each on
/// its own tape; backward() seeds those tapes with image-space gradients and
/// adds the parameter gradients into Parameter::grad in chunk order.
class PatchRender {
 public:
  PatchRender(Model& model, const Camera& cam, const Rect& patch, const RenderConfig& cfg, double progress);
  PatchRender(const PatchRender&) = delete;
  PatchRender& operator=(const PatchRender&) = delete;
  ~PatchRender();

  /// Raw outputs (depth not zeroed).
  const RenderBundle& bundle() const { return bundle_; }
  /// Gradients of the loss w.r.t. each channel, shaped like bundle().
  void backward(const Mat& g_rgb, const Mat& g_albedo, const Mat& g_mask, const Mat& g_depth);

 private:
  struct Chunk;
  std::vector<std::unique_ptr<Chunk>> chunks_;
  RenderBundle bundle_;
};

}  // namespace tsdf
