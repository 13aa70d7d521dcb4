#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tsdf/field.hpp"
#include "tsdf/grad.hpp"
#include "tsdf/mesh.hpp"

namespace tsdf {

/// 10 log10(1 / MSE) for unit-range images, 99 when identical.
double psnr(const Mat& a, const Mat& b);
double mse(const Mat& a, const Mat& b);

/// Mean SSIM over channels with an 11x11 Gaussian window (sigma 1.5) over the
/// valid region; images are P x C with P = width * height. The window shrinks
/// for images smaller than 11 pixels. Clamped to [0, 1].
double ssim(const Mat& a, const Mat& b, int width, int height);

/// Operators mapping a P x C image to each level of a Gaussian pyramid
/// (level 0 is the identity; each further level blurs with the 5-tap binomial
/// kernel, edges clamped, and keeps every second pixel).
std::vector<SparseMat> pyramid_operators(int width, int height, int levels = 3);

/// Mean over pyramid levels of the mean absolute difference.
double pproxy(const Mat& a, const Mat& b, int width, int height);

/// n area-weighted uniform samples on the mesh surface.
Mat sample_surface(const Mesh& mesh, int n, std::uint64_t seed);

/// Average of the two directed mean nearest-neighbor distances between
/// n_samples surface samples of each mesh.
double chamfer(const Mesh& a, const Mesh& b, int n_samples = 100000, std::uint64_t seed = 0);

/// Batch SDF: B x 3 points to B x 1 values.
using BatchSdf = std::function<Mat(const Mat&)>;

/// Occupancy (s < 0) IoU at the cell centers of a resolution^3 lattice over
/// `bounds`. Returns 1 if both shapes are empty.
double volume_iou(const BatchSdf& a, const BatchSdf& b, int resolution, const Bounds& bounds = {});

}  // namespace tsdf
