#pragma once

#include <string>
#include <vector>

#include "tsdf/density.hpp"
#include "tsdf/field.hpp"
#include "tsdf/heads.hpp"

namespace tsdf {

/// Everything that is optimized for one scene.
struct Model {
  TensorField field;
  HeadSet heads;
  BetaSchedule beta;

  static Model init(int resolution, int channels, double field_scale, std::uint64_t seed,
                    BetaSchedule beta = BetaSchedule());

  /// Field factors, then head layers, then log beta when it is learnable.
  std::vector<Parameter*> parameters();
};

/// Binary layout (little endian, 32-bit floats):
///   "TSDF1" int32 N int32 R, vectors X Y Z (N x R), matrices YZ ZX XY (N*N x R)
///   "HEAD" int32 networks; per network: int32 layers int32 activation, then per
///     layer int32 rows int32 cols, weights (rows x cols), bias (cols)
///   optional "BETA" int32 mode, float64 beta0 beta1 log_beta
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

void save_field(const std::string& path, const TensorField& field);
TensorField load_field(const std::string& path);

/// Rounds every parameter value to the nearest float32.
void round_to_float(const std::vector<Parameter*>& params);

}  // namespace tsdf
