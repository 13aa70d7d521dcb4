#pragma once

#include <vector>

#include "tsdf/grad.hpp"

namespace tsdf {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;  // decoupled (AdamW); skipped for Parameter::decay == false
};

/// Adam with decoupled weight decay over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg = {});

  /// Applies one update with learning rate `lr` using Parameter::grad.
  /// Returns false (and leaves everything untouched) if any gradient is
  /// non-finite.
  bool step(double lr);
  void zero_grad();

  long steps() const { return t_; }
  const std::vector<Parameter*>& params() const { return params_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<Mat> m_, v_;
  long t_ = 0;
};

/// base * (1 + cos(pi * step / total)) / 2, reaching 0 at step == total.
double cosine_lr(double base, long step, long total);

}  // namespace tsdf
