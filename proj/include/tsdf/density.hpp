#pragma once

#include <string>

#include "tsdf/grad.hpp"

namespace tsdf {

/// Laplace-CDF style conversion: (1/beta)(1 - exp(s/beta)/2) inside (s < 0),
/// exp(-s/beta)/(2 beta) outside. Throws std::invalid_argument if beta <= 0.
double sdf_to_density(double s, double beta);
Mat sdf_to_density(const Mat& s, double beta);
/// Taped version; `beta` is 1x1 and may itself carry a gradient.
Var sdf_to_density(Var s, Var beta);

enum class BetaMode { fixed, linear, adaptive };

BetaMode parse_beta_mode(const std::string& s);
std::string to_string(BetaMode m);

/// Sharpness policy. In adaptive mode beta is exp(log_beta) and log_beta is
/// optimized with the other parameters.
class BetaSchedule {
 public:
  static constexpr double kMinBeta = 1e-4;

  BetaSchedule(BetaMode mode = BetaMode::adaptive, double beta0 = 0.1, double beta1 = 0.001);

  BetaMode mode() const { return mode_; }
  double beta0() const { return beta0_; }
  double beta1() const { return beta1_; }
  bool learnable() const { return mode_ == BetaMode::adaptive; }

  /// Beta at training progress t in [0, 1]; t outside is clamped with a warning.
  double value(double t) const;
  /// 1x1 node holding value(t); a function of log_beta in adaptive mode.
  Var var(Tape& tape, double t);

  /// Keeps beta >= kMinBeta. Call after each optimizer step.
  void clamp();
  void set_beta(double beta);

  Parameter log_beta;  // 1x1, excluded from weight decay

 private:
  BetaMode mode_;
  double beta0_;
  double beta1_;
};

}  // namespace tsdf
