#include "tsdf/density.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace tsdf {

namespace {

void check_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("density: beta must be positive");
}

// Value and partials (d/ds, d/dbeta) of the conversion.
struct Partials {
  double sigma, ds, dbeta;
};

Partials evaluate(double s, double beta) {
  const double ib = 1.0 / beta;
  if (s >= 0.0) {
    const double sigma = 0.5 * ib * std::exp(-s * ib);
    return {sigma, -sigma * ib, sigma * (s - beta) * ib * ib};
  }
  const double e = std::exp(s * ib);
  const double ib2 = ib * ib;
  return {ib * (1.0 - 0.5 * e), -0.5 * e * ib2, -ib2 + 0.5 * e * s * ib2 * ib + 0.5 * e * ib2};
}

}  // namespace

double sdf_to_density(double s, double beta) {
  check_beta(beta);
  return evaluate(s, beta).sigma;
}

Mat sdf_to_density(const Mat& s, double beta) {
  check_beta(beta);
  return s.unaryExpr([beta](double v) { return evaluate(v, beta).sigma; });
}

Var sdf_to_density(Var s, Var beta) {
  if (beta.rows() != 1 || beta.cols() != 1) throw std::invalid_argument("density: beta must be 1x1");
  const double b = beta.item();
  check_beta(b);
  Mat out = sdf_to_density(s.value(), b);
  const int is = s.id(), ibeta = beta.id();
  return s.tape().record(std::move(out), {s, beta}, [is, ibeta](Tape& tp, int self) {
    const Mat& g = tp.grad(self);
    const Mat& sv = tp.value(is);
    const double b = tp.value(ibeta)(0, 0);
    Mat gs(sv.rows(), sv.cols());
    double gb = 0.0;
    for (Eigen::Index k = 0; k < sv.size(); ++k) {
      const Partials p = evaluate(sv.data()[k], b);
      gs.data()[k] = g.data()[k] * p.ds;
      gb += g.data()[k] * p.dbeta;
    }
    if (tp.requires_grad(is)) tp.accumulate(is, std::move(gs));
    if (tp.requires_grad(ibeta)) tp.accumulate(ibeta, Mat::Constant(1, 1, gb));
  });
}

BetaMode parse_beta_mode(const std::string& s) {
  if (s == "fixed") return BetaMode::fixed;
  if (s == "linear") return BetaMode::linear;
  if (s == "adaptive") return BetaMode::adaptive;
  throw std::invalid_argument("unknown beta mode: " + s);
}

std::string to_string(BetaMode m) {
  switch (m) {
    case BetaMode::fixed: return "fixed";
    case BetaMode::linear: return "linear";
    case BetaMode::adaptive: return "adaptive";
  }
  return "?";
}

BetaSchedule::BetaSchedule(BetaMode mode, double beta0, double beta1)
    : mode_(mode), beta0_(beta0), beta1_(beta1) {
  check_beta(beta0);
  check_beta(beta1);
  log_beta.name = "beta.log";
  log_beta.decay = false;
  log_beta.value = Mat::Constant(1, 1, std::log(beta0));
  log_beta.zero_grad();
}

double BetaSchedule::value(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) {
    spdlog::warn("beta schedule: progress {} outside [0, 1], clamping", t);
    t = std::isnan(t) ? 0.0 : std::clamp(t, 0.0, 1.0);
  }
  switch (mode_) {
    case BetaMode::fixed: return beta0_;
    case BetaMode::linear: return beta0_ / (1.0 + (beta0_ - beta1_) / beta1_ * t);
    case BetaMode::adaptive: return std::exp(log_beta.value(0, 0));
  }
  return beta0_;
}

Var BetaSchedule::var(Tape& tape, double t) {
  if (mode_ == BetaMode::adaptive) return exp(tape.parameter(log_beta));
  return tape.constant(value(t));
}

void BetaSchedule::clamp() {
  if (log_beta.value(0, 0) < std::log(kMinBeta)) log_beta.value(0, 0) = std::log(kMinBeta);
}

void BetaSchedule::set_beta(double beta) {
  check_beta(beta);
  log_beta.value(0, 0) = std::log(beta);
}

}  // namespace tsdf
