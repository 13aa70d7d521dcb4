#include "tsdf/adam.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tsdf {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (Parameter* p : params_) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols()) p->zero_grad();
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

bool Adam::step(double lr) {
  for (Parameter* p : params_)
    if (!p->grad.allFinite()) return false;
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * p.grad;
    v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * p.grad.cwiseAbs2();
    if (p.decay && cfg_.weight_decay != 0.0) p.value *= 1.0 - lr * cfg_.weight_decay;
    p.value.array() -= lr * (m_[k].array() / bc1) / ((v_[k].array() / bc2).sqrt() + cfg_.eps);
  }
  return true;
}

double cosine_lr(double base, long step, long total) {
  if (total <= 0) return base;
  const double x = std::clamp(static_cast<double>(step) / static_cast<double>(total), 0.0, 1.0);
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * x));
}

}  // namespace tsdf
