#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "tsdf/grad.hpp"

namespace tsdf::test {

struct GradReport {
  double worst_rel = 0.0;  // over entries whose absolute error exceeds the floor
  long checked = 0;
  long failed = 0;
  long kinks = 0;  // entries sitting on a relu kink (one-sided slopes disagree)
};

/// Compares the gradients that `fill_grads` accumulates into Parameter::grad
/// with central differences of `loss`. At most `max_per_param` entries per
/// parameter are checked (spread evenly); -1 checks all of them.
inline GradReport check_gradients_external(const std::vector<Parameter*>& params,
                                           const std::function<Var(Tape&)>& loss,
                                           const std::function<void()>& fill_grads, double tol = 1e-4,
                                           double floor = 1e-8, double h = 1e-5, long max_per_param = -1) {
  for (Parameter* p : params) p->zero_grad();
  fill_grads();
  auto eval = [&] {
    Tape t;
    return loss(t).item();
  };
  auto within = [&](double numeric, double analytic, double& rel) {
    const double err = std::abs(numeric - analytic);
    rel = err <= floor ? 0.0 : err / std::max(std::abs(numeric), std::abs(analytic));
    return rel <= tol;
  };
  GradReport rep;
  for (Parameter* p : params) {
    const long n = static_cast<long>(p->value.size());
    const long stride = max_per_param > 0 && n > max_per_param ? n / max_per_param : 1;
    for (long i = 0; i < n; i += stride) {
      double& x = p->value.data()[i];
      const double x0 = x;
      const double analytic = p->grad.size() ? p->grad.data()[i] : 0.0;
      auto at = [&](double v) {
        x = v;
        const double f = eval();
        x = x0;
        return f;
      };
      ++rep.checked;
      double rel = 0.0;
      if (within((at(x0 + h) - at(x0 - h)) / (2.0 * h), analytic, rel)) continue;
      // Retry closer in; a kink between x0 - h and x0 + h shows up as
      // disagreeing one-sided slopes at the smaller step.
      const double hs = h * 1e-2, f0 = at(x0), fp = at(x0 + hs), fm = at(x0 - hs);
      const double fwd = (fp - f0) / hs, bwd = (f0 - fm) / hs;
      double rel_small = 0.0;
      if (within((fp - fm) / (2.0 * hs), analytic, rel_small)) continue;
      double one_sided = 0.0;
      if (!within(fwd, bwd, one_sided) && one_sided > 1e-2) {
        ++rep.kinks;
        continue;
      }
      rep.worst_rel = std::max(rep.worst_rel, std::min(rel, rel_small));
      ++rep.failed;
    }
  }
  return rep;
}

/// Tape gradients of `loss` against central differences.
inline GradReport check_gradients(const std::vector<Parameter*>& params, const std::function<Var(Tape&)>& loss,
                                  double tol = 1e-4, double floor = 1e-8, double h = 1e-5,
                                  long max_per_param = -1) {
  auto fill = [&] {
    Tape t;
    Var l = loss(t);
    t.backward(l);
    t.flush_param_grads();
  };
  return check_gradients_external(params, loss, fill, tol, floor, h, max_per_param);
}

inline Mat random_mat(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

inline Parameter make_param(const char* name, Mat value) {
  Parameter p;
  p.name = name;
  p.value = std::move(value);
  return p;
}

}  // namespace tsdf::test
