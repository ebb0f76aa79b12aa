#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "svc/nn/autodiff.hpp"

namespace testutil {

struct GradCheck {
  double max_rel_error = 0;
  int checked = 0;
  int skipped = 0;  // both gradients below the noise floor (roundoff of the difference quotient)
  int kinks = 0;    // difference quotient unstable between h and h/2: an activation kink lies inside the step
  std::string worst;
};

namespace detail {

// Checks one scalar. `eval_at(delta)` returns the loss with the scalar shifted
// by delta. A sample that disagrees with autodiff is retried at h/2; when the
// two quotients disagree with each other the point straddles a kink and is
// counted rather than compared. Quotients that agree with each other but not
// with autodiff are reported as they are.
inline void check_one(GradCheck& out, double analytic, const std::function<double(double)>& eval_at, double h,
                      double floor, const std::string& label) {
  auto central = [&](double step) { return (eval_at(step) - eval_at(-step)) / (2 * step); };
  double numeric = central(h);
  double scale = std::max(std::abs(numeric), std::abs(analytic));
  if (scale < floor) {
    ++out.skipped;
    return;
  }
  double rel = std::abs(numeric - analytic) / scale;
  if (rel > 1e-6) {
    const double half = central(h / 2);
    if (std::abs(half - numeric) > 1e-5 * std::max(std::abs(numeric), std::abs(half)) + 1e-9) {
      ++out.kinks;
      return;
    }
  }
  if (rel > out.max_rel_error) {
    out.max_rel_error = rel;
    char buf[96];
    std::snprintf(buf, sizeof buf, " numeric %.6g analytic %.6g", numeric, analytic);
    out.worst = label + buf;
  }
  ++out.checked;
}

}  // namespace detail

/// Compares autodiff parameter gradients of a scalar loss against central
/// differences, sampling every `stride`-th trainable scalar.
inline GradCheck check_param_grads(const std::vector<svc::nn::Parameter<double>*>& params,
                                   const std::function<svc::nn::Var<double>(svc::nn::Tape<double>&)>& loss,
                                   int stride, double h = 1e-5, double floor = 1e-7) {
  svc::nn::Tape<double> tape(true);
  tape.backward(loss(tape));
  const auto& grads = tape.param_grads();
  GradCheck out;
  long k = 0;
  for (auto* p : params) {
    if (p->frozen) continue;
    auto it = grads.find(p);
    for (Eigen::Index i = 0; i < p->value.size(); ++i, ++k) {
      if (k % stride != 0) continue;
      double& v = p->value.data()[i];
      const double saved = v;
      auto eval_at = [&](double delta) {
        v = saved + delta;
        svc::nn::Tape<double> t(false);
        const double r = loss(t).value().m(0, 0);
        v = saved;
        return r;
      };
      const double analytic = it == grads.end() ? 0.0 : it->second.data()[i];
      detail::check_one(out, analytic, eval_at, h, floor, p->name + "[" + std::to_string(i) + "]");
    }
  }
  return out;
}

/// Same check for the gradient with respect to a leaf input tensor.
inline GradCheck check_input_grads(svc::Tensor<double> x,
                                   const std::function<svc::nn::Var<double>(svc::nn::Var<double>)>& loss,
                                   double h = 1e-6, double floor = 1e-7, int stride = 1) {
  svc::nn::Tape<double> tape(true);
  auto xv = tape.variable(x);
  tape.backward(loss(xv));
  const svc::Tensor<double> g = tape.grad(xv);
  GradCheck out;
  for (Eigen::Index i = 0; i < x.m.size(); i += stride) {
    const double saved = x.m.data()[i];
    auto eval_at = [&](double delta) {
      x.m.data()[i] = saved + delta;
      svc::nn::Tape<double> t(false);
      const double r = loss(t.constant(x)).value().m(0, 0);
      x.m.data()[i] = saved;
      return r;
    };
    detail::check_one(out, g.m.data()[i], eval_at, h, floor, "input[" + std::to_string(i) + "]");
  }
  return out;
}

}  // namespace testutil
