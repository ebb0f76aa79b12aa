#pragma once

#include <cmath>
#include <unordered_map>
#include <vector>

#include "svc/nn/autodiff.hpp"

namespace svc::nn {

/// Adam without weight decay. Moments are kept per parameter, so disjoint
/// parameter groups may be stepped with different learning rates.
template <typename S>
class Adam {
 public:
  explicit Adam(double beta1 = 0.5, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Applies grads (scaled by grad_scale) to every non-frozen parameter in params.
  void step(const std::vector<Parameter<S>*>& params, const typename Tape<S>::ParamGrads& grads, double lr,
            double grad_scale = 1.0) {
    for (Parameter<S>* p : params) {
      if (p->frozen) continue;
      auto g = grads.find(p);
      if (g == grads.end()) continue;
      State& s = state_[p];
      if (s.m.size() == 0) {
        s.m = PlaneMatrix<S>::Zero(p->value.rows(), p->value.cols());
        s.v = PlaneMatrix<S>::Zero(p->value.rows(), p->value.cols());
      }
      ++s.t;
      const auto grad = (g->second.array() * static_cast<S>(grad_scale)).eval();
      s.m.array() = static_cast<S>(beta1_) * s.m.array() + static_cast<S>(1 - beta1_) * grad;
      s.v.array() = static_cast<S>(beta2_) * s.v.array() + static_cast<S>(1 - beta2_) * grad.square();
      const double c1 = 1.0 - std::pow(beta1_, s.t);
      const double c2 = 1.0 - std::pow(beta2_, s.t);
      const S step = static_cast<S>(lr / c1);
      const S denom_scale = static_cast<S>(1.0 / std::sqrt(c2));
      p->value.array() -= step * s.m.array() / ((s.v.array().sqrt() * denom_scale) + static_cast<S>(eps_));
    }
  }

 private:
  struct State {
    PlaneMatrix<S> m;
    PlaneMatrix<S> v;
    long t = 0;
  };

  double beta1_;
  double beta2_;
  double eps_;
  std::unordered_map<const Parameter<S>*, State> state_;
};

}  // namespace svc::nn
