#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "svc/tensor.hpp"

namespace svc::nn {

/// A named learnable (or frozen) array. Conv weights are stored as
/// cout x (cin*k*k); biases as cout x 1.
template <typename Scalar>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  PlaneMatrix<Scalar> value;
  bool frozen = false;

  Eigen::Index count() const { return value.size(); }
};

/// Glorot/Xavier uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <typename Scalar>
void glorot_uniform(Parameter<Scalar>& p, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = static_cast<Scalar>(dist(rng));
}

}  // namespace svc::nn
