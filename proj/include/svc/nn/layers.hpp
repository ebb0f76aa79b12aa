#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "svc/nn/conv.hpp"
#include "svc/nn/ops.hpp"

namespace svc::nn {

template <typename S>
Var<S> lrelu(Var<S> x) {
  return leaky_relu(x, S(0.2));
}

/// conv3 -> lrelu -> conv3, plus identity.
template <typename S>
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(const std::string& name, int channels)
      : c1_(name + ".conv1", channels, channels, 3), c2_(name + ".conv2", channels, channels, 3) {}

  void init(std::mt19937_64& rng) {
    c1_.init_glorot(rng);
    c2_.init_glorot(rng);
  }
  void collect(std::vector<Parameter<S>*>& out) {
    c1_.collect(out);
    c2_.collect(out);
  }
  Var<S> operator()(Var<S> x) const { return add(x, c2_(lrelu(c1_(x)))); }

 private:
  Conv2d<S> c1_, c2_;
};

/// Looks parameters up by name; used to copy weights between precisions.
template <typename S>
std::unordered_map<std::string, Parameter<S>*> by_name(const std::vector<Parameter<S>*>& params) {
  std::unordered_map<std::string, Parameter<S>*> out;
  for (auto* p : params) out.emplace(p->name, p);
  return out;
}

template <typename From, typename To>
void copy_parameters(const std::vector<Parameter<From>*>& from, const std::vector<Parameter<To>*>& to) {
  auto dst = by_name(to);
  for (const auto* p : from) {
    auto it = dst.find(p->name);
    require(it != dst.end(), "copy_parameters: no parameter named " + p->name);
    require(it->second->value.rows() == p->value.rows() && it->second->value.cols() == p->value.cols(),
            "copy_parameters: shape mismatch for " + p->name);
    it->second->value = p->value.template cast<To>();
  }
}

template <typename S>
std::size_t parameter_count(const std::vector<Parameter<S>*>& params, bool include_frozen = true) {
  std::size_t n = 0;
  for (const auto* p : params)
    if (include_frozen || !p->frozen) n += static_cast<std::size_t>(p->count());
  return n;
}

}  // namespace svc::nn
