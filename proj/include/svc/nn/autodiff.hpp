#pragma once

#include <deque>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "svc/error.hpp"
#include "svc/nn/parameter.hpp"
#include "svc/tensor.hpp"

namespace svc::nn {

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  const Tensor<Scalar>& value() const { return tape->value(id); }
  bool requires_grad() const { return tape->requires_grad(id); }
  int channels() const { return value().c; }
  int height() const { return value().h; }
  int width() const { return value().w; }
};

/// Reverse-mode recording of tensor operations. With gradients disabled the
/// tape only holds values, so the same model code serves inference.
template <typename Scalar>
class Tape {
 public:
  using T = Tensor<Scalar>;
  using BackwardFn = std::function<void(Tape&, const T& grad, const T& out)>;
  using ParamGrads = std::unordered_map<const Parameter<Scalar>*, PlaneMatrix<Scalar>>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<Scalar> constant(T value) { return record(std::move(value), false, nullptr); }

  /// Leaf whose gradient is kept after backward().
  Var<Scalar> variable(T value) { return record(std::move(value), grad_enabled_, nullptr); }

  Var<Scalar> record(T value, bool requires_grad, BackwardFn fn) {
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    n.requires_grad = requires_grad && grad_enabled_;
    if (n.requires_grad) n.backward = std::move(fn);
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  const T& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  void accumulate(int id, const T& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad.m += g.m;
    }
  }

  template <typename Expr>
  void accumulate_matrix(int id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = T(n.value.c, n.value.h, n.value.w);
      n.grad.m = g;
      n.has_grad = true;
    } else {
      n.grad.m += g;
    }
  }

  void accumulate_param(const Parameter<Scalar>* p, const PlaneMatrix<Scalar>& g) {
    if (p->frozen) return;
    auto [it, inserted] = param_grads_.try_emplace(p, g);
    if (!inserted) it->second += g;
  }

  /// Backpropagates from a 1x1x1 loss.
  void backward(Var<Scalar> loss) {
    require(loss.tape == this, "backward: variable from another tape");
    const T& v = value(loss.id);
    require(v.size() == 1, "backward: loss must be a scalar");
    if (!nodes_[loss.id].requires_grad) return;
    accumulate(loss.id, T(1, 1, 1, Scalar(1)));
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, n.grad, n.value);
      // Interior gradients are no longer needed once propagated.
      n.grad = T();
      n.has_grad = false;
    }
  }

  /// Gradient of a leaf created with variable(); zeros if nothing reached it.
  T grad(Var<Scalar> v) const {
    const Node& n = nodes_[v.id];
    return n.has_grad ? n.grad : T::zeros_like(n.value);
  }

  const ParamGrads& param_grads() const { return param_grads_; }

 private:
  struct Node {
    T value;
    T grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  bool grad_enabled_;
  std::deque<Node> nodes_;
  ParamGrads param_grads_;
};

template <typename Scalar>
bool any_requires_grad(std::initializer_list<Var<Scalar>> vars) {
  for (const auto& v : vars)
    if (v.requires_grad()) return true;
  return false;
}

}  // namespace svc::nn
