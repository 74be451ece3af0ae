#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cipherbreak/nn/tensor.hpp"

namespace cipherbreak::nn {

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

// Owns parameters with stable addresses, in registration order.
template <class T>
class ParameterSet {
 public:
  Parameter<T>& add(std::string name, Shape shape) {
    auto p = std::make_unique<Parameter<T>>();
    p->name = std::move(name);
    p->value = Tensor<T>(shape);
    p->grad = Tensor<T>(shape);
    params_.push_back(std::move(p));
    return *params_.back();
  }
  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.numel();
    return n;
  }
  void zero_grad() {
    for (auto& p : params_) p->grad.fill(T(0));
  }
  Parameter<T>* find(const std::string& name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Build one per forward pass; call backward() once on a
// scalar. With gradients disabled no backward closures are recorded.
template <class T>
class Graph {
 public:
  // Invoked with the graph and the op's own output handle.
  using Backward = std::function<void(Graph&, Var)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }
  Var param(Parameter<T>& p);

  const Tensor<T>& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  Tensor<T>& mutable_value(Var v) { return nodes_[static_cast<std::size_t>(v.id)].value; }
  const Shape& shape(Var v) const { return value(v).shape(); }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

  // Gradient buffer of `v`, allocated as zeros on first access.
  Tensor<T>& grad(Var v);
  bool has_grad(Var v) const { return !nodes_[static_cast<std::size_t>(v.id)].grad.empty(); }

  // Records an op output. `back` runs during backward() if any input needs grad.
  Var record(Tensor<T> value, std::initializer_list<Var> inputs, Backward back);

  void backward(Var scalar);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Backward backward;
    Parameter<T>* param = nullptr;
  };

  Var push(Tensor<T> value, bool requires_grad, Backward back);

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace cipherbreak::nn
