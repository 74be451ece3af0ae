#include "cipherbreak/nn/graph.hpp"

#include "cipherbreak/errors.hpp"

namespace cipherbreak::nn {

template <class T>
Var Graph<T>::push(Tensor<T> value, bool requires_grad, Backward back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backward = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <class T>
Var Graph<T>::param(Parameter<T>& p) {
  Var v = push(p.value, grad_enabled_, nullptr);
  nodes_.back().param = &p;
  return v;
}

template <class T>
Tensor<T>& Graph<T>::grad(Var v) {
  Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <class T>
Var Graph<T>::record(Tensor<T> value, std::initializer_list<Var> inputs, Backward back) {
  bool needs = false;
  if (grad_enabled_) {
    for (Var in : inputs) needs = needs || (in.valid() && requires_grad(in));
  }
  return push(std::move(value), needs, needs ? std::move(back) : Backward{});
}

template <class T>
void Graph<T>::backward(Var scalar) {
  if (!grad_enabled_) throw ArgumentError("backward() on a graph built without gradients");
  if (value(scalar).numel() != 1) throw ArgumentError("backward() needs a scalar output");
  grad(scalar).fill(T(1));
  for (int id = scalar.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) continue;
    if (n.backward) {
      n.backward(*this, Var{id});
    } else if (n.param) {
      auto& dst = n.param->grad.vec();
      const auto& src = n.grad.vec();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
    // Release intermediate storage as soon as it has been propagated.
    nodes_[static_cast<std::size_t>(id)].grad = Tensor<T>();
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace cipherbreak::nn
