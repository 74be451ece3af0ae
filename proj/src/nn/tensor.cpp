#include "cipherbreak/nn/tensor.hpp"

#include "cipherbreak/errors.hpp"

namespace cipherbreak::nn {

std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <class T>
void Tensor<T>::check_size() const {
  if (shape_numel(shape_) != data_.size()) {
    throw StructuralError("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_string(shape_));
  }
}

template <class T>
void Tensor<T>::throw_reshape(const Shape& s) const {
  throw StructuralError("cannot reshape " + shape_string(shape_) + " to " + shape_string(s));
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace cipherbreak::nn
