#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "offtopic/errors.hpp"

namespace offtopic {

// Dense row-major shapes. Rank 1 and 2 cover almost everything in the model;
// the 3-d case is the conv kernel bank [k x Din x F].
using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  if (shape.empty()) return "scalar";
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  return s;
}

// Value plus optional gradient slot. Tensors are created by graph ops (or as
// parameters) and their values are immutable afterwards; only `grad`
// accumulates during backward.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // same length as value iff requires_grad
  bool requires_grad = false;

  Tensor() = default;

  Tensor(Shape s, bool req_grad) : shape(std::move(s)), requires_grad(req_grad) {
    for (int d : shape) {
      if (d <= 0) throw ShapeError("tensor: non-positive dimension in " + shape_str(shape));
    }
    value.assign(static_cast<std::size_t>(numel(shape)), T(0));
    if (requires_grad) grad.assign(value.size(), T(0));
  }

  Tensor(Shape s, std::vector<T> data, bool req_grad = false)
      : shape(std::move(s)), value(std::move(data)), requires_grad(req_grad) {
    if (static_cast<std::int64_t>(value.size()) != numel(shape)) {
      throw ShapeError("tensor: data length " + std::to_string(value.size()) +
                       " does not match shape " + shape_str(shape));
    }
    if (requires_grad) grad.assign(value.size(), T(0));
  }

  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(value.size()); }

  void zero_grad() {
    if (requires_grad) grad.assign(value.size(), T(0));
  }
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
TensorPtr<T> make_tensor(Shape shape, bool requires_grad = false) {
  return std::make_shared<Tensor<T>>(std::move(shape), requires_grad);
}

template <typename T>
TensorPtr<T> make_tensor(Shape shape, std::vector<T> data, bool requires_grad = false) {
  return std::make_shared<Tensor<T>>(std::move(shape), std::move(data), requires_grad);
}

}  // namespace offtopic
