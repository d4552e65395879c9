// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "tfsvit/numerics/tensor.hpp"

#include <cmath>
#include <sstream>

namespace tfs::num {

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) {
    if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::vector<Index> strides_of(const Shape& shape) {
  std::vector<Index> s(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] =
        s[static_cast<std::size_t>(i) + 1] * shape[static_cast<std::size_t>(i) + 1];
  }
  return s;
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<DVec>(static_cast<std::size_t>(shape_size(shape_)), 0.0)) {}

Tensor::Tensor(Shape shape, DVec data)
    : shape_(std::move(shape)), data_(std::make_shared<DVec>(std::move(data))) {
  if (shape_size(shape_) != static_cast<Index>(data_->size())) {
    throw ShapeError("data length " + std::to_string(data_->size()) +
                     " does not match shape " + shape_str(shape_));
  }
}


Tensor Tensor::full(Shape shape, double value) {
  Index n = shape_size(shape);
  return Tensor(std::move(shape), DVec(static_cast<std::size_t>(n), value));
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values) {
  return Tensor(std::move(shape), DVec(values));
}

Index Tensor::extent(int axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) throw ShapeError("axis out of range for " + shape_str(shape_));
  return shape_[static_cast<std::size_t>(axis)];
}

double* Tensor::mutable_data() {
  if (tracked()) throw Error("mutable_data() on a tracked tensor");
  return data_->data();
}

double Tensor::at(std::initializer_list<Index> idx) const {
  if (static_cast<int>(idx.size()) != rank()) throw ShapeError("at(): index rank mismatch");
  auto strides = strides_of(shape_);
  Index off = 0;
  int i = 0;
  for (Index v : idx) {
    if (v < 0 || v >= shape_[static_cast<std::size_t>(i)]) throw IndexError("at(): index out of range");
    off += v * strides[static_cast<std::size_t>(i)];
    ++i;
  }
  return (*data_)[static_cast<std::size_t>(off)];
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return (*data_)[0];
}

Tensor Tensor::detached() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

Tensor Tensor::aliased(Shape shape) const {
  if (shape_size(shape) != size()) {
    throw ShapeError("aliased: " + shape_str(shape_) + " -> " + shape_str(shape) +
                     " changes element count");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = data_;
  return t;
}

void ensure_finite(const Tensor& t, const char* context) {
  const double* p = t.data();
  const Index n = t.size();
  for (Index i = 0; i < n; ++i) {
    if (!std::isfinite(p[i])) {
      throw NumericError(std::string(context) + ": non-finite value at flat index " +
                         std::to_string(i));
    }
  }
}

}  // namespace tfs::num
