// Copyright 2026 The tfsvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "tfsvit/common/error.hpp"

namespace tfs::num {

using Index = std::int64_t;
using Shape = std::vector<Index>;

Index shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// std::allocator that default-initializes scalars, so vector growth does
// not memset buffers the caller overwrites anyway.
template <class T>
class NoInitAllocator : public std::allocator<T> {
 public:
  template <class U>
  struct rebind {
    using other = NoInitAllocator<U>;
  };
  using std::allocator<T>::allocator;
  template <class U>
  void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

}  // namespace detail

// Buffer type for tensor payloads. Explicit fills still work as usual;
// plain resizes leave the memory uninitialized.
using DVec = std::vector<double, detail::NoInitAllocator<double>>;

class Tape;

// Dense row-major tensor of 64-bit floats. Value-semantic: copies share the
// underlying buffer, and every operation produces a fresh tensor. A tensor
// becomes gradient-tracked when it carries a node id on some Tape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, DVec data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value) { return Tensor({}, DVec{value}); }
  static Tensor from(Shape shape, std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index extent(int axis) const;
  Index size() const { return data_ ? static_cast<Index>(data_->size()) : 0; }

  const double* data() const { return data_->data(); }
  const DVec& vec() const { return *data_; }
  // Direct mutation is reserved for untracked tensors (parameter buffers,
  // dataset construction); mutating a tracked tensor would corrupt the tape.
  double* mutable_data();

  double at(std::initializer_list<Index> idx) const;
  double item() const;  // value of a scalar (size-1) tensor

  bool tracked() const { return node_ >= 0; }
  int node() const { return node_; }
  Tape* tape() const { return tape_; }

  // Untracked view of the same buffer (constant in any later graph).
  Tensor detached() const;

  // Untracked view of the same buffer under a new shape (same length).
  Tensor aliased(Shape shape) const;

  bool same_buffer(const Tensor& other) const { return data_ == other.data_; }

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<DVec> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Throws NumericError if any element is NaN/Inf. `context` names the op.
void ensure_finite(const Tensor& t, const char* context);

// Row-major strides for a shape.
std::vector<Index> strides_of(const Shape& shape);

}  // namespace tfs::num
