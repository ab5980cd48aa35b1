// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace lfnt {

/// Element type of a tensor. Training runs in kF32; gradient verification
/// runs in kF64.
enum class DType : std::uint8_t { kF32, kF64 };

/// The dtype given to newly created tensors on the calling thread.
DType default_dtype() noexcept;
void set_default_dtype(DType dtype) noexcept;

/// Switches the calling thread's precision mode for the lifetime of the scope.
class PrecisionScope {
 public:
  explicit PrecisionScope(DType dtype) noexcept;
  ~PrecisionScope();
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  DType previous_;
};

bool grad_enabled() noexcept;

/// Disables graph recording on the calling thread (decoding, evaluation).
class NoGradScope {
 public:
  NoGradScope() noexcept;
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool previous_;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

/// Raised when operand shapes do not conform. The message names the op and
/// both shapes.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string_view op, const Shape& lhs, const Shape& rhs);
  ShapeError(std::string_view op, const std::string& detail);
};

/// Raised for NaN inputs and other numerically invalid states.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

using Buffer = std::variant<std::vector<float>, std::vector<double>>;

/// One vertex of the recorded computation graph. Values are immutable once
/// the producing op returns; only the gradient slot is written afterwards.
struct Node {
  Shape shape;
  DType dtype = DType::kF32;
  Buffer data;
  Buffer grad;
  bool requires_grad = false;
  bool has_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  template <class T>
  std::vector<T>& values() {
    return std::get<std::vector<T>>(data);
  }
  template <class T>
  const std::vector<T>& values() const {
    return std::get<std::vector<T>>(data);
  }
  /// Gradient buffer, zero-allocated on first access.
  template <class T>
  std::vector<T>& grads() {
    if (!has_grad) {
      grad = std::vector<T>(shape_numel(shape), T(0));
      has_grad = true;
    }
    return std::get<std::vector<T>>(grad);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::span<const double> values,
                            bool requires_grad = false);
  static Tensor from_values(Shape shape, const std::vector<double>& values,
                            bool requires_grad = false) {
    return from_values(std::move(shape), std::span<const double>(values), requires_grad);
  }
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  /// Rows/cols of a rank-2 tensor; a rank-1 tensor is a single row.
  std::size_t rows() const;
  std::size_t cols() const;
  DType dtype() const;
  bool requires_grad() const;
  const char* op_name() const;

  double item() const;
  double value(std::size_t flat_index) const;
  std::vector<double> values() const;

  template <class T>
  std::span<const T> data() const {
    const auto& v = node_->values<T>();
    return {v.data(), v.size()};
  }
  /// In-place access for leaf tensors (optimizer updates, checkpoint loads).
  template <class T>
  std::span<T> mutable_data() {
    auto& v = node_->values<T>();
    return {v.data(), v.size()};
  }
  void assign(std::span<const double> values);

  bool has_grad() const;
  std::vector<double> grad_values() const;
  template <class T>
  std::span<T> grad() {
    auto& g = node_->grads<T>();
    return {g.data(), g.size()};
  }
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Every reachable tensor that
  /// requires grad ends with a (possibly zero) gradient buffer.
  void backward() const;

  /// Same values, no history, no grad requirement.
  Tensor detach() const;

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Calls `fn.template operator()<T>()` with T = float or double.
template <class Fn>
decltype(auto) dispatch(DType dtype, Fn&& fn) {
  if (dtype == DType::kF32) return fn.template operator()<float>();
  return fn.template operator()<double>();
}

}  // namespace lfnt
