// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include "longfnt/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace lfnt {
namespace {

thread_local DType t_default_dtype = DType::kF32;
thread_local bool t_grad_enabled = true;

template <class T>
std::vector<T> convert(std::span<const double> values) {
  return std::vector<T>(values.begin(), values.end());
}

}  // namespace

DType default_dtype() noexcept { return t_default_dtype; }
void set_default_dtype(DType dtype) noexcept { t_default_dtype = dtype; }

PrecisionScope::PrecisionScope(DType dtype) noexcept : previous_(t_default_dtype) {
  t_default_dtype = dtype;
}
PrecisionScope::~PrecisionScope() { t_default_dtype = previous_; }

bool grad_enabled() noexcept { return t_grad_enabled; }
NoGradScope::NoGradScope() noexcept : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradScope::~NoGradScope() { t_grad_enabled = previous_; }

std::size_t shape_numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

ShapeError::ShapeError(std::string_view op, const Shape& lhs, const Shape& rhs)
    : std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(lhs) +
                            " vs " + shape_str(rhs)) {}

ShapeError::ShapeError(std::string_view op, const std::string& detail)
    : std::invalid_argument(std::string(op) + ": " + detail) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->dtype = default_dtype();
  const auto n = shape_numel(shape);
  node->shape = std::move(shape);
  if (node->dtype == DType::kF32) {
    node->data = std::vector<float>(n, 0.0f);
  } else {
    node->data = std::vector<double>(n, 0.0);
  }
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_numel(shape), value);
  return from_values(std::move(shape), v, requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::span<const double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("from_values", shape, Shape{values.size()});
  }
  auto node = std::make_shared<Node>();
  node->dtype = default_dtype();
  node->shape = std::move(shape);
  if (node->dtype == DType::kF32) {
    node->data = convert<float>(values);
  } else {
    node->data = convert<double>(values);
  }
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values(Shape{1}, std::span<const double>(&value, 1), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw ShapeError("dim", "axis " + std::to_string(axis) + " out of range for " +
                                shape_str(node_->shape));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return shape_numel(node_->shape); }

std::size_t Tensor::rows() const {
  const auto& s = node_->shape;
  if (s.size() == 1) return 1;
  if (s.size() != 2) throw ShapeError("rows", "expected rank 1 or 2, got " + shape_str(s));
  return s[0];
}

std::size_t Tensor::cols() const {
  const auto& s = node_->shape;
  if (s.size() == 1) return s[0];
  if (s.size() != 2) throw ShapeError("cols", "expected rank 1 or 2, got " + shape_str(s));
  return s[1];
}

DType Tensor::dtype() const { return node_->dtype; }
bool Tensor::requires_grad() const { return node_->requires_grad; }
const char* Tensor::op_name() const { return node_->op; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item", node_->shape, Shape{1});
  return value(0);
}

double Tensor::value(std::size_t flat_index) const {
  return std::visit([&](const auto& v) { return static_cast<double>(v.at(flat_index)); },
                    node_->data);
}

std::vector<double> Tensor::values() const {
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); },
                    node_->data);
}

void Tensor::assign(std::span<const double> values) {
  if (values.size() != numel()) throw ShapeError("assign", shape(), Shape{values.size()});
  std::visit(
      [&](auto& v) {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<typename std::decay_t<decltype(v)>::value_type>(values[i]);
      },
      node_->data);
}

bool Tensor::has_grad() const { return node_->has_grad; }

std::vector<double> Tensor::grad_values() const {
  if (!node_->has_grad) return std::vector<double>(numel(), 0.0);
  return std::visit([](const auto& g) { return std::vector<double>(g.begin(), g.end()); },
                    node_->grad);
}

void Tensor::zero_grad() {
  node_->has_grad = false;
  node_->grad = std::vector<float>{};
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward", "root must be a scalar, got " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of requires-grad nodes.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  dispatch(node_->dtype, [&]<typename T>() {
    node_->grads<T>()[0] += T(1);
    return 0;
  });
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->has_grad) n->backward(*n);
  }
  for (Node* n : order) {
    if (!n->has_grad) {
      dispatch(n->dtype, [&]<typename T>() {
        n->grads<T>();
        return 0;
      });
    }
  }
}

Tensor Tensor::detach() const {
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->dtype = node_->dtype;
  node->data = node_->data;
  return Tensor(std::move(node));
}

}  // namespace lfnt
