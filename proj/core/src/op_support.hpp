// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <initializer_list>
#include <memory>
#include <type_traits>
#include <vector>

#include "longfnt/tensor.hpp"

// Helpers shared by translation units that define graph ops.
namespace lfnt::detail {

template <class T>
constexpr DType dtype_of() {
  return std::is_same_v<T, float> ? DType::kF32 : DType::kF64;
}

DType common_dtype(const char* op, std::initializer_list<const Tensor*> inputs);

/// Fresh output node. Records as parents the inputs that require grad,
/// unless recording is disabled on this thread.
template <class T>
Tensor make_output(const char* op, Shape shape, std::initializer_list<const Tensor*> inputs) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->dtype = dtype_of<T>();
  node->data = std::vector<T>(shape_numel(shape), T(0));
  node->shape = std::move(shape);
  if (grad_enabled()) {
    for (const Tensor* t : inputs) {
      if (t->defined() && t->requires_grad()) {
        node->requires_grad = true;
        node->parents.push_back(t->node_ptr());
      }
    }
  }
  return Tensor(std::move(node));
}

template <class T>
T* out_ptr(Tensor& t) {
  return t.node()->values<T>().data();
}

template <class T>
const T* in_ptr(const Tensor& t) {
  return t.node()->values<T>().data();
}

/// Gradient buffer of an input, or nullptr when it does not need one.
template <class T>
T* grad_ptr(const Tensor& t) {
  if (!t.defined() || !t.requires_grad()) return nullptr;
  return t.node()->grads<T>().data();
}

}  // namespace lfnt::detail
