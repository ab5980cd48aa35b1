// Copyright 2026 The LongFNT Authors
// SPDX-License-Identifier: Apache-2.0

#include "longfnt/ops.hpp"

#include "op_support.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <limits>
#include <string>

namespace lfnt {
namespace detail {

DType common_dtype(const char* op, std::initializer_list<const Tensor*> inputs) {
  const Tensor* first = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->defined()) continue;
    if (!first) {
      first = t;
    } else if (t->dtype() != first->dtype()) {
      throw ShapeError(op, "mixed precision operands");
    }
  }
  if (!first) throw ShapeError(op, "no defined operands");
  return first->dtype();
}

}  // namespace detail

namespace {

using detail::common_dtype;
using detail::grad_ptr;
using detail::in_ptr;
using detail::make_output;
using detail::out_ptr;

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) throw ShapeError(op, "expected a matrix, got " + shape_str(t.shape()));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
}

void check_finite(const char* op, const Tensor& x) {
  dispatch(x.dtype(), [&]<typename T>() {
    for (T v : x.data<T>()) {
      if (std::isnan(v)) throw NumericError(std::string(op) + ": NaN input");
    }
    return 0;
  });
}

template <class T, class Fwd, class Deriv>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  Tensor out = make_output<T>(op, x.shape(), {&x});
  const T* xv = in_ptr<T>(x);
  T* yv = out_ptr<T>(out);
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) yv[i] = fwd(xv[i]);
  if (out.requires_grad()) {
    out.node()->backward = [x, n, deriv](Node& self) {
      const T* g = self.grads<T>().data();
      const T* xv = in_ptr<T>(x);
      const T* yv = self.values<T>().data();
      T* gx = grad_ptr<T>(x);
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
    };
  }
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  if (a.dim(1) != b.dim(0)) throw ShapeError("matmul", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  return dispatch(common_dtype("matmul", {&a, &b}), [&]<typename T>() {
    Tensor out = make_output<T>("matmul", {m, n}, {&a, &b});
    const T* av = in_ptr<T>(a);
    const T* bv = in_ptr<T>(b);
    T* c = out_ptr<T>(out);
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T aip = av[i * k + p];
        const T* brow = bv + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
      }
    }
    if (out.requires_grad()) {
      out.node()->backward = [a, b, m, k, n](Node& self) {
        const T* g = self.grads<T>().data();
        const T* av = in_ptr<T>(a);
        const T* bv = in_ptr<T>(b);
        if (T* ga = grad_ptr<T>(a)) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              T s = 0;
              for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bv[p * n + j];
              ga[i * k + p] += s;
            }
        }
        if (T* gb = grad_ptr<T>(b)) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const T aip = av[i * k + p];
              for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
            }
        }
      };
    }
    return out;
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2("matmul_nt", a);
  require_rank2("matmul_nt", b);
  if (a.dim(1) != b.dim(1)) throw ShapeError("matmul_nt", a.shape(), b.shape());
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  return dispatch(common_dtype("matmul_nt", {&a, &b}), [&]<typename T>() {
    Tensor out = make_output<T>("matmul_nt", {m, n}, {&a, &b});
    const T* av = in_ptr<T>(a);
    const T* bv = in_ptr<T>(b);
    T* c = out_ptr<T>(out);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        T s = 0;
        for (std::size_t p = 0; p < k; ++p) s += av[i * k + p] * bv[j * k + p];
        c[i * n + j] = s;
      }
    if (out.requires_grad()) {
      out.node()->backward = [a, b, m, k, n](Node& self) {
        const T* g = self.grads<T>().data();
        const T* av = in_ptr<T>(a);
        const T* bv = in_ptr<T>(b);
        T* ga = grad_ptr<T>(a);
        T* gb = grad_ptr<T>(b);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const T gij = g[i * n + j];
            if (gij == T(0)) continue;
            if (ga)
              for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv[j * k + p];
            if (gb)
              for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gij * av[i * k + p];
          }
      };
    }
    return out;
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2("transpose", a);
  const std::size_t m = a.dim(0), n = a.dim(1);
  return dispatch(a.dtype(), [&]<typename T>() {
    Tensor out = make_output<T>("transpose", {n, m}, {&a});
    const T* av = in_ptr<T>(a);
    T* o = out_ptr<T>(out);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) o[j * m + i] = av[i * n + j];
    if (out.requires_grad()) {
      out.node()->backward = [a, m, n](Node& self) {
        const T* g = self.grads<T>().data();
        T* ga = grad_ptr<T>(a);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
      };
    }
    return out;
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank2("linear", weight);
  const bool vector_input = x.rank() == 1;
  if (!vector_input) require_rank2("linear", x);
  const std::size_t n = x.rows(), in = x.cols(), outd = weight.dim(1);
  if (weight.dim(0) != in) throw ShapeError("linear", x.shape(), weight.shape());
  if (bias.defined() && bias.numel() != outd) throw ShapeError("linear", weight.shape(), bias.shape());
  Shape out_shape = vector_input ? Shape{outd} : Shape{n, outd};
  return dispatch(common_dtype("linear", {&x, &weight, &bias}), [&]<typename T>() {
    Tensor out = make_output<T>("linear", out_shape, {&x, &weight, &bias});
    const T* xv = in_ptr<T>(x);
    const T* wv = in_ptr<T>(weight);
    T* y = out_ptr<T>(out);
    for (std::size_t i = 0; i < n; ++i) {
      T* yrow = y + i * outd;
      if (bias.defined()) {
        const T* bv = in_ptr<T>(bias);
        std::copy(bv, bv + outd, yrow);
      }
      for (std::size_t p = 0; p < in; ++p) {
        const T xip = xv[i * in + p];
        const T* wrow = wv + p * outd;
        for (std::size_t j = 0; j < outd; ++j) yrow[j] += xip * wrow[j];
      }
    }
    if (out.requires_grad()) {
      out.node()->backward = [x, weight, bias, n, in, outd](Node& self) {
        const T* g = self.grads<T>().data();
        const T* xv = in_ptr<T>(x);
        const T* wv = in_ptr<T>(weight);
        if (T* gx = grad_ptr<T>(x)) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < in; ++p) {
              T s = 0;
              const T* wrow = wv + p * outd;
              const T* grow = g + i * outd;
              for (std::size_t j = 0; j < outd; ++j) s += grow[j] * wrow[j];
              gx[i * in + p] += s;
            }
        }
        if (T* gw = grad_ptr<T>(weight)) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < in; ++p) {
              const T xip = xv[i * in + p];
              T* gwrow = gw + p * outd;
              const T* grow = g + i * outd;
              for (std::size_t j = 0; j < outd; ++j) gwrow[j] += xip * grow[j];
            }
        }
        if (T* gb = grad_ptr<T>(bias)) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < outd; ++j) gb[j] += g[i * outd + j];
        }
      };
    }
    return out;
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  return dispatch(common_dtype("add", {&a, &b}), [&]<typename T>() {
    Tensor out = make_output<T>("add", a.shape(), {&a, &b});
    const std::size_t n = a.numel();
    const T* av = in_ptr<T>(a);
    const T* bv = in_ptr<T>(b);
    T* o = out_ptr<T>(out);
    for (std::size_t i = 0; i < n; ++i) o[i] = av[i] + bv[i];
    if (out.requires_grad()) {
      out.node()->backward = [a, b, n](Node& self) {
        const T* g = self.grads<T>().data();
        if (T* ga = grad_ptr<T>(a))
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        if (T* gb = grad_ptr<T>(b))
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
      };
    }
    return out;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  return dispatch(common_dtype("sub", {&a, &b}), [&]<typename T>() {
    Tensor out = make_output<T>("sub", a.shape(), {&a, &b});
    const std::size_t n = a.numel();
    const T* av = in_ptr<T>(a);
    const T* bv = in_ptr<T>(b);
    T* o = out_ptr<T>(out);
    for (std::size_t i = 0; i < n; ++i) o[i] = av[i] - bv[i];
    if (out.requires_grad()) {
      out.node()->backward = [a, b, n](Node& self) {
        const T* g = self.grads<T>().data();
        if (T* ga = grad_ptr<T>(a))
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        if (T* gb = grad_ptr<T>(b))
          for (std::size_t i = 0; i < n; ++i) gb[i] -= g[i];
      };
    }
    return out;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  return dispatch(common_dtype("mul", {&a, &b}), [&]<typename T>() {
    Tensor out = make_output<T>("mul", a.shape(), {&a, &b});
    const std::size_t n = a.numel();
    const T* av = in_ptr<T>(a);
    const T* bv = in_ptr<T>(b);
    T* o = out_ptr<T>(out);
    for (std::size_t i = 0; i < n; ++i) o[i] = av[i] * bv[i];
    if (out.requires_grad()) {
      out.node()->backward = [a, b, n](Node& self) {
        const T* g = self.grads<T>().data();
        const T* av = in_ptr<T>(a);
        const T* bv = in_ptr<T>(b);
        if (T* ga = grad_ptr<T>(a))
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bv[i];
        if (T* gb = grad_ptr<T>(b))
          for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * av[i];
      };
    }
    return out;
  });
}

Tensor scale(const Tensor& a, double factor) {
  return dispatch(a.dtype(), [&]<typename T>() {
    const T f = static_cast<T>(factor);
    return unary<T>(
        "scale", a, [f](T v) { return v * f; }, [f](T, T) { return f; });
  });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) throw ShapeError("mul_scalar", a.shape(), s.shape());
  return dispatch(common_dtype("mul_scalar", {&a, &s}), [&]<typename T>() {
    Tensor out = make_output<T>("mul_scalar", a.shape(), {&a, &s});
    const std::size_t n = a.numel();
    const T* av = in_ptr<T>(a);
    const T sv = in_ptr<T>(s)[0];
    T* o = out_ptr<T>(out);
    for (std::size_t i = 0; i < n; ++i) o[i] = av[i] * sv;
    if (out.requires_grad()) {
      out.node()->backward = [a, s, n](Node& self) {
        const T* g = self.grads<T>().data();
        const T* av = in_ptr<T>(a);
        const T sv = in_ptr<T>(s)[0];
        if (T* ga = grad_ptr<T>(a))
          for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * sv;
        if (T* gs = grad_ptr<T>(s)) {
          T acc = 0;
          for (std::size_t i = 0; i < n; ++i) acc += g[i] * av[i];
          gs[0] += acc;
        }
      };
    }
    return out;
  });
}

Tensor add_row(const Tensor& x, const Tensor& r) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (r.numel() != cols) throw ShapeError("add_row", x.shape(), r.shape());
  return dispatch(common_dtype("add_row", {&x, &r}), [&]<typename T>() {
    Tensor out = make_output<T>("add_row", x.shape(), {&x, &r});
    const T* xv = in_ptr<T>(x);
    const T* rv = in_ptr<T>(r);
    T* o = out_ptr<T>(out);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) o[i * cols + j] = xv[i * cols + j] + rv[j];
    if (out.requires_grad()) {
      out.node()->backward = [x, r, rows, cols](Node& self) {
        const T* g = self.grads<T>().data();
        if (T* gx = grad_ptr<T>(x))
          for (std::size_t i = 0; i < rows * cols; ++i) gx[i] += g[i];
        if (T* gr = grad_ptr<T>(r))
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) gr[j] += g[i * cols + j];
      };
    }
    return out;
  });
}

Tensor pair_add(const Tensor& a, const Tensor& b) {
  require_rank2("pair_add", a);
  require_rank2("pair_add", b);
  if (a.dim(1) != b.dim(1)) throw ShapeError("pair_add", a.shape(), b.shape());
  const std::size_t ta = a.dim(0), lb = b.dim(0), m = a.dim(1);
  return dispatch(common_dtype("pair_add", {&a, &b}), [&]<typename T>() {
    Tensor out = make_output<T>("pair_add", {ta * lb, m}, {&a, &b});
    const T* av = in_ptr<T>(a);
    const T* bv = in_ptr<T>(b);
    T* o = out_ptr<T>(out);
    for (std::size_t i = 0; i < ta; ++i)
      for (std::size_t j = 0; j < lb; ++j) {
        T* orow = o + (i * lb + j) * m;
        for (std::size_t c = 0; c < m; ++c) orow[c] = av[i * m + c] + bv[j * m + c];
      }
    if (out.requires_grad()) {
      out.node()->backward = [a, b, ta, lb, m](Node& self) {
        const T* g = self.grads<T>().data();
        T* ga = grad_ptr<T>(a);
        T* gb = grad_ptr<T>(b);
        for (std::size_t i = 0; i < ta; ++i)
          for (std::size_t j = 0; j < lb; ++j) {
            const T* grow = g + (i * lb + j) * m;
            if (ga)
              for (std::size_t c = 0; c < m; ++c) ga[i * m + c] += grow[c];
            if (gb)
              for (std::size_t c = 0; c < m; ++c) gb[j * m + c] += grow[c];
          }
      };
    }
    return out;
  });
}

Tensor relu(const Tensor& x) {
  return dispatch(x.dtype(), [&]<typename T>() {
    return unary<T>(
        "relu", x, [](T v) { return v > T(0) ? v : T(0); },
        [](T v, T) { return v > T(0) ? T(1) : T(0); });
  });
}

Tensor sigmoid(const Tensor& x) {
  return dispatch(x.dtype(), [&]<typename T>() {
    return unary<T>(
        "sigmoid", x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
        [](T, T y) { return y * (T(1) - y); });
  });
}

Tensor tanh(const Tensor& x) {
  return dispatch(x.dtype(), [&]<typename T>() {
    return unary<T>(
        "tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
  });
}

Tensor swish(const Tensor& x) {
  return dispatch(x.dtype(), [&]<typename T>() {
    return unary<T>(
        "swish", x, [](T v) { return v / (T(1) + std::exp(-v)); },
        [](T v, T) {
          const T s = T(1) / (T(1) + std::exp(-v));
          return s * (T(1) + v * (T(1) - s));
        });
  });
}

Tensor logaddexp(const Tensor& a, const Tensor& b) {
  require_same_shape("logaddexp", a, b);
  return dispatch(common_dtype("logaddexp", {&a, &b}), [&]<typename T>() {
    Tensor out = make_output<T>("logaddexp", a.shape(), {&a, &b});
    const std::size_t n = a.numel();
    const T* av = in_ptr<T>(a);
    const T* bv = in_ptr<T>(b);
    T* o = out_ptr<T>(out);
    constexpr T kNegInf = -std::numeric_limits<T>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const T m = std::max(av[i], bv[i]);
      o[i] = m == kNegInf ? kNegInf : m + std::log(std::exp(av[i] - m) + std::exp(bv[i] - m));
    }
    if (out.requires_grad()) {
      out.node()->backward = [a, b, n](Node& self) {
        const T* g = self.grads<T>().data();
        const T* y = self.values<T>().data();
        const T* av = in_ptr<T>(a);
        const T* bv = in_ptr<T>(b);
        T* ga = grad_ptr<T>(a);
        T* gb = grad_ptr<T>(b);
        for (std::size_t i = 0; i < n; ++i) {
          if (std::isinf(y[i]) && y[i] < 0) continue;
          if (ga) ga[i] += g[i] * std::exp(av[i] - y[i]);
          if (gb) gb[i] += g[i] * std::exp(bv[i] - y[i]);
        }
      };
    }
    return out;
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols", "no operands");
  const std::size_t rows = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols", parts[0].shape(), p.shape());
    if (p.dtype() != parts[0].dtype()) throw ShapeError("concat_cols", "mixed precision operands");
    total += p.cols();
  }
  return dispatch(parts[0].dtype(), [&]<typename T>() {
    Tensor out = make_output<T>("concat_cols", {rows, total}, {});
    std::vector<Tensor> kept(parts.begin(), parts.end());
    if (grad_enabled()) {
      for (const auto& p : kept) {
        if (p.requires_grad()) {
          out.node()->requires_grad = true;
          out.node()->parents.push_back(p.node_ptr());
        }
      }
    }
    T* o = out_ptr<T>(out);
    std::size_t offset = 0;
    for (const auto& p : kept) {
      const std::size_t c = p.cols();
      const T* pv = in_ptr<T>(p);
      for (std::size_t i = 0; i < rows; ++i)
        std::copy(pv + i * c, pv + (i + 1) * c, o + i * total + offset);
      offset += c;
    }
    if (out.requires_grad()) {
      out.node()->backward = [kept, rows, total](Node& self) {
        const T* g = self.grads<T>().data();
        std::size_t offset = 0;
        for (const auto& p : kept) {
          const std::size_t c = p.cols();
          if (T* gp = grad_ptr<T>(p))
            for (std::size_t i = 0; i < rows; ++i)
              for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += g[i * total + offset + j];
          offset += c;
        }
      };
    }
    return out;
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows", "no operands");
  const std::size_t cols = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows", parts[0].shape(), p.shape());
    if (p.dtype() != parts[0].dtype()) throw ShapeError("concat_rows", "mixed precision operands");
    total += p.rows();
  }
  return dispatch(parts[0].dtype(), [&]<typename T>() {
    Tensor out = make_output<T>("concat_rows", {total, cols}, {});
    std::vector<Tensor> kept(parts.begin(), parts.end());
    if (grad_enabled()) {
      for (const auto& p : kept) {
        if (p.requires_grad()) {
          out.node()->requires_grad = true;
          out.node()->parents.push_back(p.node_ptr());
        }
      }
    }
    T* o = out_ptr<T>(out);
    std::size_t offset = 0;
    for (const auto& p : kept) {
      const T* pv = in_ptr<T>(p);
      std::copy(pv, pv + p.numel(), o + offset);
      offset += p.numel();
    }
    if (out.requires_grad()) {
      out.node()->backward = [kept](Node& self) {
        const T* g = self.grads<T>().data();
        std::size_t offset = 0;
        for (const auto& p : kept) {
          const std::size_t n = p.numel();
          if (T* gp = grad_ptr<T>(p))
            for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
          offset += n;
        }
      };
    }
    return out;
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t rows = x.rows(), cols = x.cols();
  if (begin > end || end > cols) {
    throw ShapeError("slice_cols", "range [" + std::to_string(begin) + "," + std::to_string(end) +
                                       ") outside " + shape_str(x.shape()));
  }
  const std::size_t w = end - begin;
  Shape shape = x.rank() == 1 ? Shape{w} : Shape{rows, w};
  return dispatch(x.dtype(), [&]<typename T>() {
    Tensor out = make_output<T>("slice_cols", shape, {&x});
    const T* xv = in_ptr<T>(x);
    T* o = out_ptr<T>(out);
    for (std::size_t i = 0; i < rows; ++i)
      std::copy(xv + i * cols + begin, xv + i * cols + end, o + i * w);
    if (out.requires_grad()) {
      out.node()->backward = [x, rows, cols, begin, w](Node& self) {
        const T* g = self.grads<T>().data();
        T* gx = grad_ptr<T>(x);
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < w; ++j) gx[i * cols + begin + j] += g[i * w + j];
      };
    }
    return out;
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank2("slice_rows", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (begin > end || end > rows) {
    throw ShapeError("slice_rows", "range [" + std::to_string(begin) + "," + std::to_string(end) +
                                       ") outside " + shape_str(x.shape()));
  }
  return dispatch(x.dtype(), [&]<typename T>() {
    Tensor out = make_output<T>("slice_rows", {end - begin, cols}, {&x});
    const T* xv = in_ptr<T>(x);
    std::copy(xv + begin * cols, xv + end * cols, out_ptr<T>(out));
    if (out.requires_grad()) {
      out.node()->backward = [x, begin, end, cols](Node& self) {
        const T* g = self.grads<T>().data();
        T* gx = grad_ptr<T>(x) + begin * cols;
        for (std::size_t i = 0; i < (end - begin) * cols; ++i) gx[i] += g[i];
      };
    }
    return out;
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) throw ShapeError("reshape", x.shape(), shape);
  return dispatch(x.dtype(), [&]<typename T>() {
    Tensor out = make_output<T>("reshape", shape, {&x});
    const T* xv = in_ptr<T>(x);
    std::copy(xv, xv + x.numel(), out_ptr<T>(out));
    if (out.requires_grad()) {
      out.node()->backward = [x](Node& self) {
        const T* g = self.grads<T>().data();
        T* gx = grad_ptr<T>(x);
        for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += g[i];
      };
    }
    return out;
  });
}

Tensor pick(const Tensor& x, std::size_t flat_index) {
  if (flat_index >= x.numel()) {
    throw ShapeError("pick", "index " + std::to_string(flat_index) + " outside " + shape_str(x.shape()));
  }
  return dispatch(x.dtype(), [&]<typename T>() {
    Tensor out = make_output<T>("pick", {1}, {&x});
    out_ptr<T>(out)[0] = in_ptr<T>(x)[flat_index];
    if (out.requires_grad()) {
      out.node()->backward = [x, flat_index](Node& self) {
        grad_ptr<T>(x)[flat_index] += self.grads<T>()[0];
      };
    }
    return out;
  });
}

Tensor embedding(const Tensor& table, std::span<const std::int64_t> ids) {
  require_rank2("embedding", table);
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw ShapeError("embedding", "id " + std::to_string(id) + " outside table " +
                                        shape_str(table.shape()));
    }
  }
  std::vector<std::int64_t> kept(ids.begin(), ids.end());
  return dispatch(table.dtype(), [&]<typename T>() {
    Tensor out = make_output<T>("embedding", {kept.size(), d}, {&table});
    const T* tv = in_ptr<T>(table);
    T* o = out_ptr<T>(out);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      const T* row = tv + static_cast<std::size_t>(kept[i]) * d;
      std::copy(row, row + d, o + i * d);
    }
    if (out.requires_grad()) {
      out.node()->backward = [table, kept, d](Node& self) {
        const T* g = self.grads<T>().data();
        T* gt = grad_ptr<T>(table);
        for (std::size_t i = 0; i < kept.size(); ++i) {
          T* row = gt + static_cast<std::size_t>(kept[i]) * d;
          for (std::size_t j = 0; j < d; ++j) row[j] += g[i * d + j];
        }
      };
    }
    return out;
  });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ShapeError("dropout", "rate must be < 1");
  return dispatch(x.dtype(), [&]<typename T>() {
    std::bernoulli_distribution keep(1.0 - rate);
    const T inv = static_cast<T>(1.0 / (1.0 - rate));
    auto mask = std::make_shared<std::vector<T>>(x.numel());
    for (auto& m : *mask) m = keep(rng) ? inv : T(0);
    Tensor out = make_output<T>("dropout", x.shape(), {&x});
    const T* xv = in_ptr<T>(x);
    T* o = out_ptr<T>(out);
    for (std::size_t i = 0; i < x.numel(); ++i) o[i] = xv[i] * (*mask)[i];
    if (out.requires_grad()) {
      out.node()->backward = [x, mask](Node& self) {
        const T* g = self.grads<T>().data();
        T* gx = grad_ptr<T>(x);
        for (std::size_t i = 0; i < mask->size(); ++i) gx[i] += g[i] * (*mask)[i];
      };
    }
    return out;
  });
}

Tensor sum(const Tensor& x) {
  return dispatch(x.dtype(), [&]<typename T>() {
    Tensor out = make_output<T>("sum", {1}, {&x});
    T acc = 0;
    for (T v : x.data<T>()) acc += v;
    out_ptr<T>(out)[0] = acc;
    if (out.requires_grad()) {
      out.node()->backward = [x](Node& self) {
        const T g = self.grads<T>()[0];
        T* gx = grad_ptr<T>(x);
        for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += g;
      };
    }
    return out;
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean", "empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

namespace {

template <class T>
void check_row_not_all_neg_inf(const char* op, const T* row, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j)
    if (!(std::isinf(row[j]) && row[j] < 0)) return;
  throw NumericError(std::string(op) + ": row has no finite entry");
}

Tensor softmax_impl(const Tensor& x, bool log_domain) {
  const char* op = log_domain ? "log_softmax" : "softmax";
  check_finite(op, x);
  const std::size_t rows = x.rank() == 0 ? 1 : x.numel() / x.shape().back();
  const std::size_t cols = x.shape().back();
  return dispatch(x.dtype(), [&]<typename T>() {
    Tensor out = make_output<T>(op, x.shape(), {&x});
    const T* xv = in_ptr<T>(x);
    T* y = out_ptr<T>(out);
    for (std::size_t i = 0; i < rows; ++i) {
      const T* xr = xv + i * cols;
      T* yr = y + i * cols;
      check_row_not_all_neg_inf(op, xr, cols);
      const T m = *std::max_element(xr, xr + cols);
      T z = 0;
      for (std::size_t j = 0; j < cols; ++j) z += std::exp(xr[j] - m);
      if (log_domain) {
        const T lz = m + std::log(z);
        for (std::size_t j = 0; j < cols; ++j) yr[j] = xr[j] - lz;
      } else {
        for (std::size_t j = 0; j < cols; ++j) yr[j] = std::exp(xr[j] - m) / z;
      }
    }
    if (out.requires_grad()) {
      out.node()->backward = [x, rows, cols, log_domain](Node& self) {
        const T* g = self.grads<T>().data();
        const T* y = self.values<T>().data();
        T* gx = grad_ptr<T>(x);
        for (std::size_t i = 0; i < rows; ++i) {
          const T* gr = g + i * cols;
          const T* yr = y + i * cols;
          T* gxr = gx + i * cols;
          if (log_domain) {
            T gs = 0;
            for (std::size_t j = 0; j < cols; ++j) gs += gr[j];
            for (std::size_t j = 0; j < cols; ++j) gxr[j] += gr[j] - std::exp(yr[j]) * gs;
          } else {
            T dot = 0;
            for (std::size_t j = 0; j < cols; ++j) dot += gr[j] * yr[j];
            for (std::size_t j = 0; j < cols; ++j) gxr[j] += yr[j] * (gr[j] - dot);
          }
        }
      };
    }
    return out;
  });
}

std::size_t resolve_axis(const char* op, const Tensor& x, int axis) {
  const int rank = static_cast<int>(x.rank());
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) throw ShapeError(op, "axis " + std::to_string(axis) + " invalid for " + shape_str(x.shape()));
  return static_cast<std::size_t>(a);
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  const auto a = resolve_axis("softmax", x, axis);
  if (a + 1 == x.rank()) return softmax_impl(x, false);
  if (x.rank() == 2) return transpose(softmax_impl(transpose(x), false));
  throw ShapeError("softmax", "only the last axis is supported beyond rank 2");
}

Tensor log_softmax(const Tensor& x, int axis) {
  const auto a = resolve_axis("log_softmax", x, axis);
  if (a + 1 == x.rank()) return softmax_impl(x, true);
  if (x.rank() == 2) return transpose(softmax_impl(transpose(x), true));
  throw ShapeError("log_softmax", "only the last axis is supported beyond rank 2");
}

Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> mask) {
  if (mask.size() != x.numel()) throw ShapeError("masked_softmax", x.shape(), Shape{mask.size()});
  check_finite("masked_softmax", x);
  const std::size_t rows = x.rows(), cols = x.cols();
  for (std::size_t i = 0; i < rows; ++i) {
    if (std::none_of(mask.begin() + i * cols, mask.begin() + (i + 1) * cols,
                     [](std::uint8_t m) { return m != 0; })) {
      throw ShapeError("masked_softmax", "query row " + std::to_string(i) + " has no attendable key");
    }
  }
  auto kept = std::make_shared<std::vector<std::uint8_t>>(mask.begin(), mask.end());
  return dispatch(x.dtype(), [&]<typename T>() {
    Tensor out = make_output<T>("masked_softmax", x.shape(), {&x});
    const T* xv = in_ptr<T>(x);
    T* y = out_ptr<T>(out);
    const auto& m = *kept;
    for (std::size_t i = 0; i < rows; ++i) {
      const T* xr = xv + i * cols;
      T* yr = y + i * cols;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < cols; ++j)
        if (m[i * cols + j]) mx = std::max(mx, xr[j]);
      T z = 0;
      for (std::size_t j = 0; j < cols; ++j) {
        yr[j] = m[i * cols + j] ? std::exp(xr[j] - mx) : T(0);
        z += yr[j];
      }
      for (std::size_t j = 0; j < cols; ++j) yr[j] /= z;
    }
    if (out.requires_grad()) {
      out.node()->backward = [x, rows, cols](Node& self) {
        const T* g = self.grads<T>().data();
        const T* y = self.values<T>().data();
        T* gx = grad_ptr<T>(x);
        for (std::size_t i = 0; i < rows; ++i) {
          T dot = 0;
          for (std::size_t j = 0; j < cols; ++j) dot += g[i * cols + j] * y[i * cols + j];
          for (std::size_t j = 0; j < cols; ++j)
            gx[i * cols + j] += y[i * cols + j] * (g[i * cols + j] - dot);
        }
      };
    }
    return out;
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (eps <= 0) throw ShapeError("layer_norm", "eps must be positive");
  const std::size_t rows = x.rows(), cols = x.cols();
  if (gain.numel() != cols) throw ShapeError("layer_norm", x.shape(), gain.shape());
  if (bias.numel() != cols) throw ShapeError("layer_norm", x.shape(), bias.shape());
  return dispatch(common_dtype("layer_norm", {&x, &gain, &bias}), [&]<typename T>() {
    Tensor out = make_output<T>("layer_norm", x.shape(), {&x, &gain, &bias});
    auto xhat = std::make_shared<std::vector<T>>(x.numel());
    auto inv_std = std::make_shared<std::vector<T>>(rows);
    const T* xv = in_ptr<T>(x);
    const T* gv = in_ptr<T>(gain);
    const T* bv = in_ptr<T>(bias);
    T* y = out_ptr<T>(out);
    for (std::size_t i = 0; i < rows; ++i) {
      const T* xr = xv + i * cols;
      T mu = 0;
      for (std::size_t j = 0; j < cols; ++j) mu += xr[j];
      mu /= static_cast<T>(cols);
      T var = 0;
      for (std::size_t j = 0; j < cols; ++j) var += (xr[j] - mu) * (xr[j] - mu);
      var /= static_cast<T>(cols);
      const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
      (*inv_std)[i] = inv;
      for (std::size_t j = 0; j < cols; ++j) {
        const T h = (xr[j] - mu) * inv;
        (*xhat)[i * cols + j] = h;
        y[i * cols + j] = h * gv[j] + bv[j];
      }
    }
    if (out.requires_grad()) {
      out.node()->backward = [x, gain, bias, xhat, inv_std, rows, cols](Node& self) {
        const T* g = self.grads<T>().data();
        const T* gv = in_ptr<T>(gain);
        T* gx = grad_ptr<T>(x);
        T* gg = grad_ptr<T>(gain);
        T* gb = grad_ptr<T>(bias);
        const T n = static_cast<T>(cols);
        for (std::size_t i = 0; i < rows; ++i) {
          const T* gr = g + i * cols;
          const T* hr = xhat->data() + i * cols;
          if (gg)
            for (std::size_t j = 0; j < cols; ++j) gg[j] += gr[j] * hr[j];
          if (gb)
            for (std::size_t j = 0; j < cols; ++j) gb[j] += gr[j];
          if (gx) {
            T sum_dh = 0, sum_dh_h = 0;
            for (std::size_t j = 0; j < cols; ++j) {
              const T dh = gr[j] * gv[j];
              sum_dh += dh;
              sum_dh_h += dh * hr[j];
            }
            const T inv = (*inv_std)[i];
            for (std::size_t j = 0; j < cols; ++j) {
              const T dh = gr[j] * gv[j];
              gx[i * cols + j] += inv / n * (n * dh - sum_dh - hr[j] * sum_dh_h);
            }
          }
        }
      };
    }
    return out;
  });
}

Tensor mean_std_pool(const Tensor& c, double eps) {
  require_rank2("mean_std_pool", c);
  const std::size_t len = c.dim(0), d = c.dim(1);
  if (len == 0) throw ShapeError("mean_std_pool", "empty context (L == 0)");
  return dispatch(c.dtype(), [&]<typename T>() {
    Tensor out = make_output<T>("mean_std_pool", {2 * d}, {&c});
    const T* cv = in_ptr<T>(c);
    T* o = out_ptr<T>(out);
    const T n = static_cast<T>(len);
    for (std::size_t j = 0; j < d; ++j) {
      T mu = 0;
      for (std::size_t i = 0; i < len; ++i) mu += cv[i * d + j];
      mu /= n;
      T var = 0;
      for (std::size_t i = 0; i < len; ++i) var += (cv[i * d + j] - mu) * (cv[i * d + j] - mu);
      var /= n;
      o[j] = mu;
      o[d + j] = std::sqrt(var + static_cast<T>(eps));
    }
    if (out.requires_grad()) {
      out.node()->backward = [c, len, d](Node& self) {
        const T* g = self.grads<T>().data();
        const T* o = self.values<T>().data();
        const T* cv = in_ptr<T>(c);
        T* gc = grad_ptr<T>(c);
        const T n = static_cast<T>(len);
        for (std::size_t j = 0; j < d; ++j) {
          const T mu = o[j], sd = o[d + j];
          for (std::size_t i = 0; i < len; ++i)
            gc[i * d + j] += g[j] / n + g[d + j] * (cv[i * d + j] - mu) / (n * sd);
        }
      };
    }
    return out;
  });
}

Tensor nll_mean(const Tensor& logprobs, std::span<const std::int64_t> targets) {
  const std::size_t rows = logprobs.rows(), cols = logprobs.cols();
  if (targets.size() != rows) throw ShapeError("nll_mean", logprobs.shape(), Shape{targets.size()});
  if (rows == 0) throw ShapeError("nll_mean", "no positions");
  for (auto t : targets)
    if (t < 0 || static_cast<std::size_t>(t) >= cols)
      throw ShapeError("nll_mean", "target " + std::to_string(t) + " outside " + shape_str(logprobs.shape()));
  std::vector<std::int64_t> kept(targets.begin(), targets.end());
  return dispatch(logprobs.dtype(), [&]<typename T>() {
    Tensor out = make_output<T>("nll_mean", {1}, {&logprobs});
    const T* lp = in_ptr<T>(logprobs);
    T acc = 0;
    for (std::size_t i = 0; i < rows; ++i) acc -= lp[i * cols + static_cast<std::size_t>(kept[i])];
    out_ptr<T>(out)[0] = acc / static_cast<T>(rows);
    if (out.requires_grad()) {
      out.node()->backward = [logprobs, kept, rows, cols](Node& self) {
        const T g = self.grads<T>()[0] / static_cast<T>(rows);
        T* gl = grad_ptr<T>(logprobs);
        for (std::size_t i = 0; i < rows; ++i) gl[i * cols + static_cast<std::size_t>(kept[i])] -= g;
      };
    }
    return out;
  });
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank2("depthwise_conv1d", x);
  require_rank2("depthwise_conv1d", w);
  const std::size_t len = x.dim(0), ch = x.dim(1), k = w.dim(0);
  if (w.dim(1) != ch) throw ShapeError("depthwise_conv1d", x.shape(), w.shape());
  if (k % 2 == 0) throw ShapeError("depthwise_conv1d", "kernel size must be odd");
  if (b.numel() != ch) throw ShapeError("depthwise_conv1d", x.shape(), b.shape());
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  return dispatch(common_dtype("depthwise_conv1d", {&x, &w, &b}), [&]<typename T>() {
    Tensor out = make_output<T>("depthwise_conv1d", {len, ch}, {&x, &w, &b});
    const T* xv = in_ptr<T>(x);
    const T* wv = in_ptr<T>(w);
    const T* bv = in_ptr<T>(b);
    T* y = out_ptr<T>(out);
    const auto slen = static_cast<std::ptrdiff_t>(len);
    for (std::ptrdiff_t t = 0; t < slen; ++t) {
      T* yr = y + t * static_cast<std::ptrdiff_t>(ch);
      std::copy(bv, bv + ch, yr);
      for (std::size_t kk = 0; kk < k; ++kk) {
        const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(kk) - pad;
        if (src < 0 || src >= slen) continue;
        const T* xr = xv + src * static_cast<std::ptrdiff_t>(ch);
        const T* wr = wv + kk * ch;
        for (std::size_t c = 0; c < ch; ++c) yr[c] += wr[c] * xr[c];
      }
    }
    if (out.requires_grad()) {
      out.node()->backward = [x, w, b, len, ch, k, pad](Node& self) {
        const T* g = self.grads<T>().data();
        const T* xv = in_ptr<T>(x);
        const T* wv = in_ptr<T>(w);
        T* gx = grad_ptr<T>(x);
        T* gw = grad_ptr<T>(w);
        T* gb = grad_ptr<T>(b);
        const auto slen = static_cast<std::ptrdiff_t>(len);
        for (std::ptrdiff_t t = 0; t < slen; ++t) {
          const T* gr = g + t * static_cast<std::ptrdiff_t>(ch);
          if (gb)
            for (std::size_t c = 0; c < ch; ++c) gb[c] += gr[c];
          for (std::size_t kk = 0; kk < k; ++kk) {
            const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(kk) - pad;
            if (src < 0 || src >= slen) continue;
            const auto off = src * static_cast<std::ptrdiff_t>(ch);
            for (std::size_t c = 0; c < ch; ++c) {
              if (gw) gw[kk * ch + c] += gr[c] * xv[off + c];
              if (gx) gx[off + c] += gr[c] * wv[kk * ch + c];
            }
          }
        }
      };
    }
    return out;
  });
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t kernel,
              std::size_t stride) {
  require_rank2("conv1d", x);
  require_rank2("conv1d", w);
  if (kernel % 2 == 0 || stride == 0) throw ShapeError("conv1d", "kernel must be odd and stride positive");
  const std::size_t len = x.dim(0), cin = x.dim(1), cout = w.dim(1);
  if (w.dim(0) != kernel * cin) throw ShapeError("conv1d", x.shape(), w.shape());
  if (b.numel() != cout) throw ShapeError("conv1d", w.shape(), b.shape());
  if (len == 0) throw ShapeError("conv1d", "empty input");
  const std::size_t out_len = (len + stride - 1) / stride;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(kernel / 2);
  return dispatch(common_dtype("conv1d", {&x, &w, &b}), [&]<typename T>() {
    Tensor out = make_output<T>("conv1d", {out_len, cout}, {&x, &w, &b});
    const T* xv = in_ptr<T>(x);
    const T* wv = in_ptr<T>(w);
    const T* bv = in_ptr<T>(b);
    T* y = out_ptr<T>(out);
    const auto slen = static_cast<std::ptrdiff_t>(len);
    for (std::size_t o = 0; o < out_len; ++o) {
      T* yr = y + o * cout;
      std::copy(bv, bv + cout, yr);
      for (std::size_t kk = 0; kk < kernel; ++kk) {
        const std::ptrdiff_t src =
            static_cast<std::ptrdiff_t>(o * stride + kk) - pad;
        if (src < 0 || src >= slen) continue;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const T xval = xv[static_cast<std::size_t>(src) * cin + ci];
          const T* wr = wv + (kk * cin + ci) * cout;
          for (std::size_t co = 0; co < cout; ++co) yr[co] += xval * wr[co];
        }
      }
    }
    if (out.requires_grad()) {
      out.node()->backward = [x, w, b, len, cin, cout, kernel, stride, out_len, pad](Node& self) {
        const T* g = self.grads<T>().data();
        const T* xv = in_ptr<T>(x);
        const T* wv = in_ptr<T>(w);
        T* gx = grad_ptr<T>(x);
        T* gw = grad_ptr<T>(w);
        T* gb = grad_ptr<T>(b);
        const auto slen = static_cast<std::ptrdiff_t>(len);
        for (std::size_t o = 0; o < out_len; ++o) {
          const T* gr = g + o * cout;
          if (gb)
            for (std::size_t co = 0; co < cout; ++co) gb[co] += gr[co];
          for (std::size_t kk = 0; kk < kernel; ++kk) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(o * stride + kk) - pad;
            if (src < 0 || src >= slen) continue;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const std::size_t xi = static_cast<std::size_t>(src) * cin + ci;
              const std::size_t wrow = (kk * cin + ci) * cout;
              T acc = 0;
              for (std::size_t co = 0; co < cout; ++co) {
                if (gw) gw[wrow + co] += xv[xi] * gr[co];
                acc += wv[wrow + co] * gr[co];
              }
              if (gx) gx[xi] += acc;
            }
          }
        }
      };
    }
    return out;
  });
}

}  // namespace lfnt
