/* Copyright 2026 The tisr Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "tisr/tensor.hpp"

namespace tisr {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

/// out = a * b, or out += a * b. Operands are copied into Eigen-owned
/// (max-aligned) storage first: Eigen chooses its vector peeling from the
/// runtime pointer alignment, and std::vector storage would otherwise make
/// results differ in the last bit from one allocation to the next.
template <class T, class A, class B>
void product(T* out, const A& a, const B& b, bool accumulate) {
  const RowMat<T> am = a;
  const RowMat<T> bm = b;
  RowMat<T> c(am.rows(), bm.cols());
  c.noalias() = am * bm;
  const std::size_t total = static_cast<std::size_t>(c.size());
  if (accumulate) {
    for (std::size_t i = 0; i < total; ++i) out[i] += c.data()[i];
  } else {
    std::copy(c.data(), c.data() + total, out);
  }
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

template <class T>
void require_rank(const Tensor<T>& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " tensor, got " + to_string(a.shape()));
  }
}

// Splits a shape around `axis` into (outer, extent, inner) strides.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, int axis, const char* op) {
  const int rank = static_cast<int>(shape.size());
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw DimensionError(std::string(op) + ": axis out of range for shape " + to_string(shape));
  }
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (int i = axis + 1; i < rank; ++i) s.inner *= shape[i];
  return s;
}

template <class T, class F>
Tensor<T> unary(const Tensor<T>& x, F&& value, std::function<T(T x, T y)> derivative) {
  std::vector<T> out(x.numel());
  const auto& xs = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = value(xs[i]);
  return make_result<T>(x.shape(), std::move(out), {x}, [derivative](Node<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += self.grad[i] * derivative(p->data[i], self.data[i]);
      }
    }
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* p = detail::grad_target(self, k)) {
        auto& g = p->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (auto* p = detail::grad_target(self, 1)) {
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    Node<T>& an = *self.parents[0];
    Node<T>& bn = *self.parents[1];
    if (auto* p = detail::grad_target(self, 0)) {
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn.data[i];
    }
    if (auto* p = detail::grad_target(self, 1)) {
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an.data[i];
    }
  });
}

template <class T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return detail::make_result<T>(x.shape(), std::move(out), {x}, [factor](Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
    }
  });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + value;
  return detail::make_result<T>(x.shape(), std::move(out), {x}, [](Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> neg(const Tensor<T>& x) { return scale(x, T(-1)); }

/// max(x, 0); the subgradient at exactly 0 is 0.
template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T in, T) { return in > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary<T>(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

/// log(1 + e^x), computed without overflow.
template <class T>
Tensor<T> softplus(const Tensor<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); },
      [](T in, T) {
        if (in >= T(0)) return T(1) / (T(1) + std::exp(-in));
        const T e = std::exp(in);
        return e / (T(1) + e);
      });
}

/// |x|; the subgradient at exactly 0 is 0.
template <class T>
Tensor<T> abs(const Tensor<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return std::abs(v); },
      [](T in, T) { return in > T(0) ? T(1) : (in < T(0) ? T(-1) : T(0)); });
}

template <class T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary<T>(
      x, [](T v) { return v * v; }, [](T in, T) { return T(2) * in; });
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.values()) total += v;
  return detail::make_result<T>(Shape{1}, {total}, {x}, [](Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      auto& g = p->grad_buffer();
      for (auto& v : g) v += self.grad[0];
    }
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " +
                         to_string(shape));
  }
  return detail::make_result<T>(std::move(shape), x.values(), {x}, [](Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

/// Rows [begin, begin+count) along the leading axis.
template <class T>
Tensor<T> slice0(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  if (x.rank() == 0 || begin + count > x.dim(0)) {
    throw DimensionError("slice0: range [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") outside " + to_string(x.shape()));
  }
  const std::size_t row = x.numel() / x.dim(0);
  Shape shape = x.shape();
  shape[0] = count;
  std::vector<T> out(x.values().begin() + begin * row, x.values().begin() + (begin + count) * row);
  return detail::make_result<T>(std::move(shape), std::move(out), {x},
                                [begin, row](Node<T>& self) {
                                  if (auto* p = detail::grad_target(self, 0)) {
                                    auto& g = p->grad_buffer();
                                    for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                      g[begin * row + i] += self.grad[i];
                                    }
                                  }
                                });
}

/// Concatenation along the leading axis; trailing extents must agree.
template <class T>
Tensor<T> concat0(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat0: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  for (const auto& p : parts) {
    Shape t(p.shape().begin() + 1, p.shape().end());
    if (p.rank() == 0 || t != tail) {
      throw DimensionError("concat0: incompatible shapes " + to_string(parts[0].shape()) +
                           " and " + to_string(p.shape()));
    }
    rows += p.dim(0);
  }
  Shape shape = parts[0].shape();
  shape[0] = rows;
  std::vector<T> out;
  out.reserve(numel(shape));
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return detail::make_result<T>(std::move(shape), std::move(out), parts,
                                [offsets](Node<T>& self) {
                                  for (std::size_t k = 0; k < self.parents.size(); ++k) {
                                    if (auto* p = detail::grad_target(self, k)) {
                                      auto& g = p->grad_buffer();
                                      for (std::size_t i = 0; i < g.size(); ++i) {
                                        g[i] += self.grad[offsets[k] + i];
                                      }
                                    }
                                  }
                                });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& x) {
  detail::require_rank(x, 2, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return detail::make_result<T>(Shape{n, m}, std::move(out), {x}, [m, n](Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

/// Standard product of a [m x k] and b [k x n].
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<T> out(static_cast<std::size_t>(m * n));
  detail::product(out.data(), detail::ConstMatMap<T>(a.data().data(), m, k),
                  detail::ConstMatMap<T>(b.data().data(), k, n), false);
  return detail::make_result<T>(
      Shape{a.dim(0), b.dim(1)}, std::move(out), {a, b}, [m, k, n](Node<T>& self) {
        detail::ConstMatMap<T> dy(self.grad.data(), m, n);
        if (auto* p = detail::grad_target(self, 0)) {
          detail::product(p->grad_buffer().data(), dy,
                          detail::ConstMatMap<T>(self.parents[1]->data.data(), k, n).transpose(), true);
        }
        if (auto* p = detail::grad_target(self, 1)) {
          detail::product(p->grad_buffer().data(),
                          detail::ConstMatMap<T>(self.parents[0]->data.data(), m, k).transpose(), dy, true);
        }
      });
}

/// x [m x n] plus a length-n row vector broadcast over rows.
template <class T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& b) {
  detail::require_rank(x, 2, "add_rowvec");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (b.numel() != n) {
    throw DimensionError("add_rowvec: bias " + to_string(b.shape()) + " does not match " +
                         to_string(x.shape()));
  }
  std::vector<T> out(x.values());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b[j];
  return detail::make_result<T>(x.shape(), std::move(out), {x, b}, [m, n](Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (auto* p = detail::grad_target(self, 1)) {
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    }
  });
}

/// x·w + b for x [m x k], w [k x n], b [n].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return add_rowvec(matmul(x, w), b);
}

// ---------------------------------------------------------------------------
// Normalization and attention

/// Max-shifted softmax along `axis`.
template <class T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1) {
  const auto s = detail::split_axis(x.shape(), axis, "softmax");
  std::vector<T> out(x.numel());
  const auto& xs = x.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < s.extent; ++j) mx = std::max(mx, xs[base + j * s.inner]);
      T total = T(0);
      for (std::size_t j = 0; j < s.extent; ++j) {
        const T e = std::exp(xs[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < s.extent; ++j) out[base + j * s.inner] /= total;
    }
  }
  return detail::make_result<T>(x.shape(), std::move(out), {x}, [s](Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      auto& g = p->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = o * s.extent * s.inner + in;
          T dot = T(0);
          for (std::size_t j = 0; j < s.extent; ++j) {
            const std::size_t idx = base + j * s.inner;
            dot += self.grad[idx] * self.data[idx];
          }
          for (std::size_t j = 0; j < s.extent; ++j) {
            const std::size_t idx = base + j * s.inner;
            g[idx] += self.data[idx] * (self.grad[idx] - dot);
          }
        }
      }
    }
  });
}

template <class T>
Tensor<T> log_softmax(const Tensor<T>& x, int axis = -1) {
  const auto s = detail::split_axis(x.shape(), axis, "log_softmax");
  std::vector<T> out(x.numel());
  const auto& xs = x.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < s.extent; ++j) mx = std::max(mx, xs[base + j * s.inner]);
      T total = T(0);
      for (std::size_t j = 0; j < s.extent; ++j) total += std::exp(xs[base + j * s.inner] - mx);
      const T lse = mx + std::log(total);
      for (std::size_t j = 0; j < s.extent; ++j) {
        out[base + j * s.inner] = xs[base + j * s.inner] - lse;
      }
    }
  }
  return detail::make_result<T>(x.shape(), std::move(out), {x}, [s](Node<T>& self) {
    if (auto* p = detail::grad_target(self, 0)) {
      auto& g = p->grad_buffer();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = o * s.extent * s.inner + in;
          T total = T(0);
          for (std::size_t j = 0; j < s.extent; ++j) total += self.grad[base + j * s.inner];
          for (std::size_t j = 0; j < s.extent; ++j) {
            const std::size_t idx = base + j * s.inner;
            g[idx] += self.grad[idx] - std::exp(self.data[idx]) * total;
          }
        }
      }
    }
  });
}

/// Normalizes to zero mean and unit variance along `axis`, then applies a
/// per-position gain and bias (each of length shape[axis]).
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, int axis, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5)) {
  const auto s = detail::split_axis(x.shape(), axis, "layer_norm");
  if (gain.numel() != s.extent || bias.numel() != s.extent) {
    throw DimensionError("layer_norm: gain/bias " + to_string(gain.shape()) + "/" +
                         to_string(bias.shape()) + " do not match axis extent of " +
                         to_string(x.shape()));
  }
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(s.outer * s.inner);
  const auto& xs = x.values();
  const T n = static_cast<T>(s.extent);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      T mu = T(0);
      for (std::size_t j = 0; j < s.extent; ++j) mu += xs[base + j * s.inner];
      mu /= n;
      T var = T(0);
      for (std::size_t j = 0; j < s.extent; ++j) {
        const T d = xs[base + j * s.inner] - mu;
        var += d * d;
      }
      var /= n;
      const T r = T(1) / std::sqrt(var + eps);
      inv_std[o * s.inner + in] = r;
      for (std::size_t j = 0; j < s.extent; ++j) {
        const std::size_t idx = base + j * s.inner;
        xhat[idx] = (xs[idx] - mu) * r;
        out[idx] = xhat[idx] * gain[j] + bias[j];
      }
    }
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), {x, gain, bias},
      [s, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& self) {
        const Node<T>& gn = *self.parents[1];
        auto* px = detail::grad_target(self, 0);
        auto* pg = detail::grad_target(self, 1);
        auto* pb = detail::grad_target(self, 2);
        const T n = static_cast<T>(s.extent);
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t base = o * s.extent * s.inner + in;
            T sum_d = T(0), sum_dx = T(0);
            for (std::size_t j = 0; j < s.extent; ++j) {
              const std::size_t idx = base + j * s.inner;
              const T dxhat = self.grad[idx] * gn.data[j];
              sum_d += dxhat;
              sum_dx += dxhat * xhat[idx];
              if (pg) pg->grad_buffer()[j] += self.grad[idx] * xhat[idx];
              if (pb) pb->grad_buffer()[j] += self.grad[idx];
            }
            if (px) {
              auto& g = px->grad_buffer();
              const T r = inv_std[o * s.inner + in];
              for (std::size_t j = 0; j < s.extent; ++j) {
                const std::size_t idx = base + j * s.inner;
                const T dxhat = self.grad[idx] * gn.data[j];
                g[idx] += r * (dxhat - sum_d / n - xhat[idx] * sum_dx / n);
              }
            }
          }
        }
      });
}

/// Scales each row of x [m x n] to unit Euclidean norm.
template <class T>
Tensor<T> l2_normalize(const Tensor<T>& x, T eps = T(1e-12)) {
  detail::require_rank(x, 2, "l2_normalize");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<T> out(x.numel());
  std::vector<T> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    T ss = T(0);
    for (std::size_t j = 0; j < n; ++j) ss += x[i * n + j] * x[i * n + j];
    norms[i] = std::sqrt(ss + eps);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] / norms[i];
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), {x}, [m, n, norms = std::move(norms)](Node<T>& self) {
        if (auto* p = detail::grad_target(self, 0)) {
          auto& g = p->grad_buffer();
          for (std::size_t i = 0; i < m; ++i) {
            T dot = T(0);
            for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * self.data[i * n + j];
            for (std::size_t j = 0; j < n; ++j) {
              g[i * n + j] += (self.grad[i * n + j] - self.data[i * n + j] * dot) / norms[i];
            }
          }
        }
      });
}

/// softmax(q·kᵀ/√d + mask)·v for q [Lq x d], k [Lk x d], v [Lk x dv].
/// `mask` is an optional additive [Lq x Lk] tensor applied before softmax.
template <class T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               const Tensor<T>& mask = Tensor<T>()) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.dim(1) != k.dim(1) ||
      k.dim(0) != v.dim(0)) {
    throw DimensionError("scaled_dot_attention: incompatible q/k/v shapes " +
                         to_string(q.shape()) + ", " + to_string(k.shape()) + ", " +
                         to_string(v.shape()));
  }
  auto scores = scale(matmul(q, transpose(k)), T(1) / std::sqrt(static_cast<T>(q.dim(1))));
  if (mask.defined()) {
    if (mask.shape() != scores.shape()) {
      throw DimensionError("scaled_dot_attention: mask " + to_string(mask.shape()) +
                           " does not match scores " + to_string(scores.shape()));
    }
    scores = add(scores, mask);
  }
  return matmul(softmax(scores, 1), v);
}

// ---------------------------------------------------------------------------
// Convolution and spatial ops (NCHW)

/// Cross-correlation with zero padding. `bias` may be undefined.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride = 1, std::size_t pad = 0) {
  detail::require_rank(input, 4, "conv2d input");
  detail::require_rank(kernel, 4, "conv2d kernel");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t O = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != C) {
    throw DimensionError("conv2d: kernel " + to_string(kernel.shape()) +
                         " does not match input channels of " + to_string(input.shape()));
  }
  if (bias.defined() && bias.numel() != O) {
    throw DimensionError("conv2d: bias " + to_string(bias.shape()) + " does not match " +
                         std::to_string(O) + " output channels");
  }
  if (stride == 0 || H + 2 * pad < kh || W + 2 * pad < kw || (H + 2 * pad - kh) % stride != 0 ||
      (W + 2 * pad - kw) % stride != 0) {
    throw ConfigError("conv2d: non-integral output extent for input " + to_string(input.shape()) +
                      ", kernel " + to_string(kernel.shape()) + ", stride " +
                      std::to_string(stride) + ", pad " + std::to_string(pad));
  }
  const std::size_t Ho = (H + 2 * pad - kh) / stride + 1;
  const std::size_t Wo = (W + 2 * pad - kw) / stride + 1;
  const std::size_t K = C * kh * kw, P = Ho * Wo;
  const bool keep_cols = grad_enabled() && (input.requires_grad() || kernel.requires_grad() ||
                                            (bias.defined() && bias.requires_grad()));

  auto im2col = [=](const T* x, T* col) {
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t ky = 0; ky < kh; ++ky)
        for (std::size_t kx = 0; kx < kw; ++kx) {
          T* row = col + ((c * kh + ky) * kw + kx) * P;
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              row[oy * Wo + ox] = (iy >= 0 && iy < static_cast<long>(H) && ix >= 0 &&
                                   ix < static_cast<long>(W))
                                      ? x[(c * H + iy) * W + ix]
                                      : T(0);
            }
          }
        }
  };

  std::vector<T> out(N * O * P);
  std::vector<T> cols(keep_cols ? N * K * P : K * P);
  const detail::ConstMatMap<T> wmat(kernel.data().data(), O, K);
  for (std::size_t n = 0; n < N; ++n) {
    T* col = cols.data() + (keep_cols ? n * K * P : 0);
    im2col(input.data().data() + n * C * H * W, col);
    T* y = out.data() + n * O * P;
    detail::product(y, wmat, detail::ConstMatMap<T>(col, K, P), false);
    if (bias.defined()) {
      for (std::size_t o = 0; o < O; ++o)
        for (std::size_t q = 0; q < P; ++q) y[o * P + q] += bias[o];
    }
  }
  if (!keep_cols) cols = {};

  return detail::make_result<T>(
      Shape{N, O, Ho, Wo}, std::move(out), {input, kernel, bias},
      [=, cols = std::move(cols)](Node<T>& self) {
        auto* px = detail::grad_target(self, 0);
        auto* pw = detail::grad_target(self, 1);
        auto* pb = bias.defined() ? detail::grad_target(self, 2) : nullptr;
        const detail::ConstMatMap<T> wm(self.parents[1]->data.data(), O, K);
        std::vector<T> dcol(px ? K * P : 0);
        for (std::size_t n = 0; n < N; ++n) {
          const T* gy = self.grad.data() + n * O * P;
          const detail::ConstMatMap<T> dy(gy, O, P);
          const detail::ConstMatMap<T> col(cols.data() + n * K * P, K, P);
          if (pw) detail::product(pw->grad_buffer().data(), dy, col.transpose(), true);
          if (pb) {
            auto& gb = pb->grad_buffer();
            for (std::size_t o = 0; o < O; ++o) {
              T acc = 0;
              for (std::size_t q = 0; q < P; ++q) acc += gy[o * P + q];
              gb[o] += acc;
            }
          }
          if (px) {
            detail::product(dcol.data(), wm.transpose(), dy, false);
            T* gx = px->grad_buffer().data() + n * C * H * W;
            for (std::size_t c = 0; c < C; ++c)
              for (std::size_t ky = 0; ky < kh; ++ky)
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const T* row = dcol.data() + ((c * kh + ky) * kw + kx) * P;
                  for (std::size_t oy = 0; oy < Ho; ++oy) {
                    const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                    if (iy < 0 || iy >= static_cast<long>(H)) continue;
                    for (std::size_t ox = 0; ox < Wo; ++ox) {
                      const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                      if (ix < 0 || ix >= static_cast<long>(W)) continue;
                      gx[(c * H + iy) * W + ix] += row[oy * Wo + ox];
                    }
                  }
                }
          }
        }
      });
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride = 1,
                 std::size_t pad = 0) {
  return conv2d(input, kernel, Tensor<T>(), stride, pad);
}

namespace detail {
// Source offset of out[n,c,r*y+dy,r*x+dx] = in[n, c*r*r + dy*r + dx, y, x].
template <class T>
Tensor<T> shuffle_impl(const Tensor<T>& x, std::size_t r, bool inverse) {
  const std::size_t N = x.dim(0);
  std::size_t C, H, W;  // low-resolution geometry
  if (!inverse) {
    C = x.dim(1) / (r * r);
    H = x.dim(2);
    W = x.dim(3);
  } else {
    C = x.dim(1);
    H = x.dim(2) / r;
    W = x.dim(3) / r;
  }
  std::vector<std::size_t> perm(x.numel());  // output index -> input index
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t dy = 0; dy < r; ++dy)
          for (std::size_t xx = 0; xx < W; ++xx)
            for (std::size_t dx = 0; dx < r; ++dx) {
              const std::size_t lo = ((n * C * r * r + c * r * r + dy * r + dx) * H + y) * W + xx;
              const std::size_t hi = ((n * C + c) * H * r + (r * y + dy)) * W * r + (r * xx + dx);
              if (!inverse) perm[hi] = lo;
              else perm[lo] = hi;
            }
  Shape shape = inverse ? Shape{N, C * r * r, H, W} : Shape{N, C, H * r, W * r};
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[perm[i]];
  return make_result<T>(std::move(shape), std::move(out), {x},
                        [perm = std::move(perm)](Node<T>& self) {
                          if (auto* p = grad_target(self, 0)) {
                            auto& g = p->grad_buffer();
                            for (std::size_t i = 0; i < perm.size(); ++i) g[perm[i]] += self.grad[i];
                          }
                        });
}
}  // namespace detail

/// [N, C*r*r, H, W] -> [N, C, r*H, r*W] with
/// out[n, c, r*y+dy, r*x+dx] = in[n, c*r*r + dy*r + dx, y, x].
template <class T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t r) {
  detail::require_rank(x, 4, "pixel_shuffle");
  if (r == 0 || x.dim(1) % (r * r) != 0) {
    throw ConfigError("pixel_shuffle: channel count " + std::to_string(x.dim(1)) +
                      " not divisible by r^2 for r = " + std::to_string(r));
  }
  return detail::shuffle_impl(x, r, false);
}

/// Exact inverse of pixel_shuffle.
template <class T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t r) {
  detail::require_rank(x, 4, "pixel_unshuffle");
  if (r == 0 || x.dim(2) % r != 0 || x.dim(3) % r != 0) {
    throw ConfigError("pixel_unshuffle: spatial extent " + to_string(x.shape()) +
                      " not divisible by r = " + std::to_string(r));
  }
  return detail::shuffle_impl(x, r, true);
}

/// out[n,c,:,:] = gamma[n,c] * x[n,c,:,:] + beta[n,c] for x [N, C, H, W].
template <class T>
Tensor<T> channel_affine(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta) {
  detail::require_rank(x, 4, "channel_affine");
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (gamma.numel() != N * C || beta.numel() != N * C) {
    throw DimensionError("channel_affine: gamma " + to_string(gamma.shape()) + " / beta " +
                         to_string(beta.shape()) + " do not match channels of " +
                         to_string(x.shape()));
  }
  std::vector<T> out(x.numel());
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t i = 0; i < HW; ++i) out[nc * HW + i] = gamma[nc] * x[nc * HW + i] + beta[nc];
  return detail::make_result<T>(x.shape(), std::move(out), {x, gamma, beta},
                                [N, C, HW](Node<T>& self) {
                                  const Node<T>& xn = *self.parents[0];
                                  const Node<T>& gn = *self.parents[1];
                                  auto* px = detail::grad_target(self, 0);
                                  auto* pg = detail::grad_target(self, 1);
                                  auto* pb = detail::grad_target(self, 2);
                                  for (std::size_t nc = 0; nc < N * C; ++nc) {
                                    T sg = T(0), sb = T(0);
                                    for (std::size_t i = 0; i < HW; ++i) {
                                      const T d = self.grad[nc * HW + i];
                                      sg += d * xn.data[nc * HW + i];
                                      sb += d;
                                      if (px) px->grad_buffer()[nc * HW + i] += d * gn.data[nc];
                                    }
                                    if (pg) pg->grad_buffer()[nc] += sg;
                                    if (pb) pb->grad_buffer()[nc] += sb;
                                  }
                                });
}

/// Rows of `table` [V x d] selected by `ids`, giving [len(ids) x d].
template <class T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> ids) {
  detail::require_rank(table, 2, "embedding");
  const std::size_t V = table.dim(0), d = table.dim(1);
  std::vector<T> out(ids.size() * d);
  std::vector<int> idv(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V) {
      throw DimensionError("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                           std::to_string(V) + " rows");
    }
    std::copy_n(table.data().begin() + ids[i] * d, d, out.begin() + i * d);
  }
  return detail::make_result<T>(Shape{ids.size(), d}, std::move(out), {table},
                                [d, idv = std::move(idv)](Node<T>& self) {
                                  if (auto* p = detail::grad_target(self, 0)) {
                                    auto& g = p->grad_buffer();
                                    for (std::size_t i = 0; i < idv.size(); ++i)
                                      for (std::size_t j = 0; j < d; ++j)
                                        g[idv[i] * d + j] += self.grad[i * d + j];
                                  }
                                });
}

// ---------------------------------------------------------------------------
// Layout helpers between feature maps and token matrices

/// Sample n of x [N, C, H, W] as a token matrix [H*W x C].
template <class T>
Tensor<T> map_to_tokens(const Tensor<T>& x, std::size_t n) {
  detail::require_rank(x, 4, "map_to_tokens");
  const std::size_t C = x.dim(1), HW = x.dim(2) * x.dim(3);
  return transpose(reshape(slice0(x, n, 1), Shape{C, HW}));
}

/// Token matrix [H*W x C] back to a map [1, C, H, W].
template <class T>
Tensor<T> tokens_to_map(const Tensor<T>& tokens, std::size_t h, std::size_t w) {
  detail::require_rank(tokens, 2, "tokens_to_map");
  if (tokens.dim(0) != h * w) {
    throw DimensionError("tokens_to_map: " + to_string(tokens.shape()) + " is not a " +
                         std::to_string(h) + "x" + std::to_string(w) + " grid");
  }
  return reshape(transpose(tokens), Shape{1, tokens.dim(1), h, w});
}

}  // namespace tisr
