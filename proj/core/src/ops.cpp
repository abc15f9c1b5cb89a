// Copyright 2026 The EPAN Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "epan/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "epan/errors.hpp"

namespace epan {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <Real T>
GradientTape<T>* tape_for(std::initializer_list<const Tensor<T>*> inputs) {
  return detail::should_record<T>(inputs) ? GradientTape<T>::active() : nullptr;
}

template <Real T>
void require_rank(const Tensor<T>& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + to_string(x.shape()));
  }
}

template <Real T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

struct ConvGeometry {
  std::size_t n, c, h, w;
  std::size_t o, kh, kw;
  std::size_t stride, pad;
  std::size_t ho, wo;

  std::size_t k() const { return c * kh * kw; }
  std::size_t plane() const { return ho * wo; }
  std::size_t cols() const { return n * plane(); }
};

// col is [C*kh*kw, N*Ho*Wo], row-major.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  const std::size_t cols = g.cols();
  const long pad = static_cast<long>(g.pad);
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* row = col + ((c * g.kh + ki) * g.kw + kj) * cols;
        for (std::size_t n = 0; n < g.n; ++n) {
          const T* plane = x + (n * g.c + c) * g.h * g.w;
          T* dst = row + n * g.plane();
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ki) - pad;
            T* out = dst + oy * g.wo;
            if (iy < 0 || iy >= static_cast<long>(g.h)) {
              std::fill(out, out + g.wo, T(0));
              continue;
            }
            const T* src = plane + iy * g.w;
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kj) - pad;
              out[ox] = (ix >= 0 && ix < static_cast<long>(g.w)) ? src[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
  const std::size_t cols = g.cols();
  const long pad = static_cast<long>(g.pad);
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* row = col + ((c * g.kh + ki) * g.kw + kj) * cols;
        for (std::size_t n = 0; n < g.n; ++n) {
          T* plane = dx + (n * g.c + c) * g.h * g.w;
          const T* src = row + n * g.plane();
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = static_cast<long>(oy * g.stride + ki) - pad;
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            T* dst = plane + iy * g.w;
            const T* in = src + oy * g.wo;
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const long ix = static_cast<long>(ox * g.stride + kj) - pad;
              if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += in[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d

template <Real T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                 std::size_t pad) {
  const bool batched = input.rank() == 4;
  if (!batched && input.rank() != 3) {
    throw DimensionError("conv2d: input must be [C,H,W] or [N,C,H,W], got " +
                         to_string(input.shape()));
  }
  require_rank(kernel, 4, "conv2d kernel");
  if (stride == 0) throw DimensionError("conv2d: stride must be >= 1");

  ConvGeometry g{};
  const std::size_t off = batched ? 1 : 0;
  g.n = batched ? input.dim(0) : 1;
  g.c = input.dim(off);
  g.h = input.dim(off + 1);
  g.w = input.dim(off + 2);
  g.o = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.stride = stride;
  g.pad = pad;
  if (kernel.dim(1) != g.c) {
    throw DimensionError("conv2d: input has " + std::to_string(g.c) +
                         " channels, kernel expects " + std::to_string(kernel.dim(1)));
  }
  if (g.kh > g.h + 2 * pad || g.kw > g.w + 2 * pad) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
  g.wo = (g.w + 2 * pad - g.kw) / stride + 1;

  std::vector<T> col(g.k() * g.cols());
  im2col(input.data().data(), g, col.data());

  RowMat<T> y = ConstMatMap<T>(kernel.data().data(), g.o, g.k()) *
                ConstMatMap<T>(col.data(), g.k(), g.cols());

  std::vector<T> out(g.n * g.o * g.plane());
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t o = 0; o < g.o; ++o) {
      const T* src = y.data() + o * g.cols() + n * g.plane();
      std::copy(src, src + g.plane(), out.data() + (n * g.o + o) * g.plane());
    }
  }
  Shape shape = batched ? Shape{g.n, g.o, g.ho, g.wo} : Shape{g.o, g.ho, g.wo};
  Tensor<T> result(std::move(shape), std::move(out));

  if (auto* tape = tape_for<T>({&input, &kernel})) {
    auto* xs = input.storage().get();
    auto* ks = kernel.storage().get();
    auto* ys = result.storage().get();
    tape->record("conv2d", {input.storage(), kernel.storage()}, result.storage(),
                 [xs, ks, ys, g, col = std::move(col)]() {
                   RowMat<T> dy(g.o, g.cols());
                   for (std::size_t n = 0; n < g.n; ++n) {
                     for (std::size_t o = 0; o < g.o; ++o) {
                       const T* src = ys->grad.data() + (n * g.o + o) * g.plane();
                       std::copy(src, src + g.plane(), dy.data() + o * g.cols() + n * g.plane());
                     }
                   }
                   if (ks->requires_grad) {
                     MatMap<T>(detail::grad_of(*ks).data(), g.o, g.k()).noalias() +=
                         dy * ConstMatMap<T>(col.data(), g.k(), g.cols()).transpose();
                   }
                   if (xs->requires_grad) {
                     RowMat<T> dcol =
                         ConstMatMap<T>(ks->data.data(), g.o, g.k()).transpose() * dy;
                     col2im_add(dcol.data(), g, detail::grad_of(*xs).data());
                   }
                 });
  }
  return result;
}

// ---------------------------------------------------------------------------
// elementwise

template <Real T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
  Tensor<T> result(x.shape(), std::move(out));
  if (auto* tape = tape_for<T>({&x})) {
    auto* xs = x.storage().get();
    auto* ys = result.storage().get();
    tape->record("relu", {x.storage()}, result.storage(), [xs, ys]() {
      auto& dx = detail::grad_of(*xs);
      for (std::size_t i = 0; i < dx.size(); ++i) {
        if (xs->data[i] > T(0)) dx[i] += ys->grad[i];
      }
    });
  }
  return result;
}

template <Real T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor<T> result(a.shape(), std::move(out));
  if (auto* tape = tape_for<T>({&a, &b})) {
    auto* as = a.storage().get();
    auto* bs = b.storage().get();
    auto* ys = result.storage().get();
    tape->record("add", {a.storage(), b.storage()}, result.storage(), [as, bs, ys]() {
      for (auto* s : {as, bs}) {
        if (!s->requires_grad) continue;
        auto& d = detail::grad_of(*s);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += ys->grad[i];
      }
    });
  }
  return result;
}

template <Real T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor<T> result(a.shape(), std::move(out));
  if (auto* tape = tape_for<T>({&a, &b})) {
    auto* as = a.storage().get();
    auto* bs = b.storage().get();
    auto* ys = result.storage().get();
    tape->record("mul", {a.storage(), b.storage()}, result.storage(), [as, bs, ys]() {
      if (as->requires_grad) {
        auto& d = detail::grad_of(*as);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += ys->grad[i] * bs->data[i];
      }
      if (bs->requires_grad) {
        auto& d = detail::grad_of(*bs);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += ys->grad[i] * as->data[i];
      }
    });
  }
  return result;
}

template <Real T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  Tensor<T> result(a.shape(), std::move(out));
  if (auto* tape = tape_for<T>({&a})) {
    auto* as = a.storage().get();
    auto* ys = result.storage().get();
    tape->record("scale", {a.storage()}, result.storage(), [as, ys, factor]() {
      auto& d = detail::grad_of(*as);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += ys->grad[i] * factor;
    });
  }
  return result;
}

template <Real T>
Tensor<T> sum(const Tensor<T>& x) {
  const auto in = x.data();
  T total = std::accumulate(in.begin(), in.end(), T(0));
  Tensor<T> result(Shape{}, std::vector<T>{total});
  if (auto* tape = tape_for<T>({&x})) {
    auto* xs = x.storage().get();
    auto* ys = result.storage().get();
    tape->record("sum", {x.storage()}, result.storage(), [xs, ys]() {
      auto& d = detail::grad_of(*xs);
      for (auto& v : d) v += ys->grad[0];
    });
  }
  return result;
}

template <Real T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

template <Real T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (element_count(shape) != x.size()) {
    throw DimensionError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  Tensor<T> result(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (auto* tape = tape_for<T>({&x})) {
    auto* xs = x.storage().get();
    auto* ys = result.storage().get();
    tape->record("reshape", {x.storage()}, result.storage(), [xs, ys]() {
      auto& d = detail::grad_of(*xs);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += ys->grad[i];
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// linear

template <Real T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  const std::size_t n = x.dim(0), d = x.dim(1), o = weight.dim(0);
  if (weight.dim(1) != d) {
    throw DimensionError("linear: input width " + std::to_string(d) + ", weight " +
                         to_string(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != o)) {
    throw DimensionError("linear: bias shape " + to_string(bias.shape()));
  }
  RowMat<T> y = ConstMatMap<T>(x.data().data(), n, d) *
                ConstMatMap<T>(weight.data().data(), o, d).transpose();
  if (has_bias) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < o; ++j) y(i, j) += bias[j];
    }
  }
  Tensor<T> result(Shape{n, o}, std::vector<T>(y.data(), y.data() + n * o));
  if (auto* tape = tape_for<T>({&x, &weight, has_bias ? &bias : nullptr})) {
    auto* xs = x.storage().get();
    auto* ws = weight.storage().get();
    auto* bs = has_bias ? bias.storage().get() : nullptr;
    auto* ys = result.storage().get();
    std::vector<detail::StoragePtr<T>> inputs{x.storage(), weight.storage()};
    if (has_bias) inputs.push_back(bias.storage());
    tape->record("linear", std::move(inputs), result.storage(), [xs, ws, bs, ys, n, d, o]() {
      ConstMatMap<T> dy(ys->grad.data(), n, o);
      if (xs->requires_grad) {
        MatMap<T>(detail::grad_of(*xs).data(), n, d).noalias() +=
            dy * ConstMatMap<T>(ws->data.data(), o, d);
      }
      if (ws->requires_grad) {
        MatMap<T>(detail::grad_of(*ws).data(), o, d).noalias() +=
            dy.transpose() * ConstMatMap<T>(xs->data.data(), n, d);
      }
      if (bs != nullptr && bs->requires_grad) {
        auto& db = detail::grad_of(*bs);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < o; ++j) db[j] += dy(i, j);
        }
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// pooling

template <Real T>
Tensor<T> avg_pool2d(const Tensor<T>& x, std::size_t k) {
  require_rank(x, 4, "avg_pool2d");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (k == 0 || k > h || k > w) throw DimensionError("avg_pool2d: bad window " + std::to_string(k));
  const std::size_t ho = h / k, wo = w / k;
  const T inv = T(1) / static_cast<T>(k * k);
  std::vector<T> out(n * c * ho * wo, T(0));
  const auto in = x.data();
  for (std::size_t p = 0; p < n * c; ++p) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        T acc = 0;
        for (std::size_t dy = 0; dy < k; ++dy) {
          for (std::size_t dx = 0; dx < k; ++dx) acc += in[(p * h + oy * k + dy) * w + ox * k + dx];
        }
        out[(p * ho + oy) * wo + ox] = acc * inv;
      }
    }
  }
  Tensor<T> result(Shape{n, c, ho, wo}, std::move(out));
  if (auto* tape = tape_for<T>({&x})) {
    auto* xs = x.storage().get();
    auto* ys = result.storage().get();
    tape->record("avg_pool2d", {x.storage()}, result.storage(), [xs, ys, n, c, h, w, k, ho, wo, inv]() {
      auto& d = detail::grad_of(*xs);
      for (std::size_t p = 0; p < n * c; ++p) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const T g = ys->grad[(p * ho + oy) * wo + ox] * inv;
            for (std::size_t dy = 0; dy < k; ++dy) {
              for (std::size_t dx = 0; dx < k; ++dx) d[(p * h + oy * k + dy) * w + ox * k + dx] += g;
            }
          }
        }
      }
    });
  }
  return result;
}

template <Real T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t k) {
  require_rank(x, 4, "max_pool2d");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (k == 0 || k > h || k > w) throw DimensionError("max_pool2d: bad window " + std::to_string(k));
  const std::size_t ho = h / k, wo = w / k;
  std::vector<T> out(n * c * ho * wo);
  std::vector<std::size_t> argmax(out.size());
  const auto in = x.data();
  for (std::size_t p = 0; p < n * c; ++p) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = (p * h + oy * k) * w + ox * k;
        for (std::size_t dy = 0; dy < k; ++dy) {
          for (std::size_t dx = 0; dx < k; ++dx) {
            const std::size_t idx = (p * h + oy * k + dy) * w + ox * k + dx;
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t o = (p * ho + oy) * wo + ox;
        out[o] = in[best];
        argmax[o] = best;
      }
    }
  }
  Tensor<T> result(Shape{n, c, ho, wo}, std::move(out));
  if (auto* tape = tape_for<T>({&x})) {
    auto* xs = x.storage().get();
    auto* ys = result.storage().get();
    tape->record("max_pool2d", {x.storage()}, result.storage(),
                 [xs, ys, argmax = std::move(argmax)]() {
                   auto& d = detail::grad_of(*xs);
                   for (std::size_t o = 0; o < argmax.size(); ++o) d[argmax[o]] += ys->grad[o];
                 });
  }
  return result;
}

template <Real T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank(x, 4, "global_avg_pool");
  const std::size_t n = x.dim(0), c = x.dim(1), s = x.dim(2) * x.dim(3);
  const T inv = T(1) / static_cast<T>(s);
  std::vector<T> out(n * c);
  const auto in = x.data();
  for (std::size_t p = 0; p < n * c; ++p) {
    T acc = 0;
    for (std::size_t i = 0; i < s; ++i) acc += in[p * s + i];
    out[p] = acc * inv;
  }
  Tensor<T> result(Shape{n, c}, std::move(out));
  if (auto* tape = tape_for<T>({&x})) {
    auto* xs = x.storage().get();
    auto* ys = result.storage().get();
    tape->record("global_avg_pool", {x.storage()}, result.storage(), [xs, ys, n, c, s, inv]() {
      auto& d = detail::grad_of(*xs);
      for (std::size_t p = 0; p < n * c; ++p) {
        const T g = ys->grad[p] * inv;
        for (std::size_t i = 0; i < s; ++i) d[p * s + i] += g;
      }
    });
  }
  return result;
}

// ---------------------------------------------------------------------------
// normalization

namespace {

template <Real T>
void check_affine(const Tensor<T>& gamma, const Tensor<T>& beta, std::size_t c, const char* op) {
  if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c) {
    throw DimensionError(std::string(op) + ": affine parameters must have " +
                         std::to_string(c) + " entries");
  }
}

}  // namespace

template <Real T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     NormStats<T>& stats, bool training) {
  if (x.rank() != 4 && x.rank() != 2) {
    throw DimensionError("batch_norm: expected [N,C,H,W] or [N,C], got " + to_string(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t s = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  check_affine(gamma, beta, c, "batch_norm");
  if (stats.running_mean.size() != c || stats.running_var.size() != c) {
    throw DimensionError("batch_norm: running statistics sized for " +
                         std::to_string(stats.running_mean.size()) + " channels, input has " +
                         std::to_string(c));
  }
  const std::size_t m = n * s;
  const auto in = x.data();
  const auto g = gamma.data();
  const auto b = beta.data();
  std::vector<T> xhat(x.size());
  std::vector<T> inv_std(c);
  std::vector<T> out(x.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    T mu, var;
    if (training) {
      double acc = 0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < s; ++j) acc += in[(i * c + ch) * s + j];
      }
      mu = static_cast<T>(acc / static_cast<double>(m));
      double sq = 0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < s; ++j) {
          const double dv = in[(i * c + ch) * s + j] - mu;
          sq += dv * dv;
        }
      }
      var = static_cast<T>(sq / static_cast<double>(m));
      const T mom = static_cast<T>(kNormMomentum);
      const T unbiased = m > 1 ? var * static_cast<T>(m) / static_cast<T>(m - 1) : var;
      stats.running_mean[ch] = (T(1) - mom) * stats.running_mean[ch] + mom * mu;
      stats.running_var[ch] = (T(1) - mom) * stats.running_var[ch] + mom * unbiased;
    } else {
      mu = stats.running_mean[ch];
      var = stats.running_var[ch];
    }
    const T is = T(1) / std::sqrt(var + static_cast<T>(kNormEpsilon));
    inv_std[ch] = is;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < s; ++j) {
        const std::size_t idx = (i * c + ch) * s + j;
        xhat[idx] = (in[idx] - mu) * is;
        out[idx] = g[ch] * xhat[idx] + b[ch];
      }
    }
  }
  Tensor<T> result(x.shape(), std::move(out));
  if (auto* tape = tape_for<T>({&x, &gamma, &beta})) {
    auto* xs = x.storage().get();
    auto* gs = gamma.storage().get();
    auto* bs = beta.storage().get();
    auto* ys = result.storage().get();
    tape->record("batch_norm", {x.storage(), gamma.storage(), beta.storage()}, result.storage(),
                 [xs, gs, bs, ys, n, c, s, m, training, xhat = std::move(xhat),
                  inv_std = std::move(inv_std)]() {
                   const auto& dy = ys->grad;
                   for (std::size_t ch = 0; ch < c; ++ch) {
                     T sum_dy = 0, sum_dy_xhat = 0;
                     for (std::size_t i = 0; i < n; ++i) {
                       for (std::size_t j = 0; j < s; ++j) {
                         const std::size_t idx = (i * c + ch) * s + j;
                         sum_dy += dy[idx];
                         sum_dy_xhat += dy[idx] * xhat[idx];
                       }
                     }
                     if (gs->requires_grad) detail::grad_of(*gs)[ch] += sum_dy_xhat;
                     if (bs->requires_grad) detail::grad_of(*bs)[ch] += sum_dy;
                     if (!xs->requires_grad) continue;
                     auto& dx = detail::grad_of(*xs);
                     const T scale_ = gs->data[ch] * inv_std[ch];
                     const T inv_m = T(1) / static_cast<T>(m);
                     for (std::size_t i = 0; i < n; ++i) {
                       for (std::size_t j = 0; j < s; ++j) {
                         const std::size_t idx = (i * c + ch) * s + j;
                         if (training) {
                           dx[idx] += scale_ * (dy[idx] - inv_m * sum_dy -
                                                xhat[idx] * inv_m * sum_dy_xhat);
                         } else {
                           dx[idx] += scale_ * dy[idx];
                         }
                       }
                     }
                   }
                 });
  }
  return result;
}

template <Real T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta) {
  require_rank(x, 4, "instance_norm");
  const std::size_t n = x.dim(0), c = x.dim(1), s = x.dim(2) * x.dim(3);
  check_affine(gamma, beta, c, "instance_norm");
  const auto in = x.data();
  std::vector<T> xhat(x.size());
  std::vector<T> inv_std(n * c);
  std::vector<T> out(x.size());
  for (std::size_t p = 0; p < n * c; ++p) {
    const std::size_t ch = p % c;
    double acc = 0;
    for (std::size_t j = 0; j < s; ++j) acc += in[p * s + j];
    const T mu = static_cast<T>(acc / static_cast<double>(s));
    double sq = 0;
    for (std::size_t j = 0; j < s; ++j) {
      const double dv = in[p * s + j] - mu;
      sq += dv * dv;
    }
    const T is = T(1) / std::sqrt(static_cast<T>(sq / static_cast<double>(s)) +
                                  static_cast<T>(kNormEpsilon));
    inv_std[p] = is;
    for (std::size_t j = 0; j < s; ++j) {
      xhat[p * s + j] = (in[p * s + j] - mu) * is;
      out[p * s + j] = gamma[ch] * xhat[p * s + j] + beta[ch];
    }
  }
  Tensor<T> result(x.shape(), std::move(out));
  if (auto* tape = tape_for<T>({&x, &gamma, &beta})) {
    auto* xs = x.storage().get();
    auto* gs = gamma.storage().get();
    auto* bs = beta.storage().get();
    auto* ys = result.storage().get();
    tape->record("instance_norm", {x.storage(), gamma.storage(), beta.storage()},
                 result.storage(),
                 [xs, gs, bs, ys, n, c, s, xhat = std::move(xhat), inv_std = std::move(inv_std)]() {
                   const auto& dy = ys->grad;
                   const T inv_s = T(1) / static_cast<T>(s);
                   for (std::size_t p = 0; p < n * c; ++p) {
                     const std::size_t ch = p % c;
                     T sum_dy = 0, sum_dy_xhat = 0;
                     for (std::size_t j = 0; j < s; ++j) {
                       sum_dy += dy[p * s + j];
                       sum_dy_xhat += dy[p * s + j] * xhat[p * s + j];
                     }
                     if (gs->requires_grad) detail::grad_of(*gs)[ch] += sum_dy_xhat;
                     if (bs->requires_grad) detail::grad_of(*bs)[ch] += sum_dy;
                     if (!xs->requires_grad) continue;
                     auto& dx = detail::grad_of(*xs);
                     const T k = gs->data[ch] * inv_std[p];
                     for (std::size_t j = 0; j < s; ++j) {
                       dx[p * s + j] +=
                           k * (dy[p * s + j] - inv_s * sum_dy - xhat[p * s + j] * inv_s * sum_dy_xhat);
                     }
                   }
                 });
  }
  return result;
}

// ---------------------------------------------------------------------------
// softmax, concat, l2 normalization

template <Real T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() == 0) throw DimensionError("softmax: scalar input");
  const std::size_t cols = logits.shape().back();
  const std::size_t rows = logits.size() / cols;
  const auto in = logits.data();
  std::vector<T> out(logits.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* z = in.data() + r * cols;
    T* p = out.data() + r * cols;
    const T zmax = *std::max_element(z, z + cols);
    T total = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      p[j] = std::exp(z[j] - zmax);
      total += p[j];
    }
    for (std::size_t j = 0; j < cols; ++j) p[j] /= total;
  }
  Tensor<T> result(logits.shape(), std::move(out));
  if (auto* tape = tape_for<T>({&logits})) {
    auto* xs = logits.storage().get();
    auto* ys = result.storage().get();
    tape->record("softmax", {logits.storage()}, result.storage(), [xs, ys, rows, cols]() {
      auto& dx = detail::grad_of(*xs);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* p = ys->data.data() + r * cols;
        const T* g = ys->grad.data() + r * cols;
        T dot = 0;
        for (std::size_t j = 0; j < cols; ++j) dot += p[j] * g[j];
        for (std::size_t j = 0; j < cols; ++j) dx[r * cols + j] += p[j] * (g[j] - dot);
      }
    });
  }
  return result;
}

template <Real T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range");
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  std::size_t total_axis = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw DimensionError("concat: " + to_string(s) + " vs " + to_string(first));
      }
    }
    widths.push_back(s[axis] * inner);
    total_axis += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total_axis;
  const std::size_t row = total_axis * inner;
  std::vector<T> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto in = parts[k].data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(in.begin() + o * widths[k], in.begin() + (o + 1) * widths[k],
                out.begin() + o * row + offset);
    }
    offset += widths[k];
  }
  Tensor<T> result(std::move(out_shape), std::move(out));

  auto* tape = GradientTape<T>::active();
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (tape != nullptr && any) {
    std::vector<detail::StoragePtr<T>> inputs;
    std::vector<detail::TensorStorage<T>*> raw;
    for (const auto& p : parts) {
      inputs.push_back(p.storage());
      raw.push_back(p.storage().get());
    }
    auto* ys = result.storage().get();
    tape->record("concat", std::move(inputs), result.storage(),
                 [raw = std::move(raw), widths = std::move(widths), ys, outer, row]() {
                   std::size_t offset = 0;
                   for (std::size_t k = 0; k < raw.size(); ++k) {
                     if (raw[k]->requires_grad) {
                       auto& d = detail::grad_of(*raw[k]);
                       for (std::size_t o = 0; o < outer; ++o) {
                         for (std::size_t i = 0; i < widths[k]; ++i) {
                           d[o * widths[k] + i] += ys->grad[o * row + offset + i];
                         }
                       }
                     }
                     offset += widths[k];
                   }
                 });
  }
  return result;
}

template <Real T>
Tensor<T> l2_normalize(const Tensor<T>& x, std::size_t* zero_rows) {
  if (x.rank() != 1 && x.rank() != 2) {
    throw DimensionError("l2_normalize: expected [D] or [N,D], got " + to_string(x.shape()));
  }
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / cols;
  const auto in = x.data();
  std::vector<T> out(x.size(), T(0));
  std::vector<T> norms(rows);
  std::size_t zeros = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    T sq = 0;
    for (std::size_t j = 0; j < cols; ++j) sq += in[r * cols + j] * in[r * cols + j];
    norms[r] = std::sqrt(sq);
    if (norms[r] == T(0)) {
      ++zeros;
      continue;
    }
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = in[r * cols + j] / norms[r];
  }
  if (zero_rows != nullptr) *zero_rows = zeros;
  Tensor<T> result(x.shape(), std::move(out));
  if (auto* tape = tape_for<T>({&x})) {
    auto* xs = x.storage().get();
    auto* ys = result.storage().get();
    tape->record("l2_normalize", {x.storage()}, result.storage(),
                 [xs, ys, rows, cols, norms = std::move(norms)]() {
                   auto& dx = detail::grad_of(*xs);
                   for (std::size_t r = 0; r < rows; ++r) {
                     if (norms[r] == T(0)) continue;
                     const T* y = ys->data.data() + r * cols;
                     const T* g = ys->grad.data() + r * cols;
                     T dot = 0;
                     for (std::size_t j = 0; j < cols; ++j) dot += y[j] * g[j];
                     for (std::size_t j = 0; j < cols; ++j) {
                       dx[r * cols + j] += (g[j] - y[j] * dot) / norms[r];
                     }
                   }
                 });
  }
  return result;
}

#define EPAN_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t);  \
  template Tensor<T> relu(const Tensor<T>&);                                                 \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> avg_pool2d(const Tensor<T>&, std::size_t);                              \
  template Tensor<T> max_pool2d(const Tensor<T>&, std::size_t);                              \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                      \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                NormStats<T>&, bool);                                        \
  template Tensor<T> instance_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> softmax(const Tensor<T>&);                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale(const Tensor<T>&, T);                                             \
  template Tensor<T> sum(const Tensor<T>&);                                                  \
  template Tensor<T> mean(const Tensor<T>&);                                                 \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                     \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                       \
  template Tensor<T> l2_normalize(const Tensor<T>&, std::size_t*);

EPAN_INSTANTIATE_OPS(float)
EPAN_INSTANTIATE_OPS(double)

}  // namespace epan
