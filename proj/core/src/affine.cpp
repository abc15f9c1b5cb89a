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

#include "epan/affine.hpp"

#include <cmath>
#include <string>

#include "epan/errors.hpp"
#include "epan/ops.hpp"

namespace epan {

bool AffineParams::is_finite() const {
  for (double v : theta) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

AffineParams AffineParams::inverse() const {
  const double det = theta[0] * theta[4] - theta[1] * theta[3];
  if (det == 0.0 || !std::isfinite(det)) throw NumericError("affine map is not invertible");
  const double a = theta[4] / det, b = -theta[1] / det;
  const double c = -theta[3] / det, d = theta[0] / det;
  return {{a, b, -(a * theta[2] + b * theta[5]), c, d, -(c * theta[2] + d * theta[5])}};
}

std::array<double, 2> AffineParams::apply(double x, double y) const {
  return {theta[0] * x + theta[1] * y + theta[2], theta[3] * x + theta[4] * y + theta[5]};
}

AffineParams compose(const AffineParams& a, const AffineParams& b) {
  const auto& p = a.theta;
  const auto& q = b.theta;
  return {{p[0] * q[0] + p[1] * q[3], p[0] * q[1] + p[1] * q[4], p[0] * q[2] + p[1] * q[5] + p[2],
           p[3] * q[0] + p[4] * q[3], p[3] * q[1] + p[4] * q[4],
           p[3] * q[2] + p[4] * q[5] + p[5]}};
}

double l1_distance(const AffineParams& a, const AffineParams& b) {
  double d = 0;
  for (std::size_t i = 0; i < 6; ++i) d += std::abs(a.theta[i] - b.theta[i]);
  return d;
}

double normalized_coord(std::size_t index, std::size_t length) {
  if (length <= 1) return 0.0;
  return 2.0 * static_cast<double>(index) / static_cast<double>(length - 1) - 1.0;
}

template <Real T>
Tensor<T> theta_tensor(std::span<const AffineParams> params) {
  std::vector<T> values;
  values.reserve(params.size() * 6);
  for (const auto& p : params) {
    for (double v : p.theta) values.push_back(static_cast<T>(v));
  }
  return Tensor<T>(Shape{params.size(), 6}, std::move(values));
}

template <Real T>
std::vector<AffineParams> theta_rows(const Tensor<T>& theta) {
  if (theta.rank() != 2 || theta.dim(1) != 6) {
    throw DimensionError("theta must be [N,6], got " + to_string(theta.shape()));
  }
  std::vector<AffineParams> rows(theta.dim(0));
  for (std::size_t n = 0; n < rows.size(); ++n) {
    for (std::size_t k = 0; k < 6; ++k) rows[n].theta[k] = theta[n * 6 + k];
  }
  return rows;
}

template <Real T>
Tensor<T> make_grid(const Tensor<T>& theta, std::size_t height, std::size_t width) {
  if (theta.rank() != 2 || theta.dim(1) != 6) {
    throw DimensionError("make_grid: theta must be [N,6], got " + to_string(theta.shape()));
  }
  if (height == 0 || width == 0) throw DimensionError("make_grid: empty output size");
  const std::size_t n = theta.dim(0);
  const auto t = theta.data();
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(static_cast<double>(t[i]))) {
      throw NumericError("make_grid: non-finite theta at index " + std::to_string(i));
    }
  }
  std::vector<T> xt(width), yt(height);
  for (std::size_t j = 0; j < width; ++j) xt[j] = static_cast<T>(normalized_coord(j, width));
  for (std::size_t i = 0; i < height; ++i) yt[i] = static_cast<T>(normalized_coord(i, height));

  std::vector<T> grid(n * height * width * 2);
  for (std::size_t b = 0; b < n; ++b) {
    const T* p = t.data() + b * 6;
    for (std::size_t i = 0; i < height; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        T* g = grid.data() + ((b * height + i) * width + j) * 2;
        g[0] = p[0] * xt[j] + p[1] * yt[i] + p[2];
        g[1] = p[3] * xt[j] + p[4] * yt[i] + p[5];
      }
    }
  }
  Tensor<T> result(Shape{n, height, width, 2}, std::move(grid));
  if (detail::should_record<T>({&theta})) {
    auto* ts = theta.storage().get();
    auto* gs = result.storage().get();
    GradientTape<T>::active()->record(
        "make_grid", {theta.storage()}, result.storage(),
        [ts, gs, n, height, width, xt = std::move(xt), yt = std::move(yt)]() {
          auto& dt = detail::grad_of(*ts);
          for (std::size_t b = 0; b < n; ++b) {
            T acc[6] = {0, 0, 0, 0, 0, 0};
            for (std::size_t i = 0; i < height; ++i) {
              for (std::size_t j = 0; j < width; ++j) {
                const T* d = gs->grad.data() + ((b * height + i) * width + j) * 2;
                acc[0] += d[0] * xt[j];
                acc[1] += d[0] * yt[i];
                acc[2] += d[0];
                acc[3] += d[1] * xt[j];
                acc[4] += d[1] * yt[i];
                acc[5] += d[1];
              }
            }
            for (std::size_t k = 0; k < 6; ++k) dt[b * 6 + k] += acc[k];
          }
        });
  }
  return result;
}

template <Real T>
Tensor<T> make_grid(const AffineParams& theta, std::size_t height, std::size_t width) {
  if (!theta.is_finite()) throw NumericError("make_grid: non-finite theta");
  const AffineParams one[1] = {theta};
  Tensor<T> grid = make_grid(theta_tensor<T>(one), height, width);
  return grid.reshaped(Shape{height, width, 2});
}

namespace {

// Bilinear footprint of one sampling point: up to four taps, each with a
// validity flag (inside the source) and a weight.
template <Real T>
struct Footprint {
  long x0, y0;
  T fx, fy;
  bool vx0, vx1, vy0, vy1;
};

template <Real T>
Footprint<T> footprint(T gx, T gy, std::size_t h, std::size_t w) {
  const T ix = (gx + T(1)) * static_cast<T>(w - 1) / T(2);
  const T iy = (gy + T(1)) * static_cast<T>(h - 1) / T(2);
  Footprint<T> f{};
  // Points further than one pixel outside the source read nothing; clamp
  // before the integer conversion so huge coordinates cannot overflow.
  const T lim_x = static_cast<T>(w) + T(1), lim_y = static_cast<T>(h) + T(1);
  const T cx = ix < T(-2) ? T(-2) : (ix > lim_x ? lim_x : ix);
  const T cy = iy < T(-2) ? T(-2) : (iy > lim_y ? lim_y : iy);
  const T flx = std::floor(cx), fly = std::floor(cy);
  f.x0 = static_cast<long>(flx);
  f.y0 = static_cast<long>(fly);
  f.fx = cx - flx;
  f.fy = cy - fly;
  const long W = static_cast<long>(w), H = static_cast<long>(h);
  f.vx0 = f.x0 >= 0 && f.x0 < W;
  f.vx1 = f.x0 + 1 >= 0 && f.x0 + 1 < W;
  f.vy0 = f.y0 >= 0 && f.y0 < H;
  f.vy1 = f.y0 + 1 >= 0 && f.y0 + 1 < H;
  return f;
}

}  // namespace

template <Real T>
Tensor<T> grid_sample(const Tensor<T>& input, const Tensor<T>& grid) {
  const bool batched = input.rank() == 4;
  if (!batched && input.rank() != 3) {
    throw DimensionError("grid_sample: input must be [C,H,W] or [N,C,H,W], got " +
                         to_string(input.shape()));
  }
  if (grid.rank() != input.rank() || grid.shape().back() != 2) {
    throw DimensionError("grid_sample: grid shape " + to_string(grid.shape()) +
                         " does not match input " + to_string(input.shape()));
  }
  const std::size_t off = batched ? 1 : 0;
  const std::size_t n = batched ? input.dim(0) : 1;
  const std::size_t c = input.dim(off), h = input.dim(off + 1), w = input.dim(off + 2);
  if (batched && grid.dim(0) != n) throw DimensionError("grid_sample: batch size mismatch");
  const std::size_t ho = grid.dim(off), wo = grid.dim(off + 1);
  const std::size_t plane_out = ho * wo, plane_in = h * w;
  const auto in = input.data();
  const auto gd = grid.data();
  for (std::size_t i = 0; i < gd.size(); ++i) {
    if (!std::isfinite(static_cast<double>(gd[i]))) {
      throw NumericError("grid_sample: non-finite grid value at index " + std::to_string(i));
    }
  }

  std::vector<T> out(n * c * plane_out, T(0));
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < plane_out; ++p) {
      const T* g = gd.data() + (b * plane_out + p) * 2;
      const auto f = footprint<T>(g[0], g[1], h, w);
      const T w00 = (T(1) - f.fx) * (T(1) - f.fy), w01 = f.fx * (T(1) - f.fy);
      const T w10 = (T(1) - f.fx) * f.fy, w11 = f.fx * f.fy;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* src = in.data() + (b * c + ch) * plane_in;
        T v = 0;
        if (f.vy0 && f.vx0) v += w00 * src[f.y0 * w + f.x0];
        if (f.vy0 && f.vx1) v += w01 * src[f.y0 * w + f.x0 + 1];
        if (f.vy1 && f.vx0) v += w10 * src[(f.y0 + 1) * w + f.x0];
        if (f.vy1 && f.vx1) v += w11 * src[(f.y0 + 1) * w + f.x0 + 1];
        out[(b * c + ch) * plane_out + p] = v;
      }
    }
  }
  Shape shape = batched ? Shape{n, c, ho, wo} : Shape{c, ho, wo};
  Tensor<T> result(std::move(shape), std::move(out));

  if (detail::should_record<T>({&input, &grid})) {
    auto* xs = input.storage().get();
    auto* gs = grid.storage().get();
    auto* ys = result.storage().get();
    GradientTape<T>::active()->record(
        "grid_sample", {input.storage(), grid.storage()}, result.storage(),
        [xs, gs, ys, n, c, h, w, plane_in, plane_out]() {
          const bool want_x = xs->requires_grad, want_g = gs->requires_grad;
          T* dx = want_x ? detail::grad_of(*xs).data() : nullptr;
          T* dg = want_g ? detail::grad_of(*gs).data() : nullptr;
          const T sx = static_cast<T>(w - 1) / T(2), sy = static_cast<T>(h - 1) / T(2);
          for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t p = 0; p < plane_out; ++p) {
              const T* g = gs->data.data() + (b * plane_out + p) * 2;
              const auto f = footprint<T>(g[0], g[1], h, w);
              const T w00 = (T(1) - f.fx) * (T(1) - f.fy), w01 = f.fx * (T(1) - f.fy);
              const T w10 = (T(1) - f.fx) * f.fy, w11 = f.fx * f.fy;
              const std::size_t i00 = f.y0 * w + f.x0;
              T dix = 0, diy = 0;
              for (std::size_t ch = 0; ch < c; ++ch) {
                const T up = ys->grad[(b * c + ch) * plane_out + p];
                if (up == T(0)) continue;
                const std::size_t base = (b * c + ch) * plane_in;
                const T* src = xs->data.data() + base;
                const T v00 = (f.vy0 && f.vx0) ? src[i00] : T(0);
                const T v01 = (f.vy0 && f.vx1) ? src[i00 + 1] : T(0);
                const T v10 = (f.vy1 && f.vx0) ? src[i00 + w] : T(0);
                const T v11 = (f.vy1 && f.vx1) ? src[i00 + w + 1] : T(0);
                if (want_x) {
                  if (f.vy0 && f.vx0) dx[base + i00] += w00 * up;
                  if (f.vy0 && f.vx1) dx[base + i00 + 1] += w01 * up;
                  if (f.vy1 && f.vx0) dx[base + i00 + w] += w10 * up;
                  if (f.vy1 && f.vx1) dx[base + i00 + w + 1] += w11 * up;
                }
                dix += up * ((T(1) - f.fy) * (v01 - v00) + f.fy * (v11 - v10));
                diy += up * ((T(1) - f.fx) * (v10 - v00) + f.fx * (v11 - v01));
              }
              if (want_g) {
                dg[(b * plane_out + p) * 2] += dix * sx;
                dg[(b * plane_out + p) * 2 + 1] += diy * sy;
              }
            }
          }
        });
  }
  return result;
}

template <Real T>
Tensor<T> affine_warp(const Tensor<T>& input, const Tensor<T>& theta, std::size_t height,
                      std::size_t width) {
  return grid_sample(input, make_grid(theta, height, width));
}

template <Real T>
Tensor<T> warp_image(const Tensor<T>& image, const AffineParams& theta, std::size_t height,
                     std::size_t width) {
  if (image.rank() != 3) {
    throw DimensionError("warp_image: expected [C,H,W], got " + to_string(image.shape()));
  }
  return grid_sample(image.detach(), make_grid<T>(theta, height, width));
}

template <Real T>
SampleGradients<T> sample_backward(const Tensor<T>& input, const AffineParams& theta,
                                   const Tensor<T>& upstream) {
  Tensor<T> x = input.detach();
  x.set_requires_grad(true);
  const AffineParams one[1] = {theta};
  Tensor<T> t = theta_tensor<T>(one);
  t.set_requires_grad(true);
  {
    GradientTape<T> tape;
    const bool batched = x.rank() == 4;
    Tensor<T> xb = batched ? x : reshape(x, Shape{1, x.dim(0), x.dim(1), x.dim(2)});
    const std::size_t ho = upstream.dim(upstream.rank() - 2), wo = upstream.dim(upstream.rank() - 1);
    Tensor<T> y = affine_warp(xb, t, ho, wo);
    if (y.size() != upstream.size()) {
      throw DimensionError("sample_backward: upstream shape " + to_string(upstream.shape()));
    }
    tape.backward(sum(mul(y, upstream.reshaped(y.shape()))));
  }
  SampleGradients<T> out;
  out.grad_input = Tensor<T>(x.shape(), std::vector<T>(x.grad().begin(), x.grad().end()));
  for (std::size_t k = 0; k < 6; ++k) out.grad_theta.theta[k] = t.grad()[k];
  return out;
}

#define EPAN_INSTANTIATE_AFFINE(T)                                                            \
  template Tensor<T> theta_tensor<T>(std::span<const AffineParams>);                          \
  template std::vector<AffineParams> theta_rows(const Tensor<T>&);                            \
  template Tensor<T> make_grid(const Tensor<T>&, std::size_t, std::size_t);                   \
  template Tensor<T> make_grid<T>(const AffineParams&, std::size_t, std::size_t);             \
  template Tensor<T> grid_sample(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> affine_warp(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t); \
  template Tensor<T> warp_image(const Tensor<T>&, const AffineParams&, std::size_t, std::size_t); \
  template SampleGradients<T> sample_backward(const Tensor<T>&, const AffineParams&,          \
                                              const Tensor<T>&);

EPAN_INSTANTIATE_AFFINE(float)
EPAN_INSTANTIATE_AFFINE(double)

}  // namespace epan
