#include "sbd/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "sbd/error.hpp"

namespace sbd::ops {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using StridedMat = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMat = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// Spatial geometry lifted to three axes; 2D inputs get a unit depth axis.
struct Geometry {
  std::int64_t batch = 0, in_ch = 0, out_ch = 0;
  std::array<std::int64_t, 3> in{1, 1, 1}, kernel{1, 1, 1}, out{1, 1, 1};
  std::array<int, 3> stride{1, 1, 1}, pad{0, 0, 0};

  std::int64_t in_size() const { return in[0] * in[1] * in[2]; }
  std::int64_t out_size() const { return out[0] * out[1] * out[2]; }
  std::int64_t kernel_size() const { return kernel[0] * kernel[1] * kernel[2]; }
  bool pointwise() const {
    return kernel_size() == 1 && stride == std::array<int, 3>{1, 1, 1} &&
           pad == std::array<int, 3>{0, 0, 0};
  }
};

int spatial_dims(const Tensor& t, const char* op) {
  if (t.rank() != 4 && t.rank() != 5) {
    throw DimensionError(std::string(op) + ": expected rank 4 or 5 input, got " +
                         shape_str(t.shape()));
  }
  return t.rank() - 2;
}

std::array<std::int64_t, 3> lift_extents(const Shape& s, int dims) {
  std::array<std::int64_t, 3> e{1, 1, 1};
  for (int i = 0; i < dims; ++i) e[3 - dims + i] = s[static_cast<std::size_t>(2 + i)];
  return e;
}

std::array<int, 3> lift_params(std::span<const int> p, int dims, int fill, const char* what) {
  if (static_cast<int>(p.size()) != dims) {
    throw DimensionError(std::string(what) + " needs one entry per spatial axis");
  }
  std::array<int, 3> e{fill, fill, fill};
  for (int i = 0; i < dims; ++i) e[3 - dims + i] = p[static_cast<std::size_t>(i)];
  return e;
}

Shape output_shape(const Geometry& g, std::int64_t channels, int dims) {
  Shape s{g.batch, channels};
  for (int i = 3 - dims; i < 3; ++i) s.push_back(g.out[i]);
  return s;
}

// Output rows (oz, oy) per im2col chunk are chosen so a chunk holds roughly
// this many columns; the chunk then stays cache resident through the GEMM.
constexpr std::int64_t kChunkColumns = 512;

std::int64_t rows_per_chunk(const Geometry& g) {
  return std::max<std::int64_t>(1, kChunkColumns / g.out[2]);
}

// col[(c, kz, ky, kx), (r - r0) * ow + ox] = padded input sample for output
// rows r = oz * oh + oy in [r0, r1).
void im2col(const float* x, const Geometry& g, std::int64_t r0, std::int64_t r1, float* col) {
  const std::int64_t ow = g.out[2];
  const std::int64_t cols = (r1 - r0) * ow;
  for (std::int64_t c = 0; c < g.in_ch; ++c) {
    const float* xc = x + c * g.in_size();
    for (std::int64_t kz = 0; kz < g.kernel[0]; ++kz)
      for (std::int64_t ky = 0; ky < g.kernel[1]; ++ky)
        for (std::int64_t kx = 0; kx < g.kernel[2]; ++kx) {
          const std::int64_t row = ((c * g.kernel[0] + kz) * g.kernel[1] + ky) * g.kernel[2] + kx;
          // Valid ox range for unit stride: 0 <= ox - pad + kx < in_w.
          const std::int64_t lo = std::clamp<std::int64_t>(g.pad[2] - kx, 0, ow);
          const std::int64_t hi = std::clamp<std::int64_t>(g.in[2] + g.pad[2] - kx, lo, ow);
          for (std::int64_t r = r0; r < r1; ++r) {
            const std::int64_t oz = r / g.out[1], oy = r % g.out[1];
            const std::int64_t iz = oz * g.stride[0] - g.pad[0] + kz;
            const std::int64_t iy = oy * g.stride[1] - g.pad[1] + ky;
            float* d = col + row * cols + (r - r0) * ow;
            if (iz < 0 || iz >= g.in[0] || iy < 0 || iy >= g.in[1]) {
              std::fill(d, d + ow, 0.0f);
              continue;
            }
            const float* s = xc + (iz * g.in[1] + iy) * g.in[2];
            if (g.stride[2] == 1) {
              std::fill(d, d + lo, 0.0f);
              std::copy(s + lo - g.pad[2] + kx, s + hi - g.pad[2] + kx, d + lo);
              std::fill(d + hi, d + ow, 0.0f);
            } else {
              for (std::int64_t ox = 0; ox < ow; ++ox) {
                const std::int64_t ix = ox * g.stride[2] - g.pad[2] + kx;
                d[ox] = (ix >= 0 && ix < g.in[2]) ? s[ix] : 0.0f;
              }
            }
          }
        }
  }
}

// Adjoint of im2col: scatter-adds a column chunk back into the input layout.
void col2im(const float* col, const Geometry& g, std::int64_t r0, std::int64_t r1, float* x) {
  const std::int64_t ow = g.out[2];
  const std::int64_t cols = (r1 - r0) * ow;
  for (std::int64_t c = 0; c < g.in_ch; ++c) {
    float* xc = x + c * g.in_size();
    for (std::int64_t kz = 0; kz < g.kernel[0]; ++kz)
      for (std::int64_t ky = 0; ky < g.kernel[1]; ++ky)
        for (std::int64_t kx = 0; kx < g.kernel[2]; ++kx) {
          const std::int64_t row = ((c * g.kernel[0] + kz) * g.kernel[1] + ky) * g.kernel[2] + kx;
          const std::int64_t lo = std::clamp<std::int64_t>(g.pad[2] - kx, 0, ow);
          const std::int64_t hi = std::clamp<std::int64_t>(g.in[2] + g.pad[2] - kx, lo, ow);
          for (std::int64_t r = r0; r < r1; ++r) {
            const std::int64_t oz = r / g.out[1], oy = r % g.out[1];
            const std::int64_t iz = oz * g.stride[0] - g.pad[0] + kz;
            const std::int64_t iy = oy * g.stride[1] - g.pad[1] + ky;
            if (iz < 0 || iz >= g.in[0] || iy < 0 || iy >= g.in[1]) continue;
            const float* s = col + row * cols + (r - r0) * ow;
            float* d = xc + (iz * g.in[1] + iy) * g.in[2];
            if (g.stride[2] == 1) {
              float* dd = d - g.pad[2] + kx;
              for (std::int64_t ox = lo; ox < hi; ++ox) dd[ox] += s[ox];
            } else {
              for (std::int64_t ox = 0; ox < ow; ++ox) {
                const std::int64_t ix = ox * g.stride[2] - g.pad[2] + kx;
                if (ix >= 0 && ix < g.in[2]) d[ix] += s[ox];
              }
            }
          }
        }
  }
}

// Per-thread scratch reused across calls.
std::vector<float>& scratch(int slot, std::size_t n) {
  thread_local std::vector<float> buffers[2];
  auto& b = buffers[slot];
  if (b.size() < n) b.resize(n);
  return b;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

}  // namespace

Tensor conv(const Tensor& input, const Tensor& weight, const Tensor& bias,
            std::span<const int> stride, std::span<const int> padding) {
  const int dims = spatial_dims(input, "conv");
  if (weight.rank() != input.rank()) {
    throw DimensionError("conv: weight rank " + std::to_string(weight.rank()) +
                         " does not match input rank " + std::to_string(input.rank()));
  }
  Geometry g;
  g.batch = input.dim(0);
  g.in_ch = input.dim(1);
  g.out_ch = weight.dim(0);
  if (weight.dim(1) != g.in_ch) {
    throw DimensionError("conv: input has " + std::to_string(g.in_ch) + " channels, weight expects " +
                         std::to_string(weight.dim(1)));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.out_ch)) {
    throw DimensionError("conv: bias shape " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(g.out_ch) + " filters");
  }
  g.in = lift_extents(input.shape(), dims);
  g.kernel = lift_extents(weight.shape(), dims);
  g.stride = lift_params(stride, dims, 1, "conv stride");
  g.pad = lift_params(padding, dims, 0, "conv padding");
  for (int a = 0; a < 3; ++a) {
    if (g.stride[a] <= 0 || g.pad[a] < 0) throw InputError("conv: stride must be positive, padding non-negative");
    const std::int64_t span = g.in[a] + 2 * g.pad[a] - g.kernel[a];
    if (span < 0) {
      throw DimensionError("conv: kernel " + shape_str(weight.shape()) + " does not fit padded input " +
                           shape_str(input.shape()));
    }
    g.out[a] = span / g.stride[a] + 1;
  }

  const std::int64_t K = g.in_ch * g.kernel_size();
  const std::int64_t P = g.out_size();
  const std::int64_t F = g.out_ch;
  const std::int64_t rows = g.out[0] * g.out[1];
  const std::int64_t step = rows_per_chunk(g);
  std::vector<float> out(static_cast<std::size_t>(g.batch * F * P));
  ConstMapMat W(weight.data().data(), F, K);
  for (std::int64_t n = 0; n < g.batch; ++n) {
    const float* x = input.data().data() + n * g.in_ch * g.in_size();
    float* y = out.data() + n * F * P;
    if (g.pointwise()) {
      MapMat(y, F, P).noalias() = W * ConstMapMat(x, K, P);
    } else {
      float* col = scratch(0, static_cast<std::size_t>(K * step * g.out[2])).data();
      for (std::int64_t r0 = 0; r0 < rows; r0 += step) {
        const std::int64_t r1 = std::min(rows, r0 + step);
        const std::int64_t cols = (r1 - r0) * g.out[2];
        im2col(x, g, r0, r1, col);
        StridedMat(y + r0 * g.out[2], F, cols, Eigen::OuterStride<>(P)).noalias() = W * ConstMapMat(col, K, cols);
      }
    }
    if (bias.defined()) {
      for (std::int64_t f = 0; f < F; ++f) {
        const float b = bias.data()[f];
        for (std::int64_t p = 0; p < P; ++p) y[f * P + p] += b;
      }
    }
  }

  Tensor in_ref = input, w_ref = weight, b_ref = bias;
  return make_result(output_shape(g, F, dims), std::move(out), {&input, &weight, &bias},
                     [in_ref, w_ref, b_ref, g, K, P, F, rows, step](std::span<const float> gout) mutable {
                       ConstMapMat W(w_ref.data().data(), F, K);
                       const bool want_w = w_ref.requires_grad(), want_x = in_ref.requires_grad();
                       for (std::int64_t n = 0; n < g.batch; ++n) {
                         const float* gy = gout.data() + n * F * P;
                         const float* x = in_ref.data().data() + n * g.in_ch * g.in_size();
                         if (b_ref.defined() && b_ref.requires_grad()) {
                           auto db = b_ref.grad();
                           for (std::int64_t f = 0; f < F; ++f) {
                             double s = 0.0;
                             for (std::int64_t p = 0; p < P; ++p) s += gy[f * P + p];
                             db[f] += static_cast<float>(s);
                           }
                         }
                         if (g.pointwise()) {
                           ConstMapMat dY(gy, F, P);
                           if (want_w) MapMat(w_ref.grad().data(), F, K).noalias() += dY * ConstMapMat(x, K, P).transpose();
                           if (want_x) MapMat(in_ref.grad().data() + n * K * P, K, P).noalias() += W.transpose() * dY;
                           continue;
                         }
                         const auto chunk = static_cast<std::size_t>(K * step * g.out[2]);
                         float* col = scratch(0, chunk).data();
                         float* dcol = scratch(1, chunk).data();
                         float* dx = want_x ? in_ref.grad().data() + n * g.in_ch * g.in_size() : nullptr;
                         for (std::int64_t r0 = 0; r0 < rows; r0 += step) {
                           const std::int64_t r1 = std::min(rows, r0 + step);
                           const std::int64_t cols = (r1 - r0) * g.out[2];
                           ConstStridedMat dY(gy + r0 * g.out[2], F, cols, Eigen::OuterStride<>(P));
                           if (want_w) {
                             im2col(x, g, r0, r1, col);
                             MapMat(w_ref.grad().data(), F, K).noalias() += dY * ConstMapMat(col, K, cols).transpose();
                           }
                           if (want_x) {
                             MapMat(dcol, K, cols).noalias() = W.transpose() * dY;
                             col2im(dcol, g, r0, r1, dx);
                           }
                         }
                       }
                     });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  if (input.rank() != 4) throw DimensionError("conv2d: expected [N,C,H,W], got " + shape_str(input.shape()));
  const std::array<int, 2> s{stride, stride}, p{padding, padding};
  return conv(input, weight, bias, s, p);
}

Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  if (input.rank() != 5) throw DimensionError("conv3d: expected [N,C,D,H,W], got " + shape_str(input.shape()));
  const std::array<int, 3> s{stride, stride, stride}, p{padding, padding, padding};
  return conv(input, weight, bias, s, p);
}

Tensor conv_transpose3d_2x(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() != 5) {
    throw DimensionError("conv_transpose3d_2x: expected [N,C,D,H,W], got " + shape_str(input.shape()));
  }
  if (weight.rank() != 5 || weight.dim(0) != input.dim(1) || weight.dim(2) != 2 ||
      weight.dim(3) != 2 || weight.dim(4) != 2) {
    throw DimensionError("conv_transpose3d_2x: weight " + shape_str(weight.shape()) +
                         " incompatible with input " + shape_str(input.shape()));
  }
  const std::int64_t N = input.dim(0), Cin = input.dim(1), Cout = weight.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != Cout)) {
    throw DimensionError("conv_transpose3d_2x: bias shape mismatch");
  }
  const std::int64_t D = input.dim(2), H = input.dim(3), W = input.dim(4);
  const std::int64_t P = D * H * W;
  const std::int64_t OD = 2 * D, OH = 2 * H, OW = 2 * W, OP = OD * OH * OW;
  const std::int64_t R = Cout * 8;

  std::vector<float> out(static_cast<std::size_t>(N * Cout * OP));
  std::vector<float> tmp(static_cast<std::size_t>(R * P));
  ConstMapMat Wm(weight.data().data(), Cin, R);
  for (std::int64_t n = 0; n < N; ++n) {
    MapMat T(tmp.data(), R, P);
    T.noalias() = Wm.transpose() * ConstMapMat(input.data().data() + n * Cin * P, Cin, P);
    float* y = out.data() + n * Cout * OP;
    for (std::int64_t f = 0; f < Cout; ++f) {
      const float b = bias.defined() ? bias.data()[f] : 0.0f;
      for (int k = 0; k < 8; ++k) {
        const int kz = k >> 2, ky = (k >> 1) & 1, kx = k & 1;
        const float* t = tmp.data() + (f * 8 + k) * P;
        for (std::int64_t z = 0; z < D; ++z)
          for (std::int64_t yy = 0; yy < H; ++yy) {
            float* row = y + f * OP + ((2 * z + kz) * OH + 2 * yy + ky) * OW + kx;
            const float* src = t + (z * H + yy) * W;
            for (std::int64_t x = 0; x < W; ++x) row[2 * x] = src[x] + b;
          }
      }
    }
  }

  Tensor in_ref = input, w_ref = weight, b_ref = bias;
  return make_result({N, Cout, OD, OH, OW}, std::move(out), {&input, &weight, &bias},
                     [=](std::span<const float> gout) mutable {
                       std::vector<float> dtmp(static_cast<std::size_t>(R * P));
                       ConstMapMat Wm(w_ref.data().data(), Cin, R);
                       for (std::int64_t n = 0; n < N; ++n) {
                         const float* gy = gout.data() + n * Cout * OP;
                         for (std::int64_t f = 0; f < Cout; ++f)
                           for (int k = 0; k < 8; ++k) {
                             const int kz = k >> 2, ky = (k >> 1) & 1, kx = k & 1;
                             float* t = dtmp.data() + (f * 8 + k) * P;
                             for (std::int64_t z = 0; z < D; ++z)
                               for (std::int64_t yy = 0; yy < H; ++yy) {
                                 const float* row = gy + f * OP + ((2 * z + kz) * OH + 2 * yy + ky) * OW + kx;
                                 float* dst = t + (z * H + yy) * W;
                                 for (std::int64_t x = 0; x < W; ++x) dst[x] = row[2 * x];
                               }
                           }
                         ConstMapMat dT(dtmp.data(), R, P);
                         if (b_ref.defined() && b_ref.requires_grad()) {
                           auto db = b_ref.grad();
                           for (std::int64_t f = 0; f < Cout; ++f) {
                             double s = 0.0;
                             for (std::int64_t i = f * 8 * P; i < (f + 1) * 8 * P; ++i) s += dtmp[i];
                             db[f] += static_cast<float>(s);
                           }
                         }
                         const float* x = in_ref.data().data() + n * Cin * P;
                         if (w_ref.requires_grad()) {
                           MapMat dW(w_ref.grad().data(), Cin, R);
                           dW.noalias() += ConstMapMat(x, Cin, P) * dT.transpose();
                         }
                         if (in_ref.requires_grad()) {
                           MapMat dX(in_ref.grad().data() + n * Cin * P, Cin, P);
                           dX.noalias() += Wm * dT;
                         }
                       }
                     });
}

PoolResult max_pool(const Tensor& input, std::span<const int> window, std::span<const int> stride) {
  const int dims = spatial_dims(input, "max_pool");
  Geometry g;
  g.batch = input.dim(0);
  g.in_ch = input.dim(1);
  g.in = lift_extents(input.shape(), dims);
  const auto win = lift_params(window, dims, 1, "pool window");
  g.stride = lift_params(stride, dims, 1, "pool stride");
  for (int a = 0; a < 3; ++a) {
    if (win[a] <= 0 || g.stride[a] <= 0) throw InputError("max_pool: window and stride must be positive");
    g.kernel[a] = win[a];
    if (g.in[a] < win[a] || (g.in[a] - win[a]) % g.stride[a] != 0) {
      throw DimensionError("max_pool: extent " + std::to_string(g.in[a]) + " of input " +
                           shape_str(input.shape()) + " is not divisible by the pooling window");
    }
    g.out[a] = (g.in[a] - win[a]) / g.stride[a] + 1;
  }
  const std::int64_t planes = g.batch * g.in_ch;
  const std::int64_t OP = g.out_size(), IP = g.in_size();
  std::vector<float> out(static_cast<std::size_t>(planes * OP));
  std::vector<std::int64_t> argmax(out.size());
  const float* x = input.data().data();
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    for (std::int64_t oz = 0; oz < g.out[0]; ++oz)
      for (std::int64_t oy = 0; oy < g.out[1]; ++oy)
        for (std::int64_t ox = 0; ox < g.out[2]; ++ox) {
          float best = -std::numeric_limits<float>::infinity();
          std::int64_t best_i = -1;
          for (std::int64_t kz = 0; kz < win[0]; ++kz)
            for (std::int64_t ky = 0; ky < win[1]; ++ky)
              for (std::int64_t kx = 0; kx < win[2]; ++kx) {
                const std::int64_t i =
                    pl * IP + ((oz * g.stride[0] + kz) * g.in[1] + oy * g.stride[1] + ky) * g.in[2] +
                    ox * g.stride[2] + kx;
                if (best_i < 0 || x[i] > best) {
                  best = x[i];
                  best_i = i;
                }
              }
          const std::int64_t o = pl * OP + (oz * g.out[1] + oy) * g.out[2] + ox;
          out[o] = best;
          argmax[o] = best_i;
        }
  }
  Tensor in_ref = input;
  auto routes = argmax;
  Tensor result = make_result(output_shape(g, g.in_ch, dims), std::move(out), {&input},
                              [in_ref, routes](std::span<const float> gout) mutable {
                                auto gi = in_ref.grad();
                                for (std::size_t o = 0; o < routes.size(); ++o) gi[routes[o]] += gout[o];
                              });
  return {std::move(result), std::move(argmax)};
}

Tensor max_pool2d(const Tensor& input, int window) {
  if (input.rank() != 4) throw DimensionError("max_pool2d: expected [N,C,H,W], got " + shape_str(input.shape()));
  const std::array<int, 2> w{window, window};
  return max_pool(input, w, w).output;
}

Tensor max_pool3d(const Tensor& input, int window) {
  if (input.rank() != 5) throw DimensionError("max_pool3d: expected [N,C,D,H,W], got " + shape_str(input.shape()));
  const std::array<int, 3> w{window, window, window};
  return max_pool(input, w, w).output;
}

Tensor relu(const Tensor& input) {
  auto x = input.data();
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
  Tensor in_ref = input;
  return make_result(input.shape(), std::move(out), {&input},
                     [in_ref](std::span<const float> gout) mutable {
                       auto gi = in_ref.grad();
                       auto x = in_ref.data();
                       for (std::size_t i = 0; i < gi.size(); ++i) {
                         if (x[i] > 0.0f) gi[i] += gout[i];
                       }
                     });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::int32_t> labels,
                             std::optional<std::int32_t> ignore_label) {
  if (logits.rank() < 2) throw DimensionError("softmax_cross_entropy: logits need rank >= 2");
  const std::int64_t N = logits.dim(0), L = logits.dim(1);
  const std::int64_t S = logits.numel() / (N * L);
  if (static_cast<std::int64_t>(labels.size()) != N * S) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for logits " + shape_str(logits.shape()));
  }
  for (auto l : labels) {
    if ((l < 0 || l >= L) && !(ignore_label && l == *ignore_label)) {
      throw InputError("softmax_cross_entropy: label " + std::to_string(l) + " outside [0, " +
                       std::to_string(L) + ")");
    }
  }
  const float* z = logits.data().data();
  // Softmax probabilities are kept for the backward pass.
  std::vector<float> prob(static_cast<std::size_t>(logits.numel()));
  double total = 0.0;
  std::int64_t count = 0;
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t s = 0; s < S; ++s) {
      const std::int64_t base = n * L * S + s;
      double mx = z[base];
      for (std::int64_t c = 1; c < L; ++c) mx = std::max(mx, static_cast<double>(z[base + c * S]));
      double denom = 0.0;
      for (std::int64_t c = 0; c < L; ++c) denom += std::exp(static_cast<double>(z[base + c * S]) - mx);
      for (std::int64_t c = 0; c < L; ++c) {
        prob[base + c * S] = static_cast<float>(std::exp(static_cast<double>(z[base + c * S]) - mx) / denom);
      }
      const auto label = labels[n * S + s];
      if (ignore_label && label == *ignore_label) continue;
      total += std::log(denom) + mx - z[base + label * S];
      ++count;
    }
  }
  const float loss = count > 0 ? static_cast<float>(total / static_cast<double>(count)) : 0.0f;
  Tensor in_ref = logits;
  std::vector<std::int32_t> lab(labels.begin(), labels.end());
  return make_result({1}, {loss}, {&logits},
                     [in_ref, lab = std::move(lab), prob = std::move(prob), ignore_label, N, L, S,
                      count](std::span<const float> gout) mutable {
                       if (count == 0) return;
                       auto gi = in_ref.grad();
                       const double scale = static_cast<double>(gout[0]) / static_cast<double>(count);
                       for (std::int64_t n = 0; n < N; ++n)
                         for (std::int64_t s = 0; s < S; ++s) {
                           const auto label = lab[n * S + s];
                           if (ignore_label && label == *ignore_label) continue;
                           const std::int64_t base = n * L * S + s;
                           for (std::int64_t c = 0; c < L; ++c) {
                             const double target = c == label ? 1.0 : 0.0;
                             gi[base + c * S] += static_cast<float>(scale * (prob[base + c * S] - target));
                           }
                         }
                     });
}

Tensor smooth_l1(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "smooth_l1");
  auto p = pred.data();
  auto t = target.data();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - t[i];
    const double a = std::abs(d);
    total += a < 1.0 ? 0.5 * d * d : a - 0.5;
  }
  Tensor p_ref = pred, t_ref = target;
  return make_result({1}, {static_cast<float>(total)}, {&pred, &target},
                     [p_ref, t_ref](std::span<const float> gout) mutable {
                       auto p = p_ref.data();
                       auto t = t_ref.data();
                       std::vector<float> g(p.size());
                       for (std::size_t i = 0; i < p.size(); ++i) {
                         const float d = p[i] - t[i];
                         const float slope = std::abs(d) < 1.0f ? d : (d > 0.0f ? 1.0f : -1.0f);
                         g[i] = gout[0] * slope;
                       }
                       if (p_ref.requires_grad()) {
                         auto gp = p_ref.grad();
                         for (std::size_t i = 0; i < g.size(); ++i) gp[i] += g[i];
                       }
                       if (t_ref.requires_grad()) {
                         auto gt = t_ref.grad();
                         for (std::size_t i = 0; i < g.size(); ++i) gt[i] -= g[i];
                       }
                     });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || a.rank() != b.rank() || a.dim(0) != b.dim(0)) {
    throw DimensionError("concat_channels: incompatible " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  for (int i = 2; i < a.rank(); ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw DimensionError("concat_channels: spatial mismatch " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
    }
  }
  const std::int64_t N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
  const std::int64_t S = a.numel() / (N * Ca);
  Shape shape = a.shape();
  shape[1] = Ca + Cb;
  std::vector<float> out(static_cast<std::size_t>(N * (Ca + Cb) * S));
  for (std::int64_t n = 0; n < N; ++n) {
    std::copy_n(a.data().data() + n * Ca * S, Ca * S, out.data() + n * (Ca + Cb) * S);
    std::copy_n(b.data().data() + n * Cb * S, Cb * S, out.data() + (n * (Ca + Cb) + Ca) * S);
  }
  Tensor a_ref = a, b_ref = b;
  return make_result(std::move(shape), std::move(out), {&a, &b},
                     [a_ref, b_ref, N, Ca, Cb, S](std::span<const float> gout) mutable {
                       for (std::int64_t n = 0; n < N; ++n) {
                         const float* g = gout.data() + n * (Ca + Cb) * S;
                         if (a_ref.requires_grad()) {
                           float* ga = a_ref.grad().data() + n * Ca * S;
                           for (std::int64_t i = 0; i < Ca * S; ++i) ga[i] += g[i];
                         }
                         if (b_ref.requires_grad()) {
                           float* gb = b_ref.grad().data() + n * Cb * S;
                           for (std::int64_t i = 0; i < Cb * S; ++i) gb[i] += g[Ca * S + i];
                         }
                       }
                     });
}

Tensor slice_channels(const Tensor& input, std::int64_t begin, std::int64_t end) {
  if (input.rank() < 2 || begin < 0 || end > input.dim(1) || begin >= end) {
    throw DimensionError("slice_channels: invalid range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") for " + shape_str(input.shape()));
  }
  const std::int64_t N = input.dim(0), C = input.dim(1), K = end - begin;
  const std::int64_t S = input.numel() / (N * C);
  Shape shape = input.shape();
  shape[1] = K;
  std::vector<float> out(static_cast<std::size_t>(N * K * S));
  for (std::int64_t n = 0; n < N; ++n) {
    std::copy_n(input.data().data() + (n * C + begin) * S, K * S, out.data() + n * K * S);
  }
  Tensor in_ref = input;
  return make_result(std::move(shape), std::move(out), {&input},
                     [in_ref, N, C, K, S, begin](std::span<const float> gout) mutable {
                       auto gi = in_ref.grad();
                       for (std::int64_t n = 0; n < N; ++n)
                         for (std::int64_t i = 0; i < K * S; ++i) gi[(n * C + begin) * S + i] += gout[n * K * S + i];
                     });
}

Tensor sum(const Tensor& input) {
  double total = 0.0;
  for (float v : input.data()) total += v;
  Tensor in_ref = input;
  return make_result({1}, {static_cast<float>(total)}, {&input},
                     [in_ref](std::span<const float> gout) mutable {
                       for (auto& g : in_ref.grad()) g += gout[0];
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  Tensor a_ref = a, b_ref = b;
  return make_result(a.shape(), std::move(out), {&a, &b},
                     [a_ref, b_ref](std::span<const float> gout) mutable {
                       for (Tensor* t : {&a_ref, &b_ref}) {
                         if (!t->requires_grad()) continue;
                         auto g = t->grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i];
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  auto ad = a.data();
  auto bd = b.data();
  std::vector<float> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  Tensor a_ref = a, b_ref = b;
  return make_result(a.shape(), std::move(out), {&a, &b},
                     [a_ref, b_ref](std::span<const float> gout) mutable {
                       auto ad = a_ref.data();
                       auto bd = b_ref.data();
                       if (a_ref.requires_grad()) {
                         auto g = a_ref.grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * bd[i];
                       }
                       if (b_ref.requires_grad()) {
                         auto g = b_ref.grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * ad[i];
                       }
                     });
}

Tensor scale(const Tensor& input, float factor) {
  std::vector<float> out(input.data().begin(), input.data().end());
  for (auto& v : out) v *= factor;
  Tensor in_ref = input;
  return make_result(input.shape(), std::move(out), {&input},
                     [in_ref, factor](std::span<const float> gout) mutable {
                       auto g = in_ref.grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * gout[i];
                     });
}

Tensor gather(const Tensor& input, std::span<const std::int64_t> indices) {
  if (indices.empty()) throw DimensionError("gather: empty index list");
  auto x = input.data();
  std::vector<float> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= static_cast<std::int64_t>(x.size())) {
      throw DimensionError("gather: index " + std::to_string(indices[i]) + " out of range");
    }
    out[i] = x[static_cast<std::size_t>(indices[i])];
  }
  Tensor in_ref = input;
  std::vector<std::int64_t> idx(indices.begin(), indices.end());
  const auto n = static_cast<std::int64_t>(idx.size());
  return make_result({n}, std::move(out), {&input},
                     [in_ref, idx = std::move(idx)](std::span<const float> gout) mutable {
                       auto g = in_ref.grad();
                       for (std::size_t i = 0; i < idx.size(); ++i) g[static_cast<std::size_t>(idx[i])] += gout[i];
                     });
}

Tensor reshape(const Tensor& input, Shape shape) {
  if (shape_numel(shape) != input.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(input.shape()) + " as " + shape_str(shape));
  }
  std::vector<float> out(input.data().begin(), input.data().end());
  Tensor in_ref = input;
  return make_result(std::move(shape), std::move(out), {&input},
                     [in_ref](std::span<const float> gout) mutable {
                       auto g = in_ref.grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i];
                     });
}

std::vector<float> softmax_channels(const Tensor& logits) {
  if (logits.rank() < 2) throw DimensionError("softmax_channels: logits need rank >= 2");
  const std::int64_t N = logits.dim(0), L = logits.dim(1);
  const std::int64_t S = logits.numel() / (N * L);
  const float* z = logits.data().data();
  std::vector<float> prob(static_cast<std::size_t>(logits.numel()));
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t s = 0; s < S; ++s) {
      const std::int64_t base = n * L * S + s;
      double mx = z[base];
      for (std::int64_t c = 1; c < L; ++c) mx = std::max(mx, static_cast<double>(z[base + c * S]));
      double denom = 0.0;
      for (std::int64_t c = 0; c < L; ++c) denom += std::exp(static_cast<double>(z[base + c * S]) - mx);
      for (std::int64_t c = 0; c < L; ++c) {
        prob[base + c * S] = static_cast<float>(std::exp(static_cast<double>(z[base + c * S]) - mx) / denom);
      }
    }
  return prob;
}

}  // namespace sbd::ops
