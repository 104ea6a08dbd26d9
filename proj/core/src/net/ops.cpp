#include "recseg/net/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "recseg/errors.hpp"
#include "recseg/random.hpp"

namespace recseg::net::ops {
namespace {

// Upper bound on im2col buffer elements per chunk.
constexpr std::size_t kChunkElements = std::size_t{1} << 22;

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda,
              b, ldb, beta, c, ldc);
}

void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda,
              b, ldb, beta, c, ldc);
}

int rows_of(const ConvShape& c) { return c.in_channels * c.kernel * c.kernel * c.kernel; }

std::int64_t planes_per_chunk(const ConvShape& c, const Shape3& out) {
  const std::size_t per_plane = static_cast<std::size_t>(rows_of(c)) * static_cast<std::size_t>(out.y * out.x);
  return std::clamp<std::int64_t>(static_cast<std::int64_t>(kChunkElements / std::max<std::size_t>(per_plane, 1)), 1,
                                  out.z);
}

// Fills col[rows][(z - z0) * oy * ox + y * ox + x] for output planes [z0, z1).
template <typename T>
void im2col(const Tensor<T>& in, const ConvShape& c, const Shape3& out, std::int64_t z0, std::int64_t z1, T* col) {
  const Shape3 s = in.shape;
  const int k = c.kernel, st = c.stride, p = c.pad();
  const std::int64_t cols = (z1 - z0) * out.y * out.x;
  std::int64_t row = 0;
  for (int ic = 0; ic < c.in_channels; ++ic) {
    const T* src = in.channel(ic);
    for (int kz = 0; kz < k; ++kz) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx, ++row) {
          T* dst = col + row * cols;
          // Valid output x range where the input column is inside the volume.
          const std::int64_t x_lo = std::clamp<std::int64_t>((p - kx + st - 1) / st, 0, out.x);
          const std::int64_t x_hi = std::clamp<std::int64_t>((s.x - 1 + p - kx) / st + 1, 0, out.x);
          for (std::int64_t z = z0; z < z1; ++z) {
            const std::int64_t iz = z * st + kz - p;
            for (std::int64_t y = 0; y < out.y; ++y, dst += out.x) {
              const std::int64_t iy = y * st + ky - p;
              if (iz < 0 || iz >= s.z || iy < 0 || iy >= s.y || x_lo >= x_hi) {
                std::fill_n(dst, out.x, T{});
                continue;
              }
              const T* line = src + (iz * s.y + iy) * s.x;
              std::fill_n(dst, x_lo, T{});
              if (st == 1) {
                std::memcpy(dst + x_lo, line + x_lo + kx - p, static_cast<std::size_t>(x_hi - x_lo) * sizeof(T));
              } else {
                for (std::int64_t x = x_lo; x < x_hi; ++x) dst[x] = line[x * st + kx - p];
              }
              std::fill(dst + x_hi, dst + out.x, T{});
            }
          }
        }
      }
    }
  }
}

// Scatter-adds col back into din (the adjoint of im2col).
template <typename T>
void col2im(const T* col, const ConvShape& c, const Shape3& out, std::int64_t z0, std::int64_t z1, Tensor<T>& din) {
  const Shape3 s = din.shape;
  const int k = c.kernel, st = c.stride, p = c.pad();
  const std::int64_t cols = (z1 - z0) * out.y * out.x;
  std::int64_t row = 0;
  for (int ic = 0; ic < c.in_channels; ++ic) {
    T* dst_ch = din.channel(ic);
    for (int kz = 0; kz < k; ++kz) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx, ++row) {
          const T* src = col + row * cols;
          const std::int64_t x_lo = std::clamp<std::int64_t>((p - kx + st - 1) / st, 0, out.x);
          const std::int64_t x_hi = std::clamp<std::int64_t>((s.x - 1 + p - kx) / st + 1, 0, out.x);
          for (std::int64_t z = z0; z < z1; ++z) {
            const std::int64_t iz = z * st + kz - p;
            for (std::int64_t y = 0; y < out.y; ++y, src += out.x) {
              const std::int64_t iy = y * st + ky - p;
              if (iz < 0 || iz >= s.z || iy < 0 || iy >= s.y) continue;
              T* line = dst_ch + (iz * s.y + iy) * s.x;
              for (std::int64_t x = x_lo; x < x_hi; ++x) line[x * st + kx - p] += src[x];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Shape3 conv_output_shape(const Shape3& in, const ConvShape& c) {
  auto dim = [&](std::int64_t n) { return (n + 2 * c.pad() - c.kernel) / c.stride + 1; };
  return Shape3{dim(in.z), dim(in.y), dim(in.x)};
}

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& in, const T* weight, const T* bias, const ConvShape& c) {
  if (in.channels != c.in_channels) throw ArgumentError("conv: input channel mismatch");
  const Shape3 out_shape = conv_output_shape(in.shape, c);
  Tensor<T> out(c.out_channels, out_shape);
  const int rows = rows_of(c);
  const auto vout = static_cast<int>(out_shape.voxels());

  if (c.kernel == 1 && c.stride == 1) {
    gemm(false, false, c.out_channels, vout, rows, T(1), weight, rows, in.data.data(), vout, T(0), out.data.data(), vout);
  } else {
    const std::int64_t chunk = planes_per_chunk(c, out_shape);
    const std::int64_t plane = out_shape.y * out_shape.x;
    std::vector<T> col(static_cast<std::size_t>(rows) * static_cast<std::size_t>(chunk * plane));
    for (std::int64_t z0 = 0; z0 < out_shape.z; z0 += chunk) {
      const std::int64_t z1 = std::min(out_shape.z, z0 + chunk);
      const auto n = static_cast<int>((z1 - z0) * plane);
      im2col(in, c, out_shape, z0, z1, col.data());
      gemm(false, false, c.out_channels, n, rows, T(1), weight, rows, col.data(), n, T(0),
           out.data.data() + z0 * plane, vout);
    }
  }
  for (int oc = 0; oc < c.out_channels; ++oc) {
    T* o = out.channel(oc);
    const T b = bias[oc];
    for (std::int64_t v = 0; v < vout; ++v) o[v] += b;
  }
  return out;
}

template <typename T>
Tensor<T> conv_backward(const Tensor<T>& in, const T* weight, const Tensor<T>& dout, const ConvShape& c, T* dweight,
                        T* dbias, bool need_input_grad) {
  const Shape3 out_shape = dout.shape;
  const int rows = rows_of(c);
  const auto vout = static_cast<int>(out_shape.voxels());

  for (int oc = 0; oc < c.out_channels; ++oc) {
    const T* g = dout.channel(oc);
    T acc{};
    for (std::int64_t v = 0; v < vout; ++v) acc += g[v];
    dbias[oc] += acc;
  }

  Tensor<T> din;
  if (need_input_grad) din = Tensor<T>(c.in_channels, in.shape);

  if (c.kernel == 1 && c.stride == 1) {
    gemm(false, true, c.out_channels, rows, vout, T(1), dout.data.data(), vout, in.data.data(), vout, T(1), dweight,
         rows);
    if (need_input_grad) {
      gemm(true, false, rows, vout, c.out_channels, T(1), weight, rows, dout.data.data(), vout, T(0), din.data.data(),
           vout);
    }
    return din;
  }

  const std::int64_t chunk = planes_per_chunk(c, out_shape);
  const std::int64_t plane = out_shape.y * out_shape.x;
  std::vector<T> col(static_cast<std::size_t>(rows) * static_cast<std::size_t>(chunk * plane));
  for (std::int64_t z0 = 0; z0 < out_shape.z; z0 += chunk) {
    const std::int64_t z1 = std::min(out_shape.z, z0 + chunk);
    const auto n = static_cast<int>((z1 - z0) * plane);
    const T* g = dout.data.data() + z0 * plane;
    im2col(in, c, out_shape, z0, z1, col.data());
    gemm(false, true, c.out_channels, rows, n, T(1), g, vout, col.data(), n, T(1), dweight, rows);
    if (need_input_grad) {
      gemm(true, false, rows, n, c.out_channels, T(1), weight, rows, g, vout, T(0), col.data(), n);
      col2im(col.data(), c, out_shape, z0, z1, din);
    }
  }
  return din;
}

template <typename T>
void leaky_relu(Tensor<T>& t, T slope) {
  for (auto& v : t.data) v = v > T(0) ? v : v * slope;
}

template <typename T>
void leaky_relu_backward(Tensor<T>& g, const Tensor<T>& y, T slope) {
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    if (!(y.data[i] > T(0))) g.data[i] *= slope;
  }
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& in, double rate, std::uint64_t seed) {
  Tensor<T> out = in;
  if (rate <= 0.0) return out;
  const T scale = T(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    out.data[i] = hash_uniform(seed, i) < rate ? T(0) : out.data[i] * scale;
  }
  return out;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& g, double rate, std::uint64_t seed) {
  return dropout(g, rate, seed);
}

template <typename T>
Tensor<T> upsample2(const Tensor<T>& in) {
  const Shape3 s = in.shape;
  const Shape3 o{2 * s.z, 2 * s.y, 2 * s.x};
  Tensor<T> out(in.channels, o);
  for (std::int64_t c = 0; c < in.channels; ++c) {
    const T* src = in.channel(c);
    T* dst = out.channel(c);
    for (std::int64_t z = 0; z < o.z; ++z) {
      for (std::int64_t y = 0; y < o.y; ++y) {
        const T* line = src + ((z / 2) * s.y + y / 2) * s.x;
        T* d = dst + (z * o.y + y) * o.x;
        for (std::int64_t x = 0; x < o.x; ++x) d[x] = line[x / 2];
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& g, const Shape3& s) {
  Tensor<T> out(g.channels, s);
  const Shape3 o = g.shape;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    const T* src = g.channel(c);
    T* dst = out.channel(c);
    for (std::int64_t z = 0; z < o.z; ++z) {
      for (std::int64_t y = 0; y < o.y; ++y) {
        const T* line = src + (z * o.y + y) * o.x;
        T* d = dst + ((z / 2) * s.y + y / 2) * s.x;
        for (std::int64_t x = 0; x < o.x; ++x) d[x / 2] += line[x];
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape == b.shape)) throw ArgumentError("concat: spatial shapes differ");
  Tensor<T> out(a.channels + b.channels, a.shape);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

template <typename T>
void split(const Tensor<T>& g, std::int64_t first_channels, Tensor<T>& ga, Tensor<T>& gb) {
  const std::size_t cut = static_cast<std::size_t>(first_channels) * g.plane();
  ga = Tensor<T>(first_channels, g.shape);
  gb = Tensor<T>(g.channels - first_channels, g.shape);
  std::copy(g.data.begin(), g.data.begin() + static_cast<std::ptrdiff_t>(cut), ga.data.begin());
  std::copy(g.data.begin() + static_cast<std::ptrdiff_t>(cut), g.data.end(), gb.data.begin());
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  Tensor<T> out(logits.channels, logits.shape);
  const std::size_t n = logits.plane();
  const auto C = logits.channels;
  for (std::size_t v = 0; v < n; ++v) {
    T mx = logits.at(0, v);
    for (std::int64_t c = 1; c < C; ++c) mx = std::max(mx, logits.at(c, v));
    T sum{};
    for (std::int64_t c = 0; c < C; ++c) {
      const T e = std::exp(logits.at(c, v) - mx);
      out.at(c, v) = e;
      sum += e;
    }
    for (std::int64_t c = 0; c < C; ++c) out.at(c, v) /= sum;
  }
  return out;
}

#define RECSEG_INSTANTIATE_OPS(T)                                                                                \
  template Tensor<T> conv_forward(const Tensor<T>&, const T*, const T*, const ConvShape&);                       \
  template Tensor<T> conv_backward(const Tensor<T>&, const T*, const Tensor<T>&, const ConvShape&, T*, T*, bool); \
  template void leaky_relu(Tensor<T>&, T);                                                                       \
  template void leaky_relu_backward(Tensor<T>&, const Tensor<T>&, T);                                            \
  template Tensor<T> dropout(const Tensor<T>&, double, std::uint64_t);                                           \
  template Tensor<T> dropout_backward(const Tensor<T>&, double, std::uint64_t);                                  \
  template Tensor<T> upsample2(const Tensor<T>&);                                                                \
  template Tensor<T> upsample2_backward(const Tensor<T>&, const Shape3&);                                        \
  template Tensor<T> concat(const Tensor<T>&, const Tensor<T>&);                                                 \
  template void split(const Tensor<T>&, std::int64_t, Tensor<T>&, Tensor<T>&);                                   \
  template void add_inplace(Tensor<T>&, const Tensor<T>&);                                                       \
  template Tensor<T> softmax(const Tensor<T>&);

RECSEG_INSTANTIATE_OPS(float)
RECSEG_INSTANTIATE_OPS(double)

}  // namespace recseg::net::ops
