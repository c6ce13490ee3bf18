// Convolutions lowered to im2col + GEMM. The GEMM is Eigen's, single
// threaded, with cache sizes pinned so the blocking (and therefore the
// summation order) does not depend on the host. Operands are copied to
// 64-byte aligned scratch first: Eigen peels loops by runtime address, and
// heap placement must not change the result.

#include <Eigen/Core>
#include <Eigen/StdVector>

#include <algorithm>
#include <array>
#include <vector>

#include "ilic/tensor.h"

namespace ilic {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

using AlignedVec = std::vector<double, Eigen::aligned_allocator<double>>;

// C[m x n] (+)= op(A) * op(B), all row-major; A is [m x k] or, transposed,
// [k x m]; B is [k x n] or [n x k].
void gemm(double* c, const double* a, bool ta, const double* b, bool tb, std::size_t m,
          std::size_t n, std::size_t k, bool accumulate) {
  thread_local AlignedVec sa, sb, sc;
  sa.assign(a, a + m * k);
  sb.assign(b, b + k * n);
  sc.resize(m * n);
  const auto M = Eigen::Index(m), N = Eigen::Index(n), K = Eigen::Index(k);
  MapMat out(sc.data(), M, N);
  if (!ta && !tb) out.noalias() = ConstMapMat(sa.data(), M, K) * ConstMapMat(sb.data(), K, N);
  if (ta && !tb) out.noalias() = ConstMapMat(sa.data(), K, M).transpose() * ConstMapMat(sb.data(), K, N);
  if (!ta && tb) out.noalias() = ConstMapMat(sa.data(), M, K) * ConstMapMat(sb.data(), N, K).transpose();
  if (ta && tb) {
    out.noalias() = ConstMapMat(sa.data(), K, M).transpose() * ConstMapMat(sb.data(), N, K).transpose();
  }
  if (accumulate) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] += sc[i];
  } else {
    std::copy(sc.begin(), sc.end(), c);
  }
}

void pin_gemm_blocking() {
  static const bool pinned = [] {
    Eigen::setCpuCacheSizes(32 * 1024, 1024 * 1024, 8 * 1024 * 1024);
    return true;
  }();
  (void)pinned;
}

// Geometry of an N-d (N = 2 or 3) convolution over one batch item.
struct Geometry {
  int dims = 2;
  std::array<int, 3> in{1, 1, 1};   // spatial input extents (t, h, w)
  std::array<int, 3> k{1, 1, 1};    // kernel extents
  std::array<int, 3> out{1, 1, 1};  // spatial output extents
  int stride = 1;
  int pad = 0;
  int channels = 1;

  std::size_t in_plane() const { return std::size_t(in[0]) * in[1] * in[2]; }
  std::size_t out_plane() const { return std::size_t(out[0]) * out[1] * out[2]; }
  std::size_t patch() const { return std::size_t(channels) * k[0] * k[1] * k[2]; }
};

// Valid output columns [lo, hi) for kernel offset `kw` along one row.
inline void valid_range(int out, int in, int stride, int pad, int kw, int& lo, int& hi) {
  lo = 0;
  while (lo < out && lo * stride - pad + kw < 0) ++lo;
  hi = out;
  while (hi > lo && (hi - 1) * stride - pad + kw >= in) --hi;
}

// cols[(c, kt, kh, kw), (ot, oh, ow)]
void im2col(const double* src, const Geometry& g, double* cols) {
  const int pt = g.dims == 3 ? g.pad : 0;
  const int st = g.dims == 3 ? g.stride : 1;
  const std::size_t op = g.out_plane();
  const int OW = g.out[2];
  std::size_t row = 0;
  for (int c = 0; c < g.channels; ++c) {
    const double* plane = src + std::size_t(c) * g.in_plane();
    for (int kt = 0; kt < g.k[0]; ++kt) {
      for (int kh = 0; kh < g.k[1]; ++kh) {
        for (int kw = 0; kw < g.k[2]; ++kw, ++row) {
          double* dst = cols + row * op;
          int lo, hi;
          valid_range(OW, g.in[2], g.stride, g.pad, kw, lo, hi);
          for (int ot = 0; ot < g.out[0]; ++ot) {
            const int it = ot * st - pt + kt;
            const bool t_ok = it >= 0 && it < g.in[0];
            for (int oh = 0; oh < g.out[1]; ++oh, dst += OW) {
              const int ih = oh * g.stride - g.pad + kh;
              if (!t_ok || ih < 0 || ih >= g.in[1]) {
                std::fill(dst, dst + OW, 0.0);
                continue;
              }
              const double* src_row = plane + (std::size_t(it) * g.in[1] + ih) * g.in[2];
              std::fill(dst, dst + lo, 0.0);
              if (g.stride == 1) {
                std::copy(src_row + lo - g.pad + kw, src_row + hi - g.pad + kw, dst + lo);
              } else {
                for (int ow = lo; ow < hi; ++ow) dst[ow] = src_row[ow * g.stride - g.pad + kw];
              }
              std::fill(dst + hi, dst + OW, 0.0);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into the image.
void col2im(const double* cols, const Geometry& g, double* dst_img) {
  const int pt = g.dims == 3 ? g.pad : 0;
  const int st = g.dims == 3 ? g.stride : 1;
  const std::size_t op = g.out_plane();
  const int OW = g.out[2];
  std::size_t row = 0;
  for (int c = 0; c < g.channels; ++c) {
    double* plane = dst_img + std::size_t(c) * g.in_plane();
    for (int kt = 0; kt < g.k[0]; ++kt) {
      for (int kh = 0; kh < g.k[1]; ++kh) {
        for (int kw = 0; kw < g.k[2]; ++kw, ++row) {
          const double* src = cols + row * op;
          int lo, hi;
          valid_range(OW, g.in[2], g.stride, g.pad, kw, lo, hi);
          for (int ot = 0; ot < g.out[0]; ++ot) {
            const int it = ot * st - pt + kt;
            const bool t_ok = it >= 0 && it < g.in[0];
            for (int oh = 0; oh < g.out[1]; ++oh, src += OW) {
              const int ih = oh * g.stride - g.pad + kh;
              if (!t_ok || ih < 0 || ih >= g.in[1]) continue;
              double* dst_row = plane + (std::size_t(it) * g.in[1] + ih) * g.in[2];
              if (g.stride == 1) {
                double* d = dst_row - g.pad + kw;
                for (int ow = lo; ow < hi; ++ow) d[ow] += src[ow];
              } else {
                for (int ow = lo; ow < hi; ++ow) dst_row[ow * g.stride - g.pad + kw] += src[ow];
              }
            }
          }
        }
      }
    }
  }
}

int conv_extent(int in, int k, int stride, int pad) {
  if (in + 2 * pad < k) return 0;
  return (in + 2 * pad - k) / stride + 1;
}

// Forward convolution for `dims` spatial dimensions.
Tensor conv_nd(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
               int pad, int dims) {
  pin_gemm_blocking();
  const char* name = dims == 2 ? "conv2d" : "conv3d";
  if (stride <= 0) throw Error(std::string(name) + ": stride must be positive");
  if (pad < 0) throw Error(std::string(name) + ": padding must be non-negative");
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  const std::size_t unbatched_rank = std::size_t(dims) + 1;
  if (is.size() != unbatched_rank && is.size() != unbatched_rank + 1) {
    throw Error(std::string(name) + ": input rank must be " + std::to_string(unbatched_rank) +
                " or " + std::to_string(unbatched_rank + 1) + ", got " + shape_str(is));
  }
  if (ks.size() != std::size_t(dims) + 2) {
    throw Error(std::string(name) + ": bad kernel shape " + shape_str(ks));
  }
  const bool batched = is.size() == unbatched_rank + 1;
  const std::size_t batch = batched ? is[0] : 1;
  const std::size_t off = batched ? 1 : 0;
  Geometry g;
  g.dims = dims;
  g.channels = int(is[off]);
  g.stride = stride;
  g.pad = pad;
  if (ks[1] != is[off]) {
    throw Error(std::string(name) + ": kernel expects " + std::to_string(ks[1]) +
                " input channels, input has " + std::to_string(is[off]));
  }
  for (int d = 0; d < dims; ++d) {
    const int slot = 3 - dims + d;
    g.in[slot] = int(is[off + 1 + d]);
    g.k[slot] = int(ks[2 + d]);
    g.out[slot] = conv_extent(g.in[slot], g.k[slot], stride, pad);
    if (g.out[slot] <= 0) {
      throw Error(std::string(name) + ": kernel " + shape_str(ks) + " does not fit input " +
                  shape_str(is) + " with padding " + std::to_string(pad));
    }
  }
  const std::size_t cout = ks[0];
  if (bias.defined() && bias.numel() != cout) {
    throw Error(std::string(name) + ": bias length must equal output channels");
  }
  Shape out_shape;
  if (batched) out_shape.push_back(batch);
  out_shape.push_back(cout);
  for (int d = 0; d < dims; ++d) out_shape.push_back(std::size_t(g.out[3 - dims + d]));

  const std::size_t patch = g.patch(), op = g.out_plane();
  const std::size_t in_item = std::size_t(g.channels) * g.in_plane();
  std::vector<double> out(batch * cout * op);
  std::vector<double> cols(patch * op);
  for (std::size_t n = 0; n < batch; ++n) {
    im2col(input.data().data() + n * in_item, g, cols.data());
    double* o = out.data() + n * cout * op;
    gemm(o, kernel.data().data(), false, cols.data(), false, cout, op, patch, false);
    if (bias.defined()) {
      auto b = bias.data();
      for (std::size_t oc = 0; oc < cout; ++oc)
        for (std::size_t i = 0; i < op; ++i) o[oc * op + i] += b[oc];
    }
  }

  return make_result(
      out_shape, std::move(out), {input, kernel, bias},
      [input, kernel, bias, g, batch, cout, patch, op, in_item](std::span<const double> grad) {
        std::vector<double> cols(patch * op);
        double* gk = kernel.requires_grad() ? kernel.node()->ensure_grad().data() : nullptr;
        double* gb = bias.requires_grad() ? bias.node()->ensure_grad().data() : nullptr;
        double* gi = input.requires_grad() ? input.node()->ensure_grad().data() : nullptr;
        for (std::size_t n = 0; n < batch; ++n) {
          const double* go = grad.data() + n * cout * op;
          if (gb) {
            for (std::size_t oc = 0; oc < cout; ++oc) {
              double acc = 0.0;
              for (std::size_t i = 0; i < op; ++i) acc += go[oc * op + i];
              gb[oc] += acc;
            }
          }
          if (gk) {
            im2col(input.data().data() + n * in_item, g, cols.data());
            gemm(gk, go, false, cols.data(), true, cout, patch, op, true);
          }
          if (gi) {
            gemm(cols.data(), kernel.data().data(), true, go, false, patch, op, cout, false);
            col2im(cols.data(), g, gi + n * in_item);
          }
        }
      });
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int pad) {
  return conv_nd(input, kernel, bias, stride, pad, 2);
}

Tensor conv3d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int pad) {
  return conv_nd(input, kernel, bias, stride, pad, 3);
}

Tensor transposed_conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                         int stride, int pad, int output_padding_h, int output_padding_w) {
  pin_gemm_blocking();
  if (stride <= 0) throw Error("transposed_conv2d: stride must be positive");
  if (pad < 0) throw Error("transposed_conv2d: padding must be non-negative");
  if (output_padding_h < 0 || output_padding_w < 0 || output_padding_h >= stride ||
      output_padding_w >= stride) {
    throw Error("transposed_conv2d: output padding must lie in [0, stride)");
  }
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  if (is.size() != 3 && is.size() != 4) {
    throw Error("transposed_conv2d: input rank must be 3 or 4, got " + shape_str(is));
  }
  if (ks.size() != 4) throw Error("transposed_conv2d: bad kernel shape " + shape_str(ks));
  const bool batched = is.size() == 4;
  const std::size_t batch = batched ? is[0] : 1;
  const std::size_t off = batched ? 1 : 0;
  if (ks[0] != is[off]) {
    throw Error("transposed_conv2d: kernel expects " + std::to_string(ks[0]) +
                " input channels, input has " + std::to_string(is[off]));
  }
  const std::size_t cin = ks[0], cout = ks[1];
  const int h = int(is[off + 1]), w = int(is[off + 2]);
  const int kh = int(ks[2]), kw = int(ks[3]);
  const int oh = (h - 1) * stride - 2 * pad + kh + output_padding_h;
  const int ow = (w - 1) * stride - 2 * pad + kw + output_padding_w;
  if (oh <= 0 || ow <= 0) {
    throw Error("transposed_conv2d: geometry yields non-positive output extent");
  }
  // The adjoint conv maps the [cout, oh, ow] output back onto [cin, h, w].
  Geometry g;
  g.dims = 2;
  g.channels = int(cout);
  g.in = {1, oh, ow};
  g.k = {1, kh, kw};
  g.out = {1, h, w};
  g.stride = stride;
  g.pad = pad;
  if (conv_extent(oh, kh, stride, pad) != h || conv_extent(ow, kw, stride, pad) != w) {
    throw Error("transposed_conv2d: inconsistent geometry");
  }
  if (bias.defined() && bias.numel() != cout) {
    throw Error("transposed_conv2d: bias length must equal output channels");
  }
  const std::size_t patch = g.patch(), ip = std::size_t(h) * w;
  const std::size_t out_item = cout * std::size_t(oh) * ow;
  Shape out_shape;
  if (batched) out_shape.push_back(batch);
  out_shape.insert(out_shape.end(), {cout, std::size_t(oh), std::size_t(ow)});
  std::vector<double> out(batch * out_item, 0.0);
  std::vector<double> cols(patch * ip);
  // kernel [cin, cout*kh*kw] viewed as a row-major matrix.
  for (std::size_t n = 0; n < batch; ++n) {
    gemm(cols.data(), kernel.data().data(), true, input.data().data() + n * cin * ip, false, patch,
         ip, cin, false);
    double* o = out.data() + n * out_item;
    col2im(cols.data(), g, o);
    if (bias.defined()) {
      auto b = bias.data();
      const std::size_t plane = std::size_t(oh) * ow;
      for (std::size_t oc = 0; oc < cout; ++oc) {
        for (std::size_t i = 0; i < plane; ++i) o[oc * plane + i] += b[oc];
      }
    }
  }
  return make_result(
      out_shape, std::move(out), {input, kernel, bias},
      [input, kernel, bias, g, batch, cin, cout, patch, ip, out_item](std::span<const double> grad) {
        std::vector<double> cols(patch * ip);
        double* gk = kernel.requires_grad() ? kernel.node()->ensure_grad().data() : nullptr;
        double* gb = bias.requires_grad() ? bias.node()->ensure_grad().data() : nullptr;
        double* gi = input.requires_grad() ? input.node()->ensure_grad().data() : nullptr;
        const std::size_t plane = out_item / cout;
        for (std::size_t n = 0; n < batch; ++n) {
          const double* go = grad.data() + n * out_item;
          if (gb) {
            for (std::size_t oc = 0; oc < cout; ++oc) {
              double acc = 0.0;
              for (std::size_t i = 0; i < plane; ++i) acc += go[oc * plane + i];
              gb[oc] += acc;
            }
          }
          if (!gk && !gi) continue;
          im2col(go, g, cols.data());
          if (gi) {
            gemm(gi + n * cin * ip, kernel.data().data(), false, cols.data(), false, cin, ip, patch,
                 true);
          }
          if (gk) {
            gemm(gk, input.data().data() + n * cin * ip, false, cols.data(), true, cin, patch, ip,
                 true);
          }
        }
      });
}

}  // namespace ilic
