#ifndef ILIC_TESTS_TEST_UTIL_H_
#define ILIC_TESTS_TEST_UTIL_H_

// Shared test helpers: random tensors, a central finite-difference gradient
// oracle and naive nested-loop convolution references.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ilic/nn.h"
#include "ilic/tensor.h"

namespace ilic::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  std::vector<double> d(numel(shape));
  for (auto& v : d) v = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(d), requires_grad);
}

// sum(out * w) for a fixed pseudo-random w, so every output element
// contributes with a distinct weight.
inline Tensor project(const Tensor& out, std::uint64_t seed = 99) {
  Rng rng(seed);
  return sum(mul(out, random_tensor(out.shape(), rng, -1.0, 1.0)));
}

struct GradCheckResult {
  double max_rel_error = 0.0;  // worst per-input norm-wise relative error
  std::size_t checked = 0;
};

// Compares the reverse-mode gradient of `loss_fn` with central differences
// (step h) on up to `max_coords` coordinates of each input. The relative
// error per input is ||analytic - numeric|| / max(||analytic||, ||numeric||).
inline GradCheckResult grad_check(const std::function<Tensor()>& loss_fn,
                                  std::vector<Tensor> inputs, std::size_t max_coords = 24,
                                  double h = 1e-5, std::uint64_t seed = 7) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  loss_fn().backward();
  Rng rng(seed);
  GradCheckResult result;
  for (auto& t : inputs) {
    const std::size_t n = t.numel();
    std::vector<std::size_t> coords;
    if (n <= max_coords) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (std::size_t i = 0; i < max_coords; ++i) coords.push_back(rng.below(n));
    }
    std::vector<double> analytic = t.has_grad()
                                       ? std::vector<double>(t.grad().begin(), t.grad().end())
                                       : std::vector<double>(n, 0.0);
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (auto i : coords) {
      auto d = t.mutable_data();
      const double orig = d[i];
      double plus, minus;
      {
        NoGradGuard ng;
        d[i] = orig + h;
        plus = loss_fn().item();
        d[i] = orig - h;
        minus = loss_fn().item();
        d[i] = orig;
      }
      const double numeric = (plus - minus) / (2.0 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
      ++result.checked;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    result.max_rel_error = std::max(result.max_rel_error, std::sqrt(diff2) / denom);
  }
  return result;
}

// Naive conv2d over [C,H,W] with [O,C,k,k] kernels.
inline std::vector<double> naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
                                        int stride, int pad) {
  const int C = int(x.dim(0)), H = int(x.dim(1)), W = int(x.dim(2));
  const int O = int(w.dim(0)), k = int(w.dim(2));
  const int OH = (H + 2 * pad - k) / stride + 1, OW = (W + 2 * pad - k) / stride + 1;
  std::vector<double> out(std::size_t(O) * OH * OW, 0.0);
  auto xd = x.data();
  auto wd = w.data();
  for (int o = 0; o < O; ++o)
    for (int oh = 0; oh < OH; ++oh)
      for (int ow = 0; ow < OW; ++ow) {
        double acc = b.defined() ? b.data()[o] : 0.0;
        for (int c = 0; c < C; ++c)
          for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
              const int ih = oh * stride - pad + i, iw = ow * stride - pad + j;
              if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
              acc += xd[(std::size_t(c) * H + ih) * W + iw] *
                     wd[((std::size_t(o) * C + c) * k + i) * k + j];
            }
        out[(std::size_t(o) * OH + oh) * OW + ow] = acc;
      }
  return out;
}

// Naive conv3d over [C,T,H,W] with [O,C,k,k,k] kernels.
inline std::vector<double> naive_conv3d(const Tensor& x, const Tensor& w, const Tensor& b,
                                        int stride, int pad) {
  const int C = int(x.dim(0)), T = int(x.dim(1)), H = int(x.dim(2)), W = int(x.dim(3));
  const int O = int(w.dim(0)), kt = int(w.dim(2)), kh = int(w.dim(3)), kw = int(w.dim(4));
  const int OT = (T + 2 * pad - kt) / stride + 1;
  const int OH = (H + 2 * pad - kh) / stride + 1, OW = (W + 2 * pad - kw) / stride + 1;
  std::vector<double> out(std::size_t(O) * OT * OH * OW, 0.0);
  auto xd = x.data();
  auto wd = w.data();
  for (int o = 0; o < O; ++o)
    for (int ot = 0; ot < OT; ++ot)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          double acc = b.defined() ? b.data()[o] : 0.0;
          for (int c = 0; c < C; ++c)
            for (int a = 0; a < kt; ++a)
              for (int i = 0; i < kh; ++i)
                for (int j = 0; j < kw; ++j) {
                  const int it = ot * stride - pad + a;
                  const int ih = oh * stride - pad + i, iw = ow * stride - pad + j;
                  if (it < 0 || it >= T || ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                  acc += xd[((std::size_t(c) * T + it) * H + ih) * W + iw] *
                         wd[(((std::size_t(o) * C + c) * kt + a) * kh + i) * kw + j];
                }
          out[((std::size_t(o) * OT + ot) * OH + oh) * OW + ow] = acc;
        }
  return out;
}

// Sets every parameter whose name passes `filter` to zero.
inline void zero_params(const ParamStore& ps,
                        const std::function<bool(const std::string&)>& filter = nullptr) {
  for (const auto& [name, t] : ps) {
    if (filter && !filter(name)) continue;
    auto d = const_cast<Tensor&>(t).mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
  }
}

// Draws biases uniformly from [-scale, scale] so toy-sized activations stay
// clear of PReLU kinks during finite differencing.
inline void randomize_biases(const ParamStore& ps, Rng& rng, double scale = 0.5) {
  for (const auto& [name, t] : ps) {
    if (name.size() < 5 || name.compare(name.size() - 5, 5, ".bias") != 0) continue;
    for (auto& v : const_cast<Tensor&>(t).mutable_data()) v = rng.uniform(-scale, scale);
  }
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace ilic::testing

#endif  // ILIC_TESTS_TEST_UTIL_H_
