#include "ilic/qecm.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ilic/codec.h"

namespace ilic {

double sawtooth_series(double y, int harmonics) {
  double s = 0.0;
  for (int n = 1; n <= harmonics; ++n) {
    const double sign = (n % 2) ? 1.0 : -1.0;
    s += sign / n * std::sin(2.0 * std::numbers::pi * n * y);
  }
  return s / std::numbers::pi;
}

double sawtooth_series_derivative(double y, int harmonics) {
  double s = 0.0;
  for (int n = 1; n <= harmonics; ++n) {
    const double sign = (n % 2) ? 1.0 : -1.0;
    s += sign * std::cos(2.0 * std::numbers::pi * n * y);
  }
  return 2.0 * s;
}

double sawtooth_exact(double y) { return y - round_half_away(y); }

Tensor sawtooth_fourier(const Tensor& y, int harmonics) {
  if (harmonics < 1) throw Error("sawtooth: harmonic count must be at least 1");
  auto yd = y.data();
  std::vector<double> out(yd.size());
  for (std::size_t i = 0; i < yd.size(); ++i) out[i] = sawtooth_series(yd[i], harmonics);
  return make_result(y.shape(), std::move(out), {y}, [y, harmonics](std::span<const double> g) {
    auto yd = y.data();
    std::vector<double> gi(yd.size());
    for (std::size_t i = 0; i < yd.size(); ++i) gi[i] = g[i] * sawtooth_series_derivative(yd[i], harmonics);
    accumulate_grad(y, gi);
  });
}

Tensor qc_forward(const Tensor& y, int harmonics) { return sub(y, sawtooth_fourier(y, harmonics)); }

Tensor iqc_train(const Tensor& t, int harmonics) { return add(t, sawtooth_fourier(t, harmonics)); }

namespace {

double laplace_cdf(double x, const LaplaceParams& lp) {
  const double z = (x - lp.mu) / lp.b;
  return z < 0 ? 0.5 * std::exp(z) : 1.0 - 0.5 * std::exp(-z);
}

}  // namespace

void validate(const LaplaceParams& lp) {
  if (!std::isfinite(lp.mu) || !std::isfinite(lp.b) || lp.b < kLaplaceScaleMin) {
    throw Error("invalid Laplace parameters (mu=" + std::to_string(lp.mu) +
                ", b=" + std::to_string(lp.b) + ")");
  }
  if (laplace_cdf(0.5, lp) - laplace_cdf(-0.5, lp) < 1e-6) {
    throw Error("Laplace parameters put almost no mass on (-0.5, 0.5)");
  }
}

double laplace_sample(const LaplaceParams& lp, Rng& rng) {
  const double u = rng.uniform_open() - 0.5;
  const double mag = -lp.b * std::log(1.0 - 2.0 * std::abs(u));
  return u < 0 ? lp.mu - mag : lp.mu + mag;
}

double truncated_laplace_sample(const LaplaceParams& lp, Rng& rng) {
  for (;;) {
    const double x = laplace_sample(lp, rng);
    if (x > -0.5 && x < 0.5) return x;
  }
}

Tensor iqc_test(const Tensor& t, int harmonics, const LaplaceParams& lp, Rng& rng) {
  if (harmonics < 1) throw Error("sawtooth: harmonic count must be at least 1");
  validate(lp);
  if (grad_enabled() && t.requires_grad()) {
    throw Error("test-time compensation is used outside gradient recording only");
  }
  auto td = t.data();
  std::vector<double> out(td.size());
  for (std::size_t i = 0; i < td.size(); ++i) {
    const double dn = truncated_laplace_sample(lp, rng);
    out[i] = td[i] + sawtooth_series(td[i] + dn, harmonics);
  }
  return Tensor::from(t.shape(), std::move(out));
}

LaplaceParams fit_laplace(std::vector<double> samples) {
  if (samples.empty()) throw Error("fit_laplace: no samples");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  LaplaceParams lp;
  lp.mu = n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
  double mad = 0.0;
  for (double v : samples) mad += std::abs(v - lp.mu);
  lp.b = std::max(mad / double(n), kLaplaceScaleMin);
  return lp;
}

QuantErrorStats quant_error_stats(const std::vector<double>& values, int bins) {
  if (values.empty()) throw Error("quant_error_stats: no values");
  if (bins < 1) throw Error("quant_error_stats: bins must be positive");
  QuantErrorStats st;
  st.count = values.size();
  for (int i = 0; i <= bins; ++i) st.bin_edges.push_back(-0.5 + double(i) / bins);
  st.histogram.assign(std::size_t(bins), 0.0);
  std::vector<double> errors;
  errors.reserve(values.size());
  for (double v : values) {
    const double e = sawtooth_exact(v);
    errors.push_back(e);
    const int k = std::clamp(int(std::floor((e + 0.5) * bins)), 0, bins - 1);
    st.histogram[std::size_t(k)] += 1.0;
  }
  for (auto& h : st.histogram) h /= double(values.size());
  st.fit = fit_laplace(std::move(errors));
  return st;
}

}  // namespace ilic
