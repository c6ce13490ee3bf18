#include "ilic/codec.h"

#include <cmath>
#include <numbers>

namespace ilic {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_finite(const Tensor& t, const char* what) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw Error(std::string(what) + ": non-finite distribution parameter");
  }
}

}  // namespace

ResBlock2d::ResBlock2d(ParamStore& ps, const std::string& name, std::size_t channels, Rng& rng) {
  c1 = Conv2d(ps, name + ".conv1", channels, channels, 3, 1, 1, rng);
  act = PRelu(ps, name + ".act", channels, 0);
  c2 = Conv2d(ps, name + ".conv2", channels, channels, 3, 1, 1, rng);
}

Tensor ResBlock2d::operator()(const Tensor& x) const { return add(x, c2(act(c1(x)))); }

Crm::Crm(ParamStore& ps, const std::string& name, std::size_t channels, Rng& rng)
    : r1(ps, name + ".rb0", channels, rng), r2(ps, name + ".rb1", channels, rng) {}

Tensor Crm::operator()(const Tensor& x) const { return add(r2(r1(x)), x); }

AnalysisTransform::AnalysisTransform(ParamStore& ps, const std::string& name,
                                     std::size_t in_channels, std::size_t channels,
                                     std::size_t latent, int crm_per_stage, Rng& rng) {
  const std::size_t chans[4] = {in_channels, channels, channels, latent};
  for (int s = 0; s < 3; ++s) {
    const std::string stage = name + ".stage" + std::to_string(s);
    convs.emplace_back(ps, stage + ".conv", chans[s], chans[s + 1], 5, 2, 2, rng);
    acts.emplace_back(ps, stage + ".act", chans[s + 1], 0);
    crms.emplace_back();
    for (int i = 0; i < crm_per_stage; ++i) {
      crms.back().emplace_back(ps, stage + ".crm" + std::to_string(i), chans[s + 1], rng);
    }
  }
}

Tensor AnalysisTransform::operator()(const Tensor& f) const {
  if (f.rank() != 3) throw Error("g_a: expected [C,H,W], got " + shape_str(f.shape()));
  if (f.dim(1) % 8 || f.dim(2) % 8) {
    throw Error("g_a: feature extents " + shape_str(f.shape()) + " not divisible by 8");
  }
  Tensor h = f;
  for (std::size_t s = 0; s < convs.size(); ++s) {
    h = acts[s](convs[s](h));
    for (const auto& c : crms[s]) h = c(h);
  }
  return h;
}

SynthesisTransform::SynthesisTransform(ParamStore& ps, const std::string& name,
                                       std::size_t latent, std::size_t channels,
                                       std::size_t out_channels, int crm_per_stage, Rng& rng) {
  const std::size_t chans[4] = {latent, channels, channels, out_channels};
  for (int s = 0; s < 3; ++s) {
    const std::string stage = name + ".stage" + std::to_string(s);
    convs.emplace_back(ps, stage + ".tconv", chans[s], chans[s + 1], 5, 2, 2, rng);
    if (s < 2) {
      acts.emplace_back(ps, stage + ".act", chans[s + 1], 0);
      crms.emplace_back();
      for (int i = 0; i < crm_per_stage; ++i) {
        crms.back().emplace_back(ps, stage + ".crm" + std::to_string(i), chans[s + 1], rng);
      }
    }
  }
}

Tensor SynthesisTransform::operator()(const Tensor& y, std::size_t height,
                                      std::size_t width) const {
  if (y.rank() != 3) throw Error("g_s: expected [M,h,w], got " + shape_str(y.shape()));
  // extents after 2, 1 and 0 remaining upsamplings
  const std::size_t hs[3] = {halve(halve(height)), halve(height), height};
  const std::size_t ws[3] = {halve(halve(width)), halve(width), width};
  if (halve(hs[0]) != y.dim(1) || halve(ws[0]) != y.dim(2)) {
    throw Error("g_s: latent " + shape_str(y.shape()) + " does not match target " +
                std::to_string(height) + "x" + std::to_string(width));
  }
  Tensor h = y;
  for (std::size_t s = 0; s < convs.size(); ++s) {
    const auto& c = convs[s];
    h = c(h, c.output_padding_for(h.dim(1), hs[s]), c.output_padding_for(h.dim(2), ws[s]));
    if (s < acts.size()) {
      h = acts[s](h);
      for (const auto& crm : crms[s]) h = crm(h);
    }
  }
  return h;
}

HyperAnalysis::HyperAnalysis(ParamStore& ps, const std::string& name, std::size_t latent,
                             std::size_t hyper, Rng& rng) {
  c1 = Conv2d(ps, name + ".conv1", latent, hyper, 5, 2, 2, rng);
  act = PRelu(ps, name + ".act", hyper, 0);
  c2 = Conv2d(ps, name + ".conv2", hyper, hyper, 5, 2, 2, rng);
}

Tensor HyperAnalysis::operator()(const Tensor& y) const { return c2(act(c1(y))); }

HyperSynthesis::HyperSynthesis(ParamStore& ps, const std::string& name, std::size_t hyper,
                               std::size_t latent_, Rng& rng)
    : latent(latent_) {
  t1 = ConvTranspose2d(ps, name + ".tconv1", hyper, hyper, 5, 2, 2, rng);
  act = PRelu(ps, name + ".act", hyper, 0);
  t2 = ConvTranspose2d(ps, name + ".tconv2", hyper, 2 * latent, 5, 2, 2, rng);
}

GaussianParams HyperSynthesis::operator()(const Tensor& z, std::size_t height,
                                          std::size_t width) const {
  if (z.rank() != 3 || z.dim(1) != halve(halve(height)) || z.dim(2) != halve(halve(width))) {
    throw Error("h_s: hyper latent " + shape_str(z.shape()) + " does not match latent " +
                std::to_string(height) + "x" + std::to_string(width));
  }
  Tensor h = t1(z, t1.output_padding_for(z.dim(1), halve(height)),
                t1.output_padding_for(z.dim(2), halve(width)));
  h = act(h);
  h = t2(h, t2.output_padding_for(h.dim(1), height), t2.output_padding_for(h.dim(2), width));
  GaussianParams p;
  p.mu = slice(h, 0, 0, latent);
  Tensor raw = slice(h, 0, latent, latent);
  p.sigma = clamp(exp(clamp(raw, -30.0, 30.0)), kSigmaMin, 1e300);
  return p;
}

Tensor quantize_noise(const Tensor& t, Rng& rng) {
  std::vector<double> noise(t.numel());
  for (auto& v : noise) v = rng.uniform_open() - 0.5;
  return add(t, Tensor::from(t.shape(), std::move(noise)));
}

Tensor quantize_round(const Tensor& t) {
  if (grad_enabled() && t.requires_grad()) {
    throw Error("rounding quantization is not differentiable; use it outside gradient recording");
  }
  std::vector<double> out(t.data().begin(), t.data().end());
  for (auto& v : out) v = round_half_away(v);
  return Tensor::from(t.shape(), std::move(out));
}

double gaussian_prob(double v, double mu, double sigma) {
  const double d = std::abs(v - mu);
  const double u = (0.5 - d) / sigma, l = (-0.5 - d) / sigma;
  return 0.5 * (std::erfc(-u * kInvSqrt2) - std::erfc(-l * kInvSqrt2));
}

double logistic_prob(double v, double loc, double scale) {
  const double d = std::abs(v - loc);
  return logistic((0.5 - d) / scale) - logistic((-0.5 - d) / scale);
}

double bits_of(double p) { return -std::log2(std::max(p, kProbFloor)); }

Tensor gaussian_bits(const Tensor& v, const Tensor& mu, const Tensor& sigma) {
  if (v.shape() != mu.shape() || v.shape() != sigma.shape()) {
    throw Error("gaussian_bits: shape mismatch " + shape_str(v.shape()) + ", " +
                shape_str(mu.shape()) + ", " + shape_str(sigma.shape()));
  }
  check_finite(mu, "gaussian_bits");
  check_finite(sigma, "gaussian_bits");
  const std::size_t n = v.numel();
  auto vd = v.data(), md = mu.data(), sd = sigma.data();
  double total = 0.0;
  // d(bits)/d(v - mu) and d(bits)/d(sigma) per element
  std::vector<double> dd(n), ds(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (sd[i] <= 0.0) throw Error("gaussian_bits: scale must be positive");
    const double diff = vd[i] - md[i];
    const double d = std::abs(diff), s = sd[i];
    const double u = (0.5 - d) / s, l = (-0.5 - d) / s;
    const double p = 0.5 * (std::erfc(-u * kInvSqrt2) - std::erfc(-l * kInvSqrt2));
    total += bits_of(p);
    if (p > kProbFloor) {
      const double dbits_dp = -1.0 / (p * std::numbers::ln2);
      const double pu = normal_pdf(u), pl = normal_pdf(l);
      const double dp_dd = (pl - pu) / s;
      const double dp_ds = (l * pl - u * pu) / s;
      const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      dd[i] = dbits_dp * dp_dd * sign;
      ds[i] = dbits_dp * dp_ds;
    }
  }
  return make_result({}, {total}, {v, mu, sigma},
                     [v, mu, sigma, dd = std::move(dd), ds = std::move(ds)](std::span<const double> g) {
                       const std::size_t m = dd.size();
                       std::vector<double> tmp(m);
                       if (v.requires_grad()) {
                         for (std::size_t i = 0; i < m; ++i) tmp[i] = g[0] * dd[i];
                         accumulate_grad(v, tmp);
                       }
                       if (mu.requires_grad()) {
                         for (std::size_t i = 0; i < m; ++i) tmp[i] = -g[0] * dd[i];
                         accumulate_grad(mu, tmp);
                       }
                       if (sigma.requires_grad()) {
                         for (std::size_t i = 0; i < m; ++i) tmp[i] = g[0] * ds[i];
                         accumulate_grad(sigma, tmp);
                       }
                     });
}

Tensor logistic_bits(const Tensor& v, const Tensor& loc, const Tensor& scale) {
  if (v.rank() < 1 || loc.shape() != Shape{v.dim(0)} || scale.shape() != loc.shape()) {
    throw Error("logistic_bits: expected per-channel parameters for " + shape_str(v.shape()));
  }
  check_finite(loc, "logistic_bits");
  check_finite(scale, "logistic_bits");
  const std::size_t C = v.dim(0), n = v.numel(), per = n / C;
  auto vd = v.data(), ld = loc.data(), sd = scale.data();
  double total = 0.0;
  std::vector<double> dd(n), ds(n);
  for (std::size_t c = 0; c < C; ++c) {
    const double s = sd[c];
    if (s <= 0.0) throw Error("logistic_bits: scale must be positive");
    for (std::size_t k = 0; k < per; ++k) {
      const std::size_t i = c * per + k;
      const double diff = vd[i] - ld[c];
      const double d = std::abs(diff);
      const double u = (0.5 - d) / s, l = (-0.5 - d) / s;
      const double cu = logistic(u), cl = logistic(l);
      const double p = cu - cl;
      total += bits_of(p);
      if (p > kProbFloor) {
        const double dbits_dp = -1.0 / (p * std::numbers::ln2);
        const double pu = cu * (1.0 - cu), pl = cl * (1.0 - cl);
        const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        dd[i] = dbits_dp * (pl - pu) / s * sign;
        ds[i] = dbits_dp * (l * pl - u * pu) / s;
      }
    }
  }
  return make_result(
      {}, {total}, {v, loc, scale},
      [v, loc, scale, C, per, dd = std::move(dd), ds = std::move(ds)](std::span<const double> g) {
        if (v.requires_grad()) {
          std::vector<double> tmp(dd.size());
          for (std::size_t i = 0; i < dd.size(); ++i) tmp[i] = g[0] * dd[i];
          accumulate_grad(v, tmp);
        }
        std::vector<double> gl(C, 0.0), gs(C, 0.0);
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t k = 0; k < per; ++k) {
            gl[c] -= g[0] * dd[c * per + k];
            gs[c] += g[0] * ds[c * per + k];
          }
        accumulate_grad(loc, gl);
        accumulate_grad(scale, gs);
      });
}

FactorizedPrior::FactorizedPrior(ParamStore& ps, const std::string& name, std::size_t channels) {
  loc = ps.add(name + ".loc", Tensor::zeros({channels}));
  log_scale = ps.add(name + ".log_scale", Tensor::zeros({channels}));
}

Tensor FactorizedPrior::scale() const { return clamp(exp(log_scale), kLogisticScaleMin, 1e300); }

Tensor FactorizedPrior::bits(const Tensor& v) const { return logistic_bits(v, loc, scale()); }

}  // namespace ilic
