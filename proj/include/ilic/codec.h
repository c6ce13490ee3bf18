#ifndef ILIC_CODEC_H_
#define ILIC_CODEC_H_

#include <vector>

#include "ilic/nn.h"

namespace ilic {

constexpr double kSigmaMin = 0.04;
constexpr double kProbFloor = 0x1.0p-50;
constexpr double kLogisticScaleMin = 1e-3;

// x + conv(prelu(conv(x))), 3x3 convs.
struct ResBlock2d {
  Conv2d c1, c2;
  PRelu act;

  ResBlock2d() = default;
  ResBlock2d(ParamStore& ps, const std::string& name, std::size_t channels, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

// Two cascaded residual blocks with a shortcut from input to output.
struct Crm {
  ResBlock2d r1, r2;

  Crm() = default;
  Crm(ParamStore& ps, const std::string& name, std::size_t channels, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

// Three stages of [k5 s2 conv -> PReLU -> CRM x crm_per_stage].
struct AnalysisTransform {
  std::vector<Conv2d> convs;
  std::vector<PRelu> acts;
  std::vector<std::vector<Crm>> crms;

  AnalysisTransform() = default;
  AnalysisTransform(ParamStore& ps, const std::string& name, std::size_t in_channels,
                    std::size_t channels, std::size_t latent, int crm_per_stage, Rng& rng);
  Tensor operator()(const Tensor& f) const;
};

// Mirror of AnalysisTransform. The target extents pick the output padding
// of each transposed conv.
struct SynthesisTransform {
  std::vector<ConvTranspose2d> convs;
  std::vector<PRelu> acts;
  std::vector<std::vector<Crm>> crms;

  SynthesisTransform() = default;
  SynthesisTransform(ParamStore& ps, const std::string& name, std::size_t latent,
                     std::size_t channels, std::size_t out_channels, int crm_per_stage, Rng& rng);
  Tensor operator()(const Tensor& y, std::size_t height, std::size_t width) const;
};

// ceil(n / 2), the extent after one k5 s2 p2 conv.
inline std::size_t halve(std::size_t n) { return (n + 1) / 2; }

struct HyperAnalysis {
  Conv2d c1, c2;
  PRelu act;

  HyperAnalysis() = default;
  HyperAnalysis(ParamStore& ps, const std::string& name, std::size_t latent,
                std::size_t hyper, Rng& rng);
  Tensor operator()(const Tensor& y) const;
};

struct GaussianParams {
  Tensor mu;
  Tensor sigma;
};

struct HyperSynthesis {
  ConvTranspose2d t1, t2;
  PRelu act;
  std::size_t latent = 0;

  HyperSynthesis() = default;
  HyperSynthesis(ParamStore& ps, const std::string& name, std::size_t hyper, std::size_t latent,
                 Rng& rng);
  // Parameters for a latent of extents height x width.
  GaussianParams operator()(const Tensor& z, std::size_t height, std::size_t width) const;
};

// Adds i.i.d. U(-0.5, 0.5) noise (gradient 1).
Tensor quantize_noise(const Tensor& t, Rng& rng);
// Rounds half away from zero. Rejected inside a gradient context.
Tensor quantize_round(const Tensor& t);
inline double round_half_away(double v) { return std::round(v); }

// Mass of the unit interval centred on v under N(mu, sigma).
double gaussian_prob(double v, double mu, double sigma);
// Mass of the unit interval centred on v under Logistic(loc, scale).
double logistic_prob(double v, double loc, double scale);
// -log2(max(p, floor))
double bits_of(double p);

// Total -log2 P over all elements. Shapes of v, mu, sigma must match.
Tensor gaussian_bits(const Tensor& v, const Tensor& mu, const Tensor& sigma);
// v is [C, ...]; loc and scale hold one value per channel.
Tensor logistic_bits(const Tensor& v, const Tensor& loc, const Tensor& scale);

// Per-channel logistic prior for the hyper latent.
struct FactorizedPrior {
  Tensor loc, log_scale;

  FactorizedPrior() = default;
  FactorizedPrior(ParamStore& ps, const std::string& name, std::size_t channels);
  Tensor scale() const;
  Tensor bits(const Tensor& v) const;
};

}  // namespace ilic

#endif  // ILIC_CODEC_H_
