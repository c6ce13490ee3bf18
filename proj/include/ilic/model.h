#ifndef ILIC_MODEL_H_
#define ILIC_MODEL_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ilic/checkpoint.h"
#include "ilic/codec.h"
#include "ilic/config.h"
#include "ilic/fenm.h"
#include "ilic/interleave.h"
#include "ilic/qecm.h"
#include "ilic/refine.h"

namespace ilic {

struct ModelConfig {
  int b = 2;
  std::size_t N = 32;
  std::size_t M = 64;
  std::size_t Mz = 32;
  int crm_per_stage = 1;
  char frm_variant = 'b';
  std::size_t frm_channels = 0;  // 0 means N
  bool fenm_enabled = true;
  int fenm_layers = 3;
  int fenm_growth = 8;
  bool qecm_enabled = true;
  int harmonics = 5;

  std::size_t arb_channels() const { return frm_channels ? frm_channels : N; }
  std::size_t frames() const { return std::size_t(b * b + 1); }
  std::size_t refined_channels() const { return frames() * arb_channels(); }
  // Image extents must be multiples of this.
  std::size_t granularity() const { return std::size_t(8 * b); }

  void validate() const;
  static ModelConfig from_config(const Config& cfg);
  void to_config(Config& cfg) const;
};

enum class Mode { kTrain, kTest };

// Every intermediate of one pass through the pipeline.
struct Forward {
  Tensor stacked;       // [T, N, h, w]
  Tensor f;             // refined feature [T*C, h, w]
  Tensor y, z;          // continuous latents
  Tensor y_q, z_q;      // quantiser outputs (noisy or integer); rates are taken on these
  Tensor y_hat, z_hat;  // after decoder-side compensation
  GaussianParams gauss;
  Tensor bits_y, bits_z;
  Tensor f_dec;       // g_s output
  Tensor f_enh;       // FEnM output (f_dec when disabled)
  Tensor rearranged;  // [T, C, h, w]
  Tensor x_hat;
};

using QuantizeFn = std::function<Tensor(const Tensor&)>;

// Stream ids for seed derivation of quantisation noise.
constexpr std::uint64_t kStreamTestNoiseZ = 1;
constexpr std::uint64_t kStreamTestNoiseY = 2;
constexpr std::uint64_t kStreamTrainNoise = 3;

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  LaplaceParams laplace_y, laplace_z;
  // Clamp x_hat to [0, 1] in training passes too.
  bool clamp_train_output = true;

  Tensor refine(const Tensor& x, Tensor* stacked = nullptr) const;
  Tensor analysis(const Tensor& f) const { return g_a_(f); }
  Tensor hyper_analysis(const Tensor& y) const { return h_a_(y); }
  Tensor compensate(const Tensor& t) const;
  Tensor decompensate_train(const Tensor& t) const;
  Tensor decompensate_test(const Tensor& t, const LaplaceParams& lp, std::uint64_t seed,
                           std::uint64_t stream) const;
  GaussianParams entropy_params(const Tensor& z_hat, std::size_t yh, std::size_t yw) const {
    return h_s_(z_hat, yh, yw);
  }
  const FactorizedPrior& prior() const { return prior_; }

  // g_s -> FEnM -> rearrange inverse -> inverse FExM for an image of
  // H x W pixels. Intermediates are recorded into `out` when given.
  Tensor synthesize(const Tensor& y_hat, std::size_t H, std::size_t W, bool clamp_output,
                    Forward* out = nullptr) const;

  // Train mode adds uniform noise; test mode rounds and applies the
  // test-time compensation (seeded).
  Forward forward(const Tensor& x, Mode mode, std::uint64_t seed) const;
  // Same wiring with a caller-supplied quantiser.
  Forward forward_with(const Tensor& x, Mode mode, const QuantizeFn& quantize,
                       std::uint64_t seed) const;

  Checkpoint to_checkpoint() const;
  static Model from_checkpoint(const Checkpoint& ckpt);
  // FNV-1a over the model configuration, parameters and QECM statistics.
  std::uint64_t id() const;

 private:
  ModelConfig cfg_;
  ParamStore params_;
  Fexm fexm_;
  Arb arb_;
  AnalysisTransform g_a_;
  HyperAnalysis h_a_;
  HyperSynthesis h_s_;
  FactorizedPrior prior_;
  SynthesisTransform g_s_;
  Fenm fenm_;
  RearrangeInverse rearrange_;
  InverseFexm ifexm_;
};

// R_y + R_z in bits per pixel + lambda * lambda_scale * MSE + lambda_e * L_FE.
struct LossTerms {
  Tensor total;
  double bpp = 0.0;
  double mse = 0.0;
  double fe = 0.0;
};
LossTerms total_loss(const Tensor& x, const Tensor& x_hat, const Tensor& bits_y,
                     const Tensor& bits_z, const Tensor& f, const Tensor& f_enh, double lambda,
                     double lambda_scale, double lambda_e);

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes,
                    std::uint64_t h = 0xcbf29ce484222325ull);
std::uint64_t hash_tensor(const Tensor& t, std::uint64_t h = 0xcbf29ce484222325ull);

// Stage name -> hash of its output, in pipeline order.
std::vector<std::pair<std::string, std::uint64_t>> stage_hashes(const Forward& fw);

}  // namespace ilic

#endif  // ILIC_MODEL_H_
