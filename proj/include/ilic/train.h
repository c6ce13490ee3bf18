#ifndef ILIC_TRAIN_H_
#define ILIC_TRAIN_H_

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ilic/config.h"
#include "ilic/image.h"
#include "ilic/model.h"
#include "ilic/nn.h"
#include "ilic/qecm.h"

namespace ilic {

// Piecewise-constant lambda_e over the epoch range, written
// "value:start,value:start" with starts as fractions of the run ("1:0,0:1/3").
class LambdaESchedule {
 public:
  struct Entry {
    double value = 0.0;
    long long num = 0, den = 1;
  };
  static LambdaESchedule parse(const std::string& text);
  double at(long long epoch, long long epochs) const;
  std::string str() const { return text_; }

 private:
  std::vector<Entry> entries_;
  std::string text_;
};

// base for the first 2/3 of the epochs, base/10 up to 11/12, then base/100.
double lr_at(double base, long long epoch, long long epochs);

struct TrainOptions {
  double lambda = 0.0035;
  double lambda_scale = 65025.0;
  LambdaESchedule lambda_e = LambdaESchedule::parse("1:0,0:1/3");
  double base_lr = 1e-4;
  long long epochs = 10;
  long long batch = 1;
  std::size_t crop = 48;
  std::uint64_t seed = 0;
  bool clamp_output = true;
  double clip_norm = 1.0;  // global gradient norm limit; 0 disables
  long long checkpoint_every = 0;  // epochs; 0 disables
  std::string checkpoint_path;

  static TrainOptions from_config(const Config& cfg);
  void to_config(Config& cfg) const;
};

struct EpochLog {
  long long epoch = 0;
  long long steps = 0;  // optimiser steps so far
  double lr = 0.0;
  double lambda_e = 0.0;
  double loss = 0.0;     // mean total loss over the epoch
  double rd_loss = 0.0;  // mean rate + lambda * distortion
  double bpp = 0.0;
  double mse = 0.0;
  double fe = 0.0;
  double grad_norm = 0.0;  // largest pre-clip gradient norm
};

struct TrainResult {
  Model model;
  Adam optimizer;
  std::vector<EpochLog> log;
};

// PNG and PPM files in `dir`, sorted by name.
std::vector<Image> load_dataset(const std::string& dir);
// Uniform crop position and a fair horizontal flip.
Image random_crop(const Image& img, std::size_t size, Rng& rng);

// Rescales all gradients so their global L2 norm is at most `max_norm`
// (0 disables). Returns the norm before clipping.
double clip_gradients(const ParamStore& params, double max_norm);

TrainResult train(const ModelConfig& model_cfg, const TrainOptions& opts,
                  const std::vector<Image>& data,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

struct QuantErrorReport {
  QuantErrorStats y, z;
};
// Quantisation error of the quantiser inputs over `images`; stores the
// fitted Laplacian parameters in the model.
QuantErrorReport collect_qerr_stats(Model& model, const std::vector<Image>& images);

// Model checkpoint plus train.* settings and optimiser state (opt.*).
Checkpoint training_checkpoint(const Model& model, const TrainOptions& opts, const Adam& opt);

// Gradient backgrounds with random rectangles, ellipses and stripes.
Image synthetic_image(std::size_t height, std::size_t width, std::uint64_t seed);

}  // namespace ilic

#endif  // ILIC_TRAIN_H_
