#ifndef ILIC_NN_H_
#define ILIC_NN_H_

#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "ilic/tensor.h"

namespace ilic {

// Seeded generator with platform-independent real-number mapping
// (std::uniform_real_distribution is implementation defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // [0, 1)
  double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }
  // strictly inside (0, 1)
  double uniform_open() { return (double(engine_() >> 11) + 0.5) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t below(std::size_t n) { return std::size_t(uniform() * double(n)) % n; }

 private:
  std::mt19937_64 engine_;
};

// Derives an independent seed for a named sub-stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Trainable parameters keyed by dot-separated path, iterated in
// lexicographic order.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor value);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }
  std::size_t total_elements() const;
  void zero_grad();

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Tensor> params_;
};

// Uniform in +-sqrt(3/fan_in), unit variance gain for linear layers.
Tensor init_kernel(Shape shape, std::size_t fan_in, Rng& rng);

struct Conv2d {
  Tensor weight, bias;
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(ParamStore& ps, const std::string& name, std::size_t cin, std::size_t cout, int k,
         int stride, int pad, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, pad); }
};

struct Conv3d {
  Tensor weight, bias;
  int stride = 1, pad = 0;

  Conv3d() = default;
  Conv3d(ParamStore& ps, const std::string& name, std::size_t cin, std::size_t cout, int k,
         int stride, int pad, Rng& rng);
  Tensor operator()(const Tensor& x) const { return conv3d(x, weight, bias, stride, pad); }
};

struct ConvTranspose2d {
  Tensor weight, bias;
  int stride = 1, pad = 0;

  ConvTranspose2d() = default;
  ConvTranspose2d(ParamStore& ps, const std::string& name, std::size_t cin, std::size_t cout,
                  int k, int stride, int pad, Rng& rng);
  Tensor operator()(const Tensor& x, int output_padding_h = 0, int output_padding_w = 0) const {
    return transposed_conv2d(x, weight, bias, stride, pad, output_padding_h, output_padding_w);
  }
  // Output padding needed to reach `target` from `in` along one axis.
  int output_padding_for(std::size_t in, std::size_t target) const;
};

struct PRelu {
  Tensor slope;
  std::size_t channel_axis = 0;

  PRelu() = default;
  PRelu(ParamStore& ps, const std::string& name, std::size_t channels, std::size_t channel_axis);
  Tensor operator()(const Tensor& x) const { return prelu(x, slope, channel_axis); }
};

// Adam with bias correction. State is keyed by parameter name.
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  explicit Adam(Options opts) : opts_(opts) {}

  // Throws if any parameter has no gradient.
  void step(const ParamStore& params, double lr);
  std::uint64_t steps() const { return t_; }

  // Serialised state: "m.<name>", "v.<name>" and "t".
  std::map<std::string, Tensor> export_state() const;
  void import_state(const std::map<std::string, Tensor>& state);

 private:
  Options opts_;
  std::uint64_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

}  // namespace ilic

#endif  // ILIC_NN_H_
