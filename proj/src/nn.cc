#include "ilic/nn.h"

#include <cmath>

namespace ilic {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finaliser over the pair
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

Tensor ParamStore::add(const std::string& name, Tensor value) {
  if (params_.count(name)) throw Error("duplicate parameter name: " + name);
  value.set_requires_grad(true);
  params_.emplace(name, value);
  return value;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter: " + name);
  return it->second;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : params_) const_cast<Tensor&>(t).zero_grad();
}

Tensor init_kernel(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(3.0 / double(fan_in));
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(data));
}

Conv2d::Conv2d(ParamStore& ps, const std::string& name, std::size_t cin, std::size_t cout, int k,
               int stride_, int pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
  const std::size_t kk = std::size_t(k);
  weight = ps.add(name + ".weight", init_kernel({cout, cin, kk, kk}, cin * kk * kk, rng));
  bias = ps.add(name + ".bias", Tensor::zeros({cout}));
}

Conv3d::Conv3d(ParamStore& ps, const std::string& name, std::size_t cin, std::size_t cout, int k,
               int stride_, int pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
  const std::size_t kk = std::size_t(k);
  weight = ps.add(name + ".weight", init_kernel({cout, cin, kk, kk, kk}, cin * kk * kk * kk, rng));
  bias = ps.add(name + ".bias", Tensor::zeros({cout}));
}

ConvTranspose2d::ConvTranspose2d(ParamStore& ps, const std::string& name, std::size_t cin,
                                 std::size_t cout, int k, int stride_, int pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
  const std::size_t kk = std::size_t(k);
  weight = ps.add(name + ".weight", init_kernel({cin, cout, kk, kk}, cin * kk * kk, rng));
  bias = ps.add(name + ".bias", Tensor::zeros({cout}));
}

int ConvTranspose2d::output_padding_for(std::size_t in, std::size_t target) const {
  const long k = long(weight.dim(2));
  const long base = (long(in) - 1) * stride - 2L * pad + k;
  const long extra = long(target) - base;
  if (extra < 0 || extra >= stride) {
    throw Error("transposed conv cannot map extent " + std::to_string(in) + " to " +
                std::to_string(target));
  }
  return int(extra);
}

PRelu::PRelu(ParamStore& ps, const std::string& name, std::size_t channels, std::size_t axis)
    : channel_axis(axis) {
  slope = ps.add(name + ".slope", Tensor::full({channels}, 0.25));
}

void Adam::step(const ParamStore& params, double lr) {
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) throw Error("adam: parameter '" + name + "' has no gradient");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, double(t_));
  for (const auto& [name, p] : params) {
    auto g = p.grad();
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    }
    auto w = const_cast<Tensor&>(p).mutable_data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
      v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + opts_.eps);
    }
  }
}

std::map<std::string, Tensor> Adam::export_state() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, m] : m_) out.emplace("m." + name, Tensor::from({m.size()}, m));
  for (const auto& [name, v] : v_) out.emplace("v." + name, Tensor::from({v.size()}, v));
  out.emplace("t", Tensor::scalar(double(t_)));
  return out;
}

void Adam::import_state(const std::map<std::string, Tensor>& state) {
  m_.clear();
  v_.clear();
  t_ = 0;
  for (const auto& [key, t] : state) {
    if (key == "t") {
      t_ = std::uint64_t(t.item());
    } else if (key.rfind("m.", 0) == 0) {
      m_[key.substr(2)].assign(t.data().begin(), t.data().end());
    } else if (key.rfind("v.", 0) == 0) {
      v_[key.substr(2)].assign(t.data().begin(), t.data().end());
    } else {
      throw Error("adam: unknown state record '" + key + "'");
    }
  }
}

}  // namespace ilic
