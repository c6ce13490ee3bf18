#include "ilic/fenm.h"

namespace ilic {

DenseBlock::DenseBlock(ParamStore& ps, const std::string& name, std::size_t channels, int growth,
                       int num_layers, Rng& rng) {
  if (growth < 1 || num_layers < 1) throw Error("dense block: growth and layers must be positive");
  std::size_t in = channels;
  for (int l = 0; l < num_layers; ++l) {
    const std::string layer = name + ".layer" + std::to_string(l);
    layers.emplace_back(ps, layer + ".conv", in, std::size_t(growth), 3, 1, 1, rng);
    acts.emplace_back(ps, layer + ".act", std::size_t(growth), 0);
    in += std::size_t(growth);
  }
  fuse = Conv2d(ps, name + ".fuse", in, channels, 1, 1, 0, rng);
}

Tensor DenseBlock::operator()(const Tensor& x) const {
  std::vector<Tensor> feats{x};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    feats.push_back(acts[l](layers[l](concat(feats, 0))));
  }
  return add(x, fuse(concat(feats, 0)));
}

Fenm::Fenm(ParamStore& ps, const std::string& name, std::size_t channels, int growth,
           int num_layers, Rng& rng) {
  db1 = DenseBlock(ps, name + ".db0", channels, growth, num_layers, rng);
  db2 = DenseBlock(ps, name + ".db1", channels, growth, num_layers, rng);
  conv = Conv2d(ps, name + ".conv", channels, channels, 3, 1, 1, rng);
}

Tensor Fenm::operator()(const Tensor& x) const { return add(x, conv(db2(db1(x)))); }

Tensor fe_loss(const Tensor& enhanced, const Tensor& target) {
  if (enhanced.shape() != target.shape()) {
    throw Error("fe_loss: shape mismatch " + shape_str(enhanced.shape()) + " vs " +
                shape_str(target.shape()));
  }
  return mse(enhanced, target.detach());
}

}  // namespace ilic
