#ifndef ILIC_FENM_H_
#define ILIC_FENM_H_

#include <vector>

#include "ilic/nn.h"

namespace ilic {

// L densely connected 3x3 conv + PReLU layers (growth g channels each), a
// 1x1 fusion conv back to C channels, plus the block input.
struct DenseBlock {
  std::vector<Conv2d> layers;
  std::vector<PRelu> acts;
  Conv2d fuse;

  DenseBlock() = default;
  DenseBlock(ParamStore& ps, const std::string& name, std::size_t channels, int growth,
             int num_layers, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

// x + conv(DB(DB(x)))
struct Fenm {
  DenseBlock db1, db2;
  Conv2d conv;

  Fenm() = default;
  Fenm(ParamStore& ps, const std::string& name, std::size_t channels, int growth, int num_layers,
       Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

// Mean squared error against a gradient-stopped target.
Tensor fe_loss(const Tensor& enhanced, const Tensor& target);

}  // namespace ilic

#endif  // ILIC_FENM_H_
