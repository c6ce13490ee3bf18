#ifndef ILIC_REFINE_H_
#define ILIC_REFINE_H_

#include <vector>

#include "ilic/nn.h"

namespace ilic {

// Stacks per-sub-image features and the global feature along a new
// leading axis: [b*b+1, N, h, w], global last.
Tensor stack_features(const std::vector<Tensor>& subs, const Tensor& global);

// Layers below operate on channel-first volumes [C, T, H, W].

// x + conv(prelu(conv(x)))
struct ResBlock3d {
  Conv3d c1, c2;
  PRelu act;

  ResBlock3d() = default;
  ResBlock3d(ParamStore& ps, const std::string& name, std::size_t channels, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

// a: one residual block. b, c: two or three cascaded blocks plus an outer
// shortcut.
struct Res3d {
  char variant = 'b';
  std::vector<ResBlock3d> blocks;

  Res3d() = default;
  Res3d(ParamStore& ps, const std::string& name, std::size_t channels, char variant, Rng& rng);
  Tensor operator()(const Tensor& x) const;
};

// Gate from global average pooling, reduction 4; output x*g + x.
struct ChannelAttention {
  Conv3d down, up;
  PRelu act;

  ChannelAttention() = default;
  ChannelAttention(ParamStore& ps, const std::string& name, std::size_t channels, Rng& rng);
  Tensor gate(const Tensor& x) const;  // [C,1,1,1]
  Tensor operator()(const Tensor& x) const;
};

// Gate from channel mean and max maps; output x*g.
struct SpatialAttention {
  Conv3d conv;

  SpatialAttention() = default;
  SpatialAttention(ParamStore& ps, const std::string& name, Rng& rng);
  Tensor gate(const Tensor& x) const;  // [1,T,H,W]
  Tensor operator()(const Tensor& x) const;
};

// trunk(x) * mask(x) + x, trunk = 3 Res -> CA -> SA, mask = 3 Res -> 1x1x1
// conv -> sigmoid.
struct AttentionBlock {
  std::vector<Res3d> trunk, mask;
  ChannelAttention ca;
  SpatialAttention sa;
  Conv3d mask_conv;

  AttentionBlock() = default;
  AttentionBlock(ParamStore& ps, const std::string& name, std::size_t channels, char variant,
                 Rng& rng);
  Tensor trunk_path(const Tensor& x) const;
  Tensor mask_path(const Tensor& x) const;
  Tensor operator()(const Tensor& x) const;
};

// Attention refinement block. Input is the stacked feature [T, N, h, w];
// output [T*C, h, w] with C = `channels` (temporal axis folded into
// channels, row-major).
struct Arb {
  Conv3d c1, c2, proj;
  PRelu act;
  AttentionBlock ab;
  bool has_proj = false;

  Arb() = default;
  Arb(ParamStore& ps, const std::string& name, std::size_t in_channels, std::size_t channels,
      char variant, Rng& rng);
  Tensor operator()(const Tensor& stacked) const;
};

// Splits a refined-feature-shaped tensor [T*C, h, w] back into [T, C, h, w]
// and applies two 3x3x3 convs with a shortcut.
struct RearrangeInverse {
  Conv3d c1, c2;
  PRelu act;
  std::size_t frames = 0;

  RearrangeInverse() = default;
  RearrangeInverse(ParamStore& ps, const std::string& name, std::size_t frames,
                   std::size_t channels, Rng& rng);
  Tensor operator()(const Tensor& f) const;
};

}  // namespace ilic

#endif  // ILIC_REFINE_H_
