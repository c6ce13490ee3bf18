#include "ilic/refine.h"

namespace ilic {

Tensor stack_features(const std::vector<Tensor>& subs, const Tensor& global) {
  std::vector<Tensor> all = subs;
  all.push_back(global);
  for (const auto& t : all) {
    if (t.shape() != global.shape()) {
      throw Error("stack_features: extents differ " + shape_str(t.shape()) + " vs " +
                  shape_str(global.shape()));
    }
  }
  return stack(all);
}

ResBlock3d::ResBlock3d(ParamStore& ps, const std::string& name, std::size_t channels, Rng& rng) {
  c1 = Conv3d(ps, name + ".conv1", channels, channels, 3, 1, 1, rng);
  act = PRelu(ps, name + ".act", channels, 0);
  c2 = Conv3d(ps, name + ".conv2", channels, channels, 3, 1, 1, rng);
}

Tensor ResBlock3d::operator()(const Tensor& x) const { return add(x, c2(act(c1(x)))); }

Res3d::Res3d(ParamStore& ps, const std::string& name, std::size_t channels, char v, Rng& rng)
    : variant(v) {
  int n = 0;
  switch (v) {
    case 'a': n = 1; break;
    case 'b': n = 2; break;
    case 'c': n = 3; break;
    default: throw Error(std::string("unknown 3D Res variant '") + v + "'");
  }
  for (int i = 0; i < n; ++i) blocks.emplace_back(ps, name + ".rb" + std::to_string(i), channels, rng);
}

Tensor Res3d::operator()(const Tensor& x) const {
  Tensor h = x;
  for (const auto& rb : blocks) h = rb(h);
  return variant == 'a' ? h : add(h, x);
}

ChannelAttention::ChannelAttention(ParamStore& ps, const std::string& name, std::size_t channels,
                                   Rng& rng) {
  const std::size_t reduced = std::max<std::size_t>(1, channels / 4);
  down = Conv3d(ps, name + ".down", channels, reduced, 1, 1, 0, rng);
  act = PRelu(ps, name + ".act", reduced, 0);
  up = Conv3d(ps, name + ".up", reduced, channels, 1, 1, 0, rng);
}

Tensor ChannelAttention::gate(const Tensor& x) const {
  return sigmoid(up(act(down(global_avg_pool(x, 1)))));
}

Tensor ChannelAttention::operator()(const Tensor& x) const { return add(mul(x, gate(x)), x); }

SpatialAttention::SpatialAttention(ParamStore& ps, const std::string& name, Rng& rng) {
  conv = Conv3d(ps, name + ".conv", 2, 1, 3, 1, 1, rng);
}

Tensor SpatialAttention::gate(const Tensor& x) const {
  Tensor maps = concat({mean(x, {0}, true), max(x, 0, true)}, 0);
  return sigmoid(conv(maps));
}

Tensor SpatialAttention::operator()(const Tensor& x) const { return mul(x, gate(x)); }

AttentionBlock::AttentionBlock(ParamStore& ps, const std::string& name, std::size_t channels,
                               char variant, Rng& rng) {
  for (int i = 0; i < 3; ++i) {
    trunk.emplace_back(ps, name + ".trunk" + std::to_string(i), channels, variant, rng);
  }
  ca = ChannelAttention(ps, name + ".ca", channels, rng);
  sa = SpatialAttention(ps, name + ".sa", rng);
  for (int i = 0; i < 3; ++i) {
    mask.emplace_back(ps, name + ".mask" + std::to_string(i), channels, variant, rng);
  }
  mask_conv = Conv3d(ps, name + ".mask_conv", channels, channels, 1, 1, 0, rng);
}

Tensor AttentionBlock::trunk_path(const Tensor& x) const {
  Tensor h = x;
  for (const auto& r : trunk) h = r(h);
  return sa(ca(h));
}

Tensor AttentionBlock::mask_path(const Tensor& x) const {
  Tensor h = x;
  for (const auto& r : mask) h = r(h);
  return sigmoid(mask_conv(h));
}

Tensor AttentionBlock::operator()(const Tensor& x) const {
  return add(mul(trunk_path(x), mask_path(x)), x);
}

Arb::Arb(ParamStore& ps, const std::string& name, std::size_t in_channels, std::size_t channels,
         char variant, Rng& rng) {
  c1 = Conv3d(ps, name + ".conv1", in_channels, channels, 3, 1, 1, rng);
  act = PRelu(ps, name + ".act", channels, 0);
  c2 = Conv3d(ps, name + ".conv2", channels, channels, 3, 1, 1, rng);
  has_proj = in_channels != channels;
  if (has_proj) proj = Conv3d(ps, name + ".proj", in_channels, channels, 1, 1, 0, rng);
  ab = AttentionBlock(ps, name + ".ab", channels, variant, rng);
}

Tensor Arb::operator()(const Tensor& stacked) const {
  if (stacked.rank() != 4) throw Error("ARB: expected [T,N,h,w], got " + shape_str(stacked.shape()));
  Tensor x = permute(stacked, {1, 0, 2, 3});
  Tensor shortcut = has_proj ? proj(x) : x;
  Tensor y = add(shortcut, ab(c2(act(c1(x)))));
  y = permute(y, {1, 0, 2, 3});
  const Shape& s = y.shape();
  return reshape(y, {s[0] * s[1], s[2], s[3]});
}

RearrangeInverse::RearrangeInverse(ParamStore& ps, const std::string& name, std::size_t frames_,
                                   std::size_t channels, Rng& rng)
    : frames(frames_) {
  c1 = Conv3d(ps, name + ".conv1", channels, channels, 3, 1, 1, rng);
  act = PRelu(ps, name + ".act", channels, 0);
  c2 = Conv3d(ps, name + ".conv2", channels, channels, 3, 1, 1, rng);
}

Tensor RearrangeInverse::operator()(const Tensor& f) const {
  if (f.rank() != 3 || frames == 0 || f.dim(0) % frames != 0) {
    throw Error("rearrange inverse: channel count of " + shape_str(f.shape()) +
                " is not divisible by " + std::to_string(frames));
  }
  const std::size_t c = f.dim(0) / frames;
  Tensor x = permute(reshape(f, {frames, c, f.dim(1), f.dim(2)}), {1, 0, 2, 3});
  Tensor y = add(x, c2(act(c1(x))));
  return permute(y, {1, 0, 2, 3});
}

}  // namespace ilic
