#include "ilic/interleave.h"

namespace ilic {

Tensor split_tensor(const Tensor& x, int b) {
  if (b < 2) throw Error("split: patch side must be at least 2");
  if (x.rank() != 3) throw Error("split: expected [C,H,W], got " + shape_str(x.shape()));
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2), bb = std::size_t(b);
  if (H % bb || W % bb) {
    throw Error("split: extents " + std::to_string(H) + "x" + std::to_string(W) +
                " not divisible by " + std::to_string(b));
  }
  const std::size_t h = H / bb, w = W / bb;
  Tensor t = reshape(x, {C, h, bb, w, bb});
  t = permute(t, {2, 4, 0, 1, 3});  // [i, j, c, r, col]
  return reshape(t, {bb * bb, C, h, w});
}

Tensor reconstruct_tensor(const Tensor& subs, int b) {
  if (b < 2) throw Error("reconstruct: patch side must be at least 2");
  const std::size_t bb = std::size_t(b);
  if (subs.rank() != 4 || subs.dim(0) != bb * bb) {
    throw Error("reconstruct: expected [" + std::to_string(bb * bb) + ",C,h,w], got " +
                shape_str(subs.shape()));
  }
  const std::size_t C = subs.dim(1), h = subs.dim(2), w = subs.dim(3);
  Tensor t = reshape(subs, {bb, bb, C, h, w});
  t = permute(t, {2, 3, 0, 4, 1});  // [c, r, i, col, j]
  return reshape(t, {C, h * bb, w * bb});
}

std::vector<Image> split(const Image& x, int b) {
  NoGradGuard ng;
  Tensor s = split_tensor(image_to_tensor(x), b);
  const std::size_t n = s.dim(0), h = s.dim(2), w = s.dim(3);
  std::vector<Image> out;
  auto d = s.data();
  for (std::size_t t = 0; t < n; ++t) {
    Image img(h, w);
    std::copy(d.begin() + std::ptrdiff_t(t * 3 * h * w), d.begin() + std::ptrdiff_t((t + 1) * 3 * h * w),
              img.data.begin());
    out.push_back(std::move(img));
  }
  return out;
}

Image reconstruct(const std::vector<Image>& subs, int b) {
  const std::size_t bb = std::size_t(b);
  if (b < 2 || subs.size() != bb * bb) {
    throw Error("reconstruct: expected " + std::to_string(bb * bb) + " sub-images, got " +
                std::to_string(subs.size()));
  }
  const std::size_t h = subs[0].height, w = subs[0].width;
  std::vector<double> d;
  d.reserve(subs.size() * 3 * h * w);
  for (const auto& s : subs) {
    if (s.height != h || s.width != w) throw Error("reconstruct: sub-image extents differ");
    d.insert(d.end(), s.data.begin(), s.data.end());
  }
  NoGradGuard ng;
  Tensor t = reconstruct_tensor(Tensor::from({subs.size(), 3, h, w}, std::move(d)), b);
  Image img(h * bb, w * bb);
  std::copy(t.data().begin(), t.data().end(), img.data.begin());
  return img;
}

PaddedImage pad_to_multiple(const Image& x, std::size_t multiple) {
  if (multiple == 0) throw Error("pad_to_multiple: multiple must be positive");
  if (x.height == 0 || x.width == 0) throw Error("pad_to_multiple: empty image");
  PaddedImage out;
  out.orig_height = x.height;
  out.orig_width = x.width;
  const std::size_t H = (x.height + multiple - 1) / multiple * multiple;
  const std::size_t W = (x.width + multiple - 1) / multiple * multiple;
  if (H == x.height && W == x.width) {
    out.image = x;
    return out;
  }
  out.padded = true;
  out.image = Image(H, W);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx)
        out.image.at(c, y, xx) = x.at(c, std::min(y, x.height - 1), std::min(xx, x.width - 1));
  return out;
}

Image crop(const Image& x, std::size_t height, std::size_t width) {
  if (height > x.height || width > x.width || height == 0 || width == 0) {
    throw Error("crop: invalid extents");
  }
  Image out(height, width);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t xx = 0; xx < width; ++xx) out.at(c, y, xx) = x.at(c, y, xx);
  return out;
}

Fexm::Fexm(ParamStore& ps, const std::string& name, int b_, std::size_t channels, Rng& rng)
    : b(b_) {
  c1 = Conv2d(ps, name + ".sub1", 3, channels, 3, 1, 1, rng);
  act = PRelu(ps, name + ".sub_act", channels, 1);
  c2 = Conv2d(ps, name + ".sub2", channels, channels, 3, 1, 1, rng);
  global = Conv2d(ps, name + ".global", 3, channels, b + 1, b, 1, rng);
}

Fexm::Output Fexm::operator()(const Tensor& x) const {
  Tensor subs = split_tensor(x, b);
  Output out;
  out.subs = c2(act(c1(subs)));
  out.global = global(x);
  return out;
}

InverseFexm::InverseFexm(ParamStore& ps, const std::string& name, int b_, std::size_t in_channels,
                         std::size_t channels, Rng& rng)
    : b(b_) {
  t1 = ConvTranspose2d(ps, name + ".sub1", in_channels, channels, 3, 1, 1, rng);
  act = PRelu(ps, name + ".sub_act", channels, 1);
  t2 = ConvTranspose2d(ps, name + ".sub2", channels, 3, 3, 1, 1, rng);
  global = ConvTranspose2d(ps, name + ".global", in_channels, 3, b + 1, b, 1, rng);
}

Tensor InverseFexm::operator()(const Tensor& subs, const Tensor& g, bool clamp_output) const {
  const std::size_t bb = std::size_t(b);
  if (subs.rank() != 4 || subs.dim(0) != bb * bb || g.rank() != 3 || g.dim(1) != subs.dim(2) ||
      g.dim(2) != subs.dim(3)) {
    throw Error("inverse FExM: feature geometry mismatch " + shape_str(subs.shape()) + " / " +
                shape_str(g.shape()));
  }
  Tensor pixels = reconstruct_tensor(t2(act(t1(subs))), b);
  Tensor coarse = global(g, 1, 1);
  Tensor out = add(pixels, coarse);
  return clamp_output ? clamp(out, 0.0, 1.0) : out;
}

}  // namespace ilic
