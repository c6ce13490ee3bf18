#ifndef ILIC_INTERLEAVE_H_
#define ILIC_INTERLEAVE_H_

#include <cstdint>
#include <vector>

#include "ilic/image.h"
#include "ilic/nn.h"

namespace ilic {

// Sub-image t = i*b + j collects pixel (r*b + i, c*b + j) of every patch.
constexpr std::uint8_t kRowMajorOrdering = 0;

std::vector<Image> split(const Image& x, int b);
Image reconstruct(const std::vector<Image>& subs, int b);

struct PaddedImage {
  Image image;
  std::size_t orig_height = 0;
  std::size_t orig_width = 0;
  bool padded = false;
};

// Replicates the last row/column up to the next multiple of `multiple`.
PaddedImage pad_to_multiple(const Image& x, std::size_t multiple);
Image crop(const Image& x, std::size_t height, std::size_t width);

// Differentiable forms: [3,H,W] <-> [b*b,3,H/b,W/b].
Tensor split_tensor(const Tensor& x, int b);
Tensor reconstruct_tensor(const Tensor& subs, int b);

// Coarse feature extraction. Sub-images share two 3x3 convs; the global
// feature comes from one (b+1)x(b+1) stride-b conv on the full image.
struct Fexm {
  int b = 2;
  Conv2d c1, c2, global;
  PRelu act;

  Fexm() = default;
  Fexm(ParamStore& ps, const std::string& name, int b, std::size_t channels, Rng& rng);

  struct Output {
    Tensor subs;    // [b*b, N, h, w]
    Tensor global;  // [N, h, w]
  };
  Output operator()(const Tensor& x) const;
};

// Transposed-conv mirror of Fexm followed by reconstruct.
struct InverseFexm {
  int b = 2;
  ConvTranspose2d t1, t2, global;
  PRelu act;

  InverseFexm() = default;
  InverseFexm(ParamStore& ps, const std::string& name, int b, std::size_t in_channels,
              std::size_t channels, Rng& rng);

  // subs [b*b, C, h, w], global [C, h, w] -> [3, h*b, w*b]. With `clamp_output`
  // the result is clipped to [0, 1].
  Tensor operator()(const Tensor& subs, const Tensor& global, bool clamp_output = true) const;
};

}  // namespace ilic

#endif  // ILIC_INTERLEAVE_H_
