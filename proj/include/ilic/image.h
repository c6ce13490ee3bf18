#ifndef ILIC_IMAGE_H_
#define ILIC_IMAGE_H_

#include <cstddef>
#include <string>
#include <vector>

#include "ilic/tensor.h"

namespace ilic {

// Planar RGB image, values in [0, 1], stored [3][H][W].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0)
      : height(h), width(w), data(3 * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * height + y) * width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
  std::size_t pixels() const { return height * width; }
};

// 8-bit RGB I/O. Samples map to p/255; writing rounds half away from zero
// after clamping to [0, 1].
Image load_png(const std::string& path);
void save_png(const Image& img, const std::string& path);
Image load_ppm(const std::string& path);
void save_ppm(const Image& img, const std::string& path);
// Chooses the format from the file signature (load) or extension (save).
Image load_image(const std::string& path);
void save_image(const Image& img, const std::string& path);

std::vector<unsigned char> to_bytes(const Image& img);  // interleaved RGB
Image from_bytes(const unsigned char* rgb, std::size_t h, std::size_t w);

Tensor image_to_tensor(const Image& img);  // [3,H,W]
Image tensor_to_image(const Tensor& t);    // values clamped to [0,1]

}  // namespace ilic

#endif  // ILIC_IMAGE_H_
