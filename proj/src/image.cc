#include "ilic/image.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ilic {
namespace {

unsigned char to_byte(double v) {
  const double c = std::clamp(v, 0.0, 1.0) * 255.0;
  return static_cast<unsigned char>(std::round(c));
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  std::string tail = s.substr(s.size() - suffix.size());
  std::transform(tail.begin(), tail.end(), tail.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return tail == suffix;
}

// Skips whitespace and '#' comments in a PNM header.
void skip_pnm_space(std::istream& in) {
  for (;;) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') {
      in.get();
    } else {
      return;
    }
  }
}

std::size_t read_pnm_int(std::istream& in, const std::string& path) {
  skip_pnm_space(in);
  long long v = -1;
  if (!(in >> v) || v <= 0) throw Error("malformed PPM header: " + path);
  return std::size_t(v);
}

}  // namespace

std::vector<unsigned char> to_bytes(const Image& img) {
  std::vector<unsigned char> out(img.pixels() * 3);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out[(y * img.width + x) * 3 + c] = to_byte(img.at(c, y, x));
  return out;
}

Image from_bytes(const unsigned char* rgb, std::size_t h, std::size_t w) {
  Image img(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = rgb[(y * w + x) * 3 + c] / 255.0;
  return img;
}

Image load_png(const std::string& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw Error("cannot read PNG " + path + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw Error("cannot decode PNG " + path + ": " + msg);
  }
  return from_bytes(buf.data(), png.height, png.width);
}

void save_png(const Image& img, const std::string& path) {
  if (img.height == 0 || img.width == 0) throw Error("cannot write empty image");
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = png_uint_32(img.width);
  png.height = png_uint_32(img.height);
  png.format = PNG_FORMAT_RGB;
  auto bytes = to_bytes(img);
  if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw Error("cannot write PNG " + path + ": " + png.message);
  }
}

Image load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '6') throw Error("not a binary PPM (P6): " + path);
  const std::size_t w = read_pnm_int(in, path);
  const std::size_t h = read_pnm_int(in, path);
  const std::size_t maxval = read_pnm_int(in, path);
  if (maxval != 255) throw Error("only 8-bit PPM supported: " + path);
  in.get();  // single whitespace before the raster
  std::vector<unsigned char> buf(w * h * 3);
  in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
  if (std::size_t(in.gcount()) != buf.size()) throw Error("truncated PPM: " + path);
  return from_bytes(buf.data(), h, w);
}

void save_ppm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  auto bytes = to_bytes(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw Error("cannot write " + path);
}

Image load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  unsigned char sig[8] = {0};
  in.read(reinterpret_cast<char*>(sig), 8);
  if (in.gcount() >= 2 && sig[0] == 'P' && sig[1] == '6') return load_ppm(path);
  if (in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0) return load_png(path);
  throw Error("unsupported image format: " + path);
}

void save_image(const Image& img, const std::string& path) {
  if (has_suffix(path, ".ppm") || has_suffix(path, ".pnm")) {
    save_ppm(img, path);
  } else {
    save_png(img, path);
  }
}

Tensor image_to_tensor(const Image& img) {
  return Tensor::from({3, img.height, img.width}, img.data);
}

Image tensor_to_image(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 3) throw Error("expected a [3,H,W] tensor, got " + shape_str(t.shape()));
  Image img(t.dim(1), t.dim(2));
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) img.data[i] = std::clamp(d[i], 0.0, 1.0);
  return img;
}

}  // namespace ilic
