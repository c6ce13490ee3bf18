#ifndef ILIC_BITSTREAM_H_
#define ILIC_BITSTREAM_H_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ilic/image.h"
#include "ilic/model.h"

namespace ilic {

constexpr std::uint16_t kBitstreamVersion = 1;
constexpr std::uint8_t kCustomLambda = 255;
constexpr std::size_t kHeaderBytes = 44;

// Known rate-distortion weights; the header stores an index into this list.
inline constexpr std::array<double, 6> kLambdaTable = {0.0018, 0.0035, 0.0067,
                                                       0.013,  0.025,  0.0483};
std::uint8_t lambda_index(double lambda);

struct Header {
  std::uint16_t version = kBitstreamVersion;
  std::uint32_t height = 0;  // original extents
  std::uint32_t width = 0;
  std::uint8_t b = 2;
  std::uint64_t model_id = 0;
  std::uint8_t lambda_index = kCustomLambda;
  std::uint8_t harmonics = 0;
  std::uint8_t qecm = 0;
  std::uint8_t ordering = kRowMajorOrdering;
  std::uint64_t seed = 0;  // test-time compensation noise
};

struct Bitstream {
  Header header;
  std::vector<std::uint8_t> z_bytes;
  std::vector<std::uint8_t> y_bytes;

  std::size_t payload_bytes() const { return z_bytes.size() + y_bytes.size(); }
};

// "ILIC1", header fields little-endian, z_len u32, y_len u32, z bytes,
// y bytes, CRC-32 of everything before it.
std::vector<std::uint8_t> serialize_bitstream(const Bitstream& bs);
Bitstream parse_bitstream(std::span<const std::uint8_t> bytes);
void write_bitstream(const std::string& path, const Bitstream& bs);
Bitstream read_bitstream(const std::string& path);

struct EncodeOptions {
  std::uint64_t seed = 0;
  double lambda = 0.0;  // recorded only
};

struct EncodeResult {
  Bitstream stream;
  double estimated_bits = 0.0;  // model rate of the rounded latents
  std::uint64_t params_hash = 0;  // entropy parameters used for y
};

struct DecodeResult {
  Image image;
  std::uint64_t params_hash = 0;
};

EncodeResult encode_image(const Image& x, const Model& model, const EncodeOptions& opts = {});
DecodeResult decode_image_traced(const Bitstream& bs, const Model& model);
Image decode_image(const Bitstream& bs, const Model& model);

}  // namespace ilic

#endif  // ILIC_BITSTREAM_H_
