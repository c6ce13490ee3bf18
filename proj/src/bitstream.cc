#include "ilic/bitstream.h"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "ilic/entropy.h"

namespace ilic {

namespace {

constexpr char kMagic[5] = {'I', 'L', 'I', 'C', '1'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(std::uint8_t(std::uint64_t(v) >> (8 * i)));
  }
  void put_bytes(std::span<const std::uint8_t> b) { out.insert(out.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return T(v);
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error("bitstream: truncated stream");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  const uLong crc = crc32(0L, Z_NULL, 0);
  return std::uint32_t(crc32(crc, bytes.data(), uInt(bytes.size())));
}

std::vector<long long> to_symbols(const Tensor& t) {
  std::vector<long long> out(t.numel());
  auto d = t.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!std::isfinite(d[i]) || std::abs(d[i]) > 2147483647.0) {
      throw Error("encode: latent value out of codable range");
    }
    out[i] = (long long)d[i];
  }
  return out;
}

std::vector<FrequencyTable> z_tables(const Model& model, std::size_t zh, std::size_t zw) {
  const Tensor scale = model.prior().scale();
  const Tensor& loc = model.prior().loc;
  std::vector<FrequencyTable> out;
  out.reserve(loc.numel() * zh * zw);
  for (std::size_t c = 0; c < loc.numel(); ++c) {
    FrequencyTable t = logistic_table(loc.at(c), scale.at(c));
    for (std::size_t i = 0; i < zh * zw; ++i) out.push_back(t);
  }
  return out;
}

std::vector<FrequencyTable> y_tables(const GaussianParams& g) {
  std::vector<FrequencyTable> out;
  out.reserve(g.mu.numel());
  auto mu = g.mu.data(), sigma = g.sigma.data();
  for (std::size_t i = 0; i < mu.size(); ++i) out.push_back(gaussian_table(mu[i], sigma[i]));
  return out;
}

std::uint64_t hash_params(const GaussianParams& g) { return hash_tensor(g.sigma, hash_tensor(g.mu)); }

Tensor from_symbols(const std::vector<long long>& s, Shape shape) {
  std::vector<double> d(s.begin(), s.end());
  return Tensor::from(std::move(shape), std::move(d));
}

}  // namespace

std::uint8_t lambda_index(double lambda) {
  for (std::size_t i = 0; i < kLambdaTable.size(); ++i) {
    if (std::abs(lambda - kLambdaTable[i]) <= 1e-12 * kLambdaTable[i]) return std::uint8_t(i);
  }
  return kCustomLambda;
}

std::vector<std::uint8_t> serialize_bitstream(const Bitstream& bs) {
  const Header& h = bs.header;
  Writer w;
  w.put_bytes({reinterpret_cast<const std::uint8_t*>(kMagic), 5});
  w.put(h.version);
  w.put(h.height);
  w.put(h.width);
  w.put(h.b);
  w.put(h.model_id);
  w.put(h.lambda_index);
  w.put(h.harmonics);
  w.put(h.qecm);
  w.put(h.ordering);
  w.put(h.seed);
  w.put(std::uint32_t(bs.z_bytes.size()));
  w.put(std::uint32_t(bs.y_bytes.size()));
  w.put_bytes(bs.z_bytes);
  w.put_bytes(bs.y_bytes);
  w.put(crc_of(w.out));
  return std::move(w.out);
}

Bitstream parse_bitstream(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes + 4) throw Error("bitstream: truncated stream");
  Reader r(bytes);
  const std::uint32_t stored_crc = std::uint32_t(bytes[bytes.size() - 4]) |
                                   std::uint32_t(bytes[bytes.size() - 3]) << 8 |
                                   std::uint32_t(bytes[bytes.size() - 2]) << 16 |
                                   std::uint32_t(bytes[bytes.size() - 1]) << 24;
  if (stored_crc != crc_of(bytes.first(bytes.size() - 4))) {
    throw Error("bitstream: CRC mismatch (corrupt stream)");
  }
  auto magic = r.take(5);
  if (std::memcmp(magic.data(), kMagic, 5) != 0) throw Error("bitstream: bad magic (not an ILIC1 stream)");
  Bitstream bs;
  Header& h = bs.header;
  h.version = r.get<std::uint16_t>();
  if (h.version != kBitstreamVersion) {
    throw Error("bitstream: unsupported version " + std::to_string(h.version));
  }
  h.height = r.get<std::uint32_t>();
  h.width = r.get<std::uint32_t>();
  h.b = r.get<std::uint8_t>();
  h.model_id = r.get<std::uint64_t>();
  h.lambda_index = r.get<std::uint8_t>();
  h.harmonics = r.get<std::uint8_t>();
  h.qecm = r.get<std::uint8_t>();
  h.ordering = r.get<std::uint8_t>();
  h.seed = r.get<std::uint64_t>();
  const std::uint32_t z_len = r.get<std::uint32_t>();
  const std::uint32_t y_len = r.get<std::uint32_t>();
  if (h.height == 0 || h.width == 0) throw Error("bitstream: zero image extent");
  if (h.qecm > 1) throw Error("bitstream: invalid qecm flag");
  if (h.ordering != kRowMajorOrdering) {
    throw Error("bitstream: unknown sub-image ordering " + std::to_string(h.ordering));
  }
  if (std::uint64_t(z_len) + y_len + 4 != r.remaining()) {
    throw Error("bitstream: segment lengths do not match stream size");
  }
  auto z = r.take(z_len);
  auto y = r.take(y_len);
  bs.z_bytes.assign(z.begin(), z.end());
  bs.y_bytes.assign(y.begin(), y.end());
  return bs;
}

void write_bitstream(const std::string& path, const Bitstream& bs) {
  const auto bytes = serialize_bitstream(bs);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw Error("failed writing " + path);
}

Bitstream read_bitstream(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_bitstream(bytes);
}

EncodeResult encode_image(const Image& x, const Model& model, const EncodeOptions& opts) {
  const ModelConfig& cfg = model.config();
  if (x.height == 0 || x.width == 0) throw Error("encode: empty image");
  NoGradGuard ng;
  const PaddedImage padded = pad_to_multiple(x, cfg.granularity());
  const Forward fw = model.forward(image_to_tensor(padded.image), Mode::kTest, opts.seed);

  EncodeResult res;
  Header& h = res.stream.header;
  h.height = std::uint32_t(x.height);
  h.width = std::uint32_t(x.width);
  h.b = std::uint8_t(cfg.b);
  h.model_id = model.id();
  h.lambda_index = lambda_index(opts.lambda);
  h.harmonics = std::uint8_t(cfg.harmonics);
  h.qecm = cfg.qecm_enabled ? 1 : 0;
  h.seed = opts.seed;

  const auto zt = z_tables(model, fw.z_q.dim(1), fw.z_q.dim(2));
  res.stream.z_bytes = range_encode(to_symbols(fw.z_q), zt);
  const auto yt = y_tables(fw.gauss);
  res.stream.y_bytes = range_encode(to_symbols(fw.y_q), yt);
  res.estimated_bits = fw.bits_y.item() + fw.bits_z.item();
  res.params_hash = hash_params(fw.gauss);
  return res;
}

DecodeResult decode_image_traced(const Bitstream& bs, const Model& model) {
  const ModelConfig& cfg = model.config();
  const Header& h = bs.header;
  if (h.model_id != model.id()) throw Error("decode: stream was produced by a different model");
  if (h.b != cfg.b || h.harmonics != cfg.harmonics || (h.qecm != 0) != cfg.qecm_enabled) {
    throw Error("decode: header geometry does not match the model configuration");
  }
  NoGradGuard ng;
  const std::size_t g = cfg.granularity();
  const std::size_t H = (h.height + g - 1) / g * g, W = (h.width + g - 1) / g * g;
  const std::size_t yh = H / std::size_t(cfg.b) / 8, yw = W / std::size_t(cfg.b) / 8;
  const std::size_t zh = halve(halve(yh)), zw = halve(halve(yw));

  const auto zt = z_tables(model, zh, zw);
  const Tensor z_q = from_symbols(range_decode(bs.z_bytes, zt, zt.size()), {cfg.Mz, zh, zw});
  const Tensor z_hat = model.decompensate_test(z_q, model.laplace_z, h.seed, kStreamTestNoiseZ);
  const GaussianParams gauss = model.entropy_params(z_hat, yh, yw);
  const auto yt = y_tables(gauss);
  const Tensor y_q = from_symbols(range_decode(bs.y_bytes, yt, yt.size()), {cfg.M, yh, yw});
  const Tensor y_hat = model.decompensate_test(y_q, model.laplace_y, h.seed, kStreamTestNoiseY);
  const Tensor x_hat = model.synthesize(y_hat, H, W, true);

  DecodeResult res;
  res.image = crop(tensor_to_image(x_hat), h.height, h.width);
  res.params_hash = hash_params(gauss);
  return res;
}

Image decode_image(const Bitstream& bs, const Model& model) {
  return decode_image_traced(bs, model).image;
}

}  // namespace ilic
