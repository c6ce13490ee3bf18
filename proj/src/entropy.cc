#include "ilic/entropy.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ilic/codec.h"
#include "ilic/tensor.h"

namespace ilic {

long FrequencyTable::index_of(long long v) const {
  if (v >= sym_min && v <= sym_max) return long(v - sym_min);
  return escape ? long(entries() - 1) : -1;
}

double FrequencyTable::cost_bits(long long v) const {
  const long i = index_of(v);
  if (i < 0) return std::numeric_limits<double>::infinity();
  double bits = std::log2(double(total()) / double(count(std::size_t(i))));
  if (escape && std::size_t(i) == entries() - 1) bits += 32.0;
  return bits;
}

FrequencyTable build_freq_table(std::span<const double> probs, int sym_min, bool escape) {
  if (probs.empty()) throw Error("build_freq_table: empty symbol range");
  const std::size_t n = probs.size() + (escape ? 1 : 0);
  if (n > kFreqTotal / 2) throw Error("build_freq_table: alphabet too large");
  std::vector<double> p(probs.begin(), probs.end());
  double mass = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error("build_freq_table: invalid probability");
    mass += v;
  }
  if (escape) p.push_back(std::max(0.0, 1.0 - mass));
  const double free = double(kFreqTotal - n);
  std::vector<std::uint32_t> counts(n);
  std::uint64_t used = 0;
  std::size_t best = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double share = std::min(1.0, p[i]) * free;
    counts[i] = 1 + std::uint32_t(std::floor(share));
    used += counts[i];
    if (p[i] > p[best]) best = i;
  }
  if (used > kFreqTotal) {
    // Only reachable when probs sum above 1; rescale by the total.
    used = 0;
    for (std::size_t i = 0; i < n; ++i) {
      counts[i] = 1 + std::uint32_t(std::floor(p[i] / mass * free));
      used += counts[i];
    }
  }
  counts[best] += std::uint32_t(kFreqTotal - used);
  FrequencyTable t;
  t.sym_min = sym_min;
  t.sym_max = sym_min + int(probs.size()) - 1;
  t.escape = escape;
  t.cum.resize(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) t.cum[i + 1] = t.cum[i] + counts[i];
  return t;
}

namespace {

template <typename Mass>
FrequencyTable windowed_table(double loc, double half_width, Mass mass) {
  if (!std::isfinite(loc) || !std::isfinite(half_width)) {
    throw Error("entropy table: non-finite distribution parameters");
  }
  const double lo_d = std::floor(loc - half_width) - 1.0;
  const double hi_d = std::ceil(loc + half_width) + 1.0;
  int lo = int(std::clamp(lo_d, double(kSymbolMin), double(kSymbolMax)));
  int hi = int(std::clamp(hi_d, double(kSymbolMin), double(kSymbolMax)));
  std::vector<double> p(std::size_t(hi - lo + 1));
  for (int k = lo; k <= hi; ++k) p[std::size_t(k - lo)] = mass(double(k));
  return build_freq_table(p, lo, true);
}

}  // namespace

FrequencyTable gaussian_table(double mu, double sigma) {
  if (!(sigma > 0.0)) throw Error("gaussian_table: sigma must be positive");
  return windowed_table(mu, std::min(8.0 * sigma, 600.0),
                        [&](double k) { return gaussian_prob(k, mu, sigma); });
}

FrequencyTable logistic_table(double loc, double scale) {
  if (!(scale > 0.0)) throw Error("logistic_table: scale must be positive");
  return windowed_table(loc, std::min(36.0 * scale, 600.0),
                        [&](double k) { return logistic_prob(k, loc, scale); });
}

void RangeEncoder::shift_low() {
  if (std::uint32_t(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const std::uint8_t carry = std::uint8_t(low_ >> 32);
    std::uint8_t temp = cache_;
    do {
      out_.push_back(std::uint8_t(temp + carry));
      temp = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = std::uint8_t(std::uint32_t(low_) >> 24);
  }
  ++cache_size_;
  low_ = std::uint64_t(std::uint32_t(low_) << 8);
}

void RangeEncoder::encode(std::uint32_t start, std::uint32_t size, int total_bits) {
  range_ >>= total_bits;
  low_ += std::uint64_t(start) * range_;
  range_ *= size;
  while (range_ < (1u << 24)) {
    range_ <<= 8;
    shift_low();
  }
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 5; ++i) shift_low();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
  if (bytes.size() < 5) throw Error("range decoder: stream shorter than 5 bytes");
  if (bytes[0] != 0) throw Error("range decoder: corrupt stream (bad lead byte)");
  for (int i = 0; i < 5; ++i) code_ = (code_ << 8) | next();
}

std::uint8_t RangeDecoder::next() {
  if (pos_ >= bytes_.size()) throw Error("range decoder: truncated stream");
  return bytes_[pos_++];
}

std::uint32_t RangeDecoder::peek(int total_bits) {
  range_ >>= total_bits;
  const std::uint32_t v = code_ / range_;
  if (v >= (1u << total_bits)) throw Error("range decoder: corrupt stream");
  return v;
}

void RangeDecoder::consume(std::uint32_t start, std::uint32_t size) {
  code_ -= start * range_;
  range_ *= size;
  while (range_ < (1u << 24)) {
    code_ = (code_ << 8) | next();
    range_ <<= 8;
  }
}

std::uint32_t RangeDecoder::decode_bits(int bits) {
  const std::uint32_t v = peek(bits);
  consume(v, 1);
  return v;
}

void encode_symbol(RangeEncoder& enc, const FrequencyTable& t, long long v) {
  if (t.total() != kFreqTotal) throw Error("encode_symbol: table total must be 2^16");
  const long i = t.index_of(v);
  if (i < 0) {
    throw Error("encode_symbol: value " + std::to_string(v) + " outside table range without escape");
  }
  enc.encode(t.cum[std::size_t(i)], t.count(std::size_t(i)), kFreqBits);
  if (t.escape && std::size_t(i) == t.entries() - 1) {
    if (v < std::numeric_limits<std::int32_t>::min() || v > std::numeric_limits<std::int32_t>::max()) {
      throw Error("encode_symbol: escaped value " + std::to_string(v) + " exceeds 32 bits");
    }
    const std::uint32_t raw = std::uint32_t(std::int32_t(v));
    enc.encode_bits(raw >> 16, 16);
    enc.encode_bits(raw & 0xFFFFu, 16);
  }
}

long long decode_symbol(RangeDecoder& dec, const FrequencyTable& t) {
  if (t.total() != kFreqTotal) throw Error("decode_symbol: table total must be 2^16");
  const std::uint32_t target = dec.peek(kFreqBits);
  auto it = std::upper_bound(t.cum.begin(), t.cum.end(), target);
  const std::size_t i = std::size_t(it - t.cum.begin()) - 1;
  dec.consume(t.cum[i], t.count(i));
  if (t.escape && i == t.entries() - 1) {
    const std::uint32_t hi = dec.decode_bits(16);
    const std::uint32_t lo = dec.decode_bits(16);
    const long long v = std::int32_t((hi << 16) | lo);
    if (v >= t.sym_min && v <= t.sym_max) throw Error("decode_symbol: corrupt escape value");
    return v;
  }
  return t.sym_min + (long long)i;
}

std::vector<std::uint8_t> range_encode(std::span<const long long> symbols,
                                       std::span<const FrequencyTable> tables) {
  if (symbols.size() != tables.size()) {
    throw Error("range_encode: " + std::to_string(symbols.size()) + " symbols but " +
                std::to_string(tables.size()) + " tables");
  }
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i) encode_symbol(enc, tables[i], symbols[i]);
  return enc.finish();
}

std::vector<long long> range_decode(std::span<const std::uint8_t> bytes,
                                    std::span<const FrequencyTable> tables, std::size_t count) {
  if (tables.size() != count) throw Error("range_decode: table count mismatch");
  RangeDecoder dec(bytes);
  std::vector<long long> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = decode_symbol(dec, tables[i]);
  if (!dec.exhausted()) throw Error("range_decode: trailing bytes after the last symbol");
  return out;
}

}  // namespace ilic
