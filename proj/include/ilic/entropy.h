#ifndef ILIC_ENTROPY_H_
#define ILIC_ENTROPY_H_

#include <cstdint>
#include <span>
#include <vector>

namespace ilic {

constexpr int kFreqBits = 16;
constexpr std::uint32_t kFreqTotal = 1u << kFreqBits;
constexpr int kSymbolMin = -255;
constexpr int kSymbolMax = 255;

// Quantised distribution over [sym_min, sym_max], optionally followed by an
// escape entry for values outside the range. cum has one more entry than
// there are coded entries; cum.front() == 0 and cum.back() <= kFreqTotal.
struct FrequencyTable {
  int sym_min = 0;
  int sym_max = -1;
  bool escape = false;
  std::vector<std::uint32_t> cum;

  std::size_t entries() const { return cum.size() - 1; }
  std::uint32_t count(std::size_t i) const { return cum[i + 1] - cum[i]; }
  std::uint32_t total() const { return cum.back(); }
  // Index of `v`, or the escape entry when out of range (-1 if no escape).
  long index_of(long long v) const;
  // Information content of the table-quantised distribution for `v`, in bits.
  double cost_bits(long long v) const;
};

// probs[i] is the mass of symbol sym_min + i. Each entry gets
// 1 + floor(P * (kFreqTotal - entries)); the remainder goes to the most
// probable entry. With `escape`, the escape entry takes the mass missing
// from probs.
FrequencyTable build_freq_table(std::span<const double> probs, int sym_min, bool escape = true);

// Discretised Gaussian / logistic over a window around the location that
// covers all but a negligible tail, clipped to [kSymbolMin, kSymbolMax].
FrequencyTable gaussian_table(double mu, double sigma);
FrequencyTable logistic_table(double loc, double scale);

// 32-bit range coder with carry propagation (LZMA style).
class RangeEncoder {
 public:
  void encode(std::uint32_t start, std::uint32_t size, int total_bits);
  // Raw bits, total_bits <= 16.
  void encode_bits(std::uint32_t value, int bits) { encode(value, 1, bits); }
  std::vector<std::uint8_t> finish();

 private:
  void shift_low();
  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> bytes);
  // Cumulative frequency target; must be followed by consume().
  std::uint32_t peek(int total_bits);
  void consume(std::uint32_t start, std::uint32_t size);
  std::uint32_t decode_bits(int bits);
  // True when every input byte was used.
  bool exhausted() const { return pos_ == bytes_.size(); }

 private:
  std::uint8_t next();
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint32_t code_ = 0;
};

void encode_symbol(RangeEncoder& enc, const FrequencyTable& t, long long v);
long long decode_symbol(RangeDecoder& dec, const FrequencyTable& t);

// One table per symbol.
std::vector<std::uint8_t> range_encode(std::span<const long long> symbols,
                                       std::span<const FrequencyTable> tables);
std::vector<long long> range_decode(std::span<const std::uint8_t> bytes,
                                    std::span<const FrequencyTable> tables, std::size_t count);

}  // namespace ilic

#endif  // ILIC_ENTROPY_H_
