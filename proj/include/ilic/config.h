#ifndef ILIC_CONFIG_H_
#define ILIC_CONFIG_H_

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace ilic {

// Flat "key = value" settings. Blank lines and '#' comments are ignored.
class Config {
 public:
  static Config parse(std::string_view text, const std::string& source = "<string>");
  static Config load(const std::string& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  // Later settings win.
  void merge(const Config& other);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Applies ILIC_SEED from the environment, if set, to "train.seed".
void apply_seed_env(Config& cfg);

}  // namespace ilic

#endif  // ILIC_CONFIG_H_
