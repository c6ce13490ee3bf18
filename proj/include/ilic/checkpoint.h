#ifndef ILIC_CHECKPOINT_H_
#define ILIC_CHECKPOINT_H_

// Checkpoint container:
//   "ILIC" | u16 version | u32 n_config | n_config x (u32 len, key, u32 len, value)
//   | u32 n_records | n_records x (u32 name_len, name, u32 rank, rank x u32 extent,
//   numel x f64)
// All integers and floats little-endian. Optimizer state lives under "opt.",
// quantisation-error statistics under "qecm.".

#include <map>
#include <string>
#include <vector>

#include "ilic/tensor.h"

namespace ilic {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, std::string> config;
  std::map<std::string, Tensor> records;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ilic

#endif  // ILIC_CHECKPOINT_H_
