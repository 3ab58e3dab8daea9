#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "siatrans/model.hpp"

namespace siatrans {

// Layout (all integers little-endian):
//   8 bytes   magic "SIATCKPT"
//   u32       format version (1)
//   u64       FNV-1a 64 hash of the canonical config text
//   u64       config text length, then the text itself
//   u64       entry count
//   per entry: u32 name length, name bytes, u8 trainable flag, u32 rank,
//              rank x u64 extents, u64 offset (in values) into the payload
//   u64       payload value count
//   payload   IEEE-754 binary64 values, little-endian, in entry order
inline constexpr char kCheckpointMagic[8] = {'S', 'I', 'A', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const SiaTrans& model);
void save_checkpoint(const SiaTrans& model, const std::string& path);

/// Reads the config header only.
ModelConfig read_checkpoint_config(const std::string& path);

/// Builds a model from the stored config and fills every entry.
std::unique_ptr<SiaTrans> load_checkpoint(const std::string& path);
/// Fills an existing model; throws DataError when the stored config hash
/// differs from the model's or the manifest does not match.
void load_checkpoint_into(SiaTrans& model, const std::string& path);
void load_checkpoint_into(SiaTrans& model, const std::vector<std::uint8_t>& bytes);

}  // namespace siatrans
