#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "prose/disentangle.hpp"

namespace prose {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// Rejects bad magic, unknown versions, truncation, CRC mismatch and any
// tensor whose shape disagrees with the architecture implied by the config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace prose
