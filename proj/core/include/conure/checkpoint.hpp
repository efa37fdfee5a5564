#pragma once

#include <cstdint>
#include <string>

#include "conure/trainer.hpp"

namespace conure {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Bit-exact snapshot of a whole Run: config text, registry, every tensor
// (f64 little-endian), run-length-encoded ownership, Adam state, RNG stream,
// and any pending prune decision, behind a trailing FNV-1a content hash.
// save -> load -> save is byte-identical.
void save_checkpoint(const Run& run, const std::string& path);
Run load_checkpoint(const std::string& path);

}  // namespace conure
