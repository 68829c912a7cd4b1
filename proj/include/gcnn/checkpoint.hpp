#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>

#include "gcnn/model.hpp"

namespace gcnn {

/// Binary model file, little-endian:
///   "GCNN", u32 version (1), u32 JSON length, JSON spec block,
///   per parameter array in row order: u64 value count + float32 values,
///   u32 CRC32 of everything after the 8-byte magic/version header.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Model& model, std::ostream& out);
void save_checkpoint(const Model& model, const std::filesystem::path& path);

/// Rebuilds geometry from the stored spec and refuses files whose sampler
/// hashes, sizes or checksum disagree. Throws FormatError; never returns a
/// partially loaded model. `hierarchy` may be supplied to share geometry.
Model load_checkpoint(std::istream& in, std::shared_ptr<const IcosphereHierarchy> hierarchy = nullptr);
Model load_checkpoint(const std::filesystem::path& path, std::shared_ptr<const IcosphereHierarchy> hierarchy = nullptr);

}  // namespace gcnn
