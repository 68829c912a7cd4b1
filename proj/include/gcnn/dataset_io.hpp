#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "gcnn/surfdata.hpp"
#include "gcnn/tensor.hpp"

namespace gcnn {

/// Node-map dataset ("GSRF", version 1), little-endian:
///   header  u32 level, u32 channels, u32 count
///   sample  u32 label (0xFFFFFFFF = none), u32 id length + UTF-8 id,
///           ceil(N/8) mask bytes (bit n%8 of byte n/8), N*C float32 node-major
inline constexpr std::uint32_t kNodeMapVersion = 1;
inline constexpr std::uint32_t kNoLabel = 0xFFFFFFFFu;

void save_node_maps(std::ostream& out, const std::vector<NodeMap>& maps);
void save_node_maps(const std::filesystem::path& path, const std::vector<NodeMap>& maps);
/// Throws FormatError on a bad header, truncation, or a level other than
/// `expected_level` when one is given.
std::vector<NodeMap> load_node_maps(std::istream& in, std::optional<int> expected_level = std::nullopt);
std::vector<NodeMap> load_node_maps(const std::filesystem::path& path, std::optional<int> expected_level = std::nullopt);

/// One sample per CSV file: rows "node_index,ch0[,ch1...],mask" covering
/// every node of one icosphere level. A non-numeric first row is a header.
NodeMap import_node_csv(std::istream& in, std::string sample_id = {}, std::optional<int> label = std::nullopt);
NodeMap import_node_csv(const std::filesystem::path& path, std::optional<int> label = std::nullopt);

/// Projected image dataset ("GIMG", version 1), little-endian:
///   header  u32 height, u32 width, u32 channels, u32 count
///   sample  u32 label, u32 id length + UTF-8 id, H*W*C float32 (row, col, channel)
struct ImageSample {
  Tensor image;  // H x W x C
  std::optional<int> label;
  std::string sample_id;
};
void save_images(std::ostream& out, const std::vector<ImageSample>& images);
void save_images(const std::filesystem::path& path, const std::vector<ImageSample>& images);
std::vector<ImageSample> load_images(std::istream& in);
std::vector<ImageSample> load_images(const std::filesystem::path& path);

/// Reads the 4-byte magic of a file ("GSRF", "GIMG", "GCNN", ...).
std::string file_magic(const std::filesystem::path& path);

}  // namespace gcnn
