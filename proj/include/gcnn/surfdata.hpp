#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gcnn/icosphere.hpp"
#include "gcnn/nearest.hpp"
#include "gcnn/tensor.hpp"

namespace gcnn {

/// Per-node values of one sample on an icosphere level, node-major
/// (values[n * channels + c]). Masked-out nodes hold 0.
struct NodeMap {
  int level = 0;
  std::size_t channels = 0;
  std::vector<double> values;
  std::optional<int> label;
  std::vector<std::uint8_t> mask;  // 1 = valid
  std::string sample_id;

  NodeMap() = default;
  NodeMap(int level, std::size_t channels);

  std::size_t node_count() const { return mask.size(); }
  double& at(std::size_t n, std::size_t c) { return values[n * channels + c]; }
  double at(std::size_t n, std::size_t c) const { return values[n * channels + c]; }
  /// N x C tensor view for the mesh network.
  Tensor as_tensor() const { return Tensor({node_count(), channels}, values); }
  bool operator==(const NodeMap&) const = default;
};

/// Arbitrary closed triangulated sphere carrying per-node values.
struct SourceMesh {
  std::vector<Vec3> positions;
  std::vector<Face> faces;
  std::size_t channels = 1;
  std::vector<double> values;       // node-major
  std::vector<std::uint8_t> mask;   // empty = all valid
};

/// Barycentric interpolation of a source sphere mesh onto an icosphere level.
NodeMap resample_to_icosphere(const SourceMesh& source, const IcosphereLevel& target);

/// Subtracts one scalar per sample: the mean over all masked-in entries.
NodeMap demean(const NodeMap& map);

struct Rotation {
  Eigen::Matrix3d matrix = Eigen::Matrix3d::Identity();

  static Rotation identity() { return {}; }
  static Rotation axis_angle(const Vec3& axis, double degrees);
  /// axis is one of 'x', 'y', 'z'.
  static Rotation about(char axis, double degrees);
  Rotation inverse() const { return {matrix.transpose()}; }
  /// Throws ConfigError unless det = 1 and Q^T Q = I within 1e-10.
  void validate() const;
};

/// Nearest-node pull-back: out[n] = in[nearest(Q^T p_n)], mask likewise.
/// The node mapping is computed once and reused for every sample.
class MapRotator {
 public:
  MapRotator(const IcosphereLevel& level, const Rotation& rotation);
  MapRotator(const IcosphereLevel& level, const NearestNodeIndex& index, const Rotation& rotation);
  NodeMap apply(const NodeMap& map) const;
  const std::vector<NodeIndex>& source_nodes() const { return source_; }

 private:
  int level_;
  std::vector<NodeIndex> source_;
};

NodeMap rotate_map(const NodeMap& map, const IcosphereLevel& level, const Rotation& rotation);

/// Latitude/longitude image of a node map, (height + 2 pad) x (width + 2 pad)
/// x C. Columns wrap in longitude; rows past a pole continue on the
/// antipodal meridian (column shifted by width / 2).
class EquirectangularProjector {
 public:
  EquirectangularProjector(const IcosphereLevel& level, std::size_t width, std::size_t height, std::size_t pad);
  Tensor apply(const NodeMap& map) const;

  std::size_t padded_width() const { return width_ + 2 * pad_; }
  std::size_t padded_height() const { return height_ + 2 * pad_; }
  /// Node sampled by padded pixel (row, col).
  NodeIndex node_at(std::size_t row, std::size_t col) const { return pixel_node_[row * padded_width() + col]; }
  /// Interior pixel centre direction.
  Vec3 pixel_direction(std::size_t v, std::size_t u) const;

 private:
  int level_;
  std::size_t width_, height_, pad_;
  std::vector<NodeIndex> pixel_node_;
};

Tensor project_equirectangular(const NodeMap& map, const IcosphereLevel& level, std::size_t width, std::size_t height,
                               std::size_t pad);

// ---- synthetic data ---------------------------------------------------------

struct Bump {
  Vec3 center;
  double amplitude = 1.0;
  double sigma_degrees = 15.0;
  int channel = -1;  // -1 = every channel
};

struct SynthNoise {
  double field_amplitude = 0.0;    // amplitude of each great-circle cosine term
  int field_terms = 6;             // cosine terms per channel
  int max_frequency = 3;
  double offset_sd = 0.0;          // per-sample global offset
  double center_jitter_degrees = 0.0;
  double amplitude_jitter = 0.0;   // relative, uniform in [1 - j, 1 + j]
  double pixel_sd = 0.0;           // white noise per node
};

struct SynthSpec {
  int level = 4;
  std::size_t samples = 600;
  std::size_t channels = 2;
  double base = 2.5;
  std::vector<std::vector<Bump>> classes;  // bumps of each class
  SynthNoise noise;
  double mask_cap_degrees = 0.0;  // masked-out cap around -x
  std::uint64_t seed = 1;
};

/// Two-class default: each class has one signature bump plus a shared bump,
/// with calibrated noise.
SynthSpec default_synth_spec(int level = 4, std::size_t samples = 600, std::uint64_t seed = 1);
/// Same geometry with every noise source switched off.
SynthSpec noise_free_synth_spec(int level = 4, std::size_t samples = 200, std::uint64_t seed = 1);

std::vector<NodeMap> synthesize_dataset(const IcosphereLevel& level, const SynthSpec& spec);

}  // namespace gcnn
