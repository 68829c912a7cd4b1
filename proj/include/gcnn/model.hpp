#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gcnn/icosphere.hpp"
#include "gcnn/layers.hpp"
#include "gcnn/sampler.hpp"

namespace gcnn {

/// Patch geometry independent of level: spacings are multiples of the mean
/// edge length of whichever level a convolution runs on.
struct PatchTemplate {
  enum class Kind { Rectangular, Circular, Polygonal };
  Kind kind = Kind::Rectangular;
  int sx = 5, sy = 5;
  double spacing_factor = 1.0;
  int rings = 2, points_per_ring = 12;
  double ring_step_factor = 1.0;
  bool include_center = true;
  int order = 1;

  PatchSpec for_level(const IcosphereLevel& level) const;
  bool operator==(const PatchTemplate&) const = default;
};

struct GcnnConfig {
  int input_level = 6;  // 40962 nodes
  int blocks = 5;       // conv/bn/relu/pool complexes; output level = input_level - blocks
  std::size_t channels = 2;
  std::size_t filters = 36;
  std::size_t hidden = 50;
  std::size_t classes = 2;
  PatchTemplate patch;
  std::uint64_t seed = 1;
  bool operator==(const GcnnConfig&) const = default;
};

struct PcnnConfig {
  std::size_t width = 224;
  std::size_t height = 224;
  std::size_t channels = 2;
  std::size_t filters = 64;
  std::size_t hidden = 100;
  std::size_t classes = 2;
  std::size_t conv1_kernel = 11;
  std::size_t conv1_stride = 4;
  std::size_t conv1_pad = 1;
  std::uint64_t seed = 1;
  bool operator==(const PcnnConfig&) const = default;
};

using ModelConfig = std::variant<GcnnConfig, PcnnConfig>;

void to_json(nlohmann::json& j, const PatchTemplate& p);
void from_json(const nlohmann::json& j, PatchTemplate& p);
void to_json(nlohmann::json& j, const GcnnConfig& c);
void from_json(const nlohmann::json& j, GcnnConfig& c);
void to_json(nlohmann::json& j, const PcnnConfig& c);
void from_json(const nlohmann::json& j, PcnnConfig& c);
nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

/// One row of the layer table: what it is and the extents it maps between.
struct LayerDescriptor {
  std::size_t row = 0;  // 1-based table row
  std::string name;
  LayerType type;
  Shape input;
  Shape output;
  std::string geometry;
  bool frozen = false;
};

class Model {
 public:
  Model() = default;
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ModelConfig& config() const { return config_; }
  bool is_gcnn() const { return std::holds_alternative<GcnnConfig>(config_); }
  const Shape& input_shape() const { return input_shape_; }
  std::size_t classes() const;
  std::size_t layer_count() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }
  std::shared_ptr<const IcosphereHierarchy> hierarchy() const { return hierarchy_; }

  std::vector<LayerDescriptor> describe() const;

  /// Runs rows [from, to) on a batch.
  Tensor forward_range(const Tensor& batch, Mode mode, std::size_t from, std::size_t to);
  /// All rows except the terminal softmax.
  Tensor logits(const Tensor& batch, Mode mode);
  Tensor probabilities(const Tensor& batch);

  /// Backpropagates a logits gradient down to the lowest trainable row.
  void backward(const Tensor& grad_logits);
  void zero_grads();
  void sgd_step(double learning_rate);

  /// Marks the first `count` rows frozen (and the rest trainable).
  void freeze_prefix(std::size_t count);
  std::size_t frozen_count() const;
  /// Row index of the first fully connected layer: the transfer split point.
  std::size_t head_start() const;

  /// Rows [from, end) as an independent model (parameters copied).
  Model suffix(std::size_t from) const;
  /// Re-draws the weights of rows [from, end) from `seed` and resets their
  /// batch-norm state.
  void reinitialize_from(std::size_t from, std::uint64_t seed);

  /// Every parameter array (trainable and running statistics) in row order.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);
  std::size_t parameter_value_count() const;

  friend Model build_gcnn(std::shared_ptr<const IcosphereHierarchy>, const GcnnConfig&);
  friend Model build_pcnn(const PcnnConfig&);

 private:
  ModelConfig config_;
  Shape input_shape_;
  std::shared_ptr<const IcosphereHierarchy> hierarchy_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::size_t row_offset_ = 0;  // rows of the original table that precede row 0
};

/// Mesh CNN: blocks x (mesh_conv -> batch_norm -> relu -> mesh_mean_pool),
/// then FC(hidden) -> batch_norm -> relu -> FC(classes) -> softmax.
Model build_gcnn(std::shared_ptr<const IcosphereHierarchy> hierarchy, const GcnnConfig& config);
/// Projection CNN following the VGG-F style stack of the baseline table.
Model build_pcnn(const PcnnConfig& config);

/// Symmetric-uniform fan-based initialization, +-sqrt(6 / (fan_in + fan_out)).
void initialize_parameters(Model& model, std::uint64_t seed, std::size_t from_row = 0);

// ---- parameter audit --------------------------------------------------------

struct ParameterRow {
  std::size_t row = 0;
  std::string name;
  std::size_t weights = 0;  // weights, or scale+shift for batch norm
  std::size_t biases = 0;
  std::size_t statistics = 0;  // running mean + variance
  std::size_t values() const { return weights + biases + statistics; }
  std::size_t bytes() const { return 4 * values(); }
};

struct ParameterReport {
  std::vector<ParameterRow> rows;
  std::size_t total_values() const;
  std::size_t total_bytes() const { return 4 * total_values(); }
};

ParameterReport parameter_report(const Model& model);

/// How a published table counts a row's memory.
enum class TableConvention {
  WeightsOnly,     // filter/weight matrix without bias
  WeightsAndBias,  // weight matrix plus bias vector
  AllValues,       // every stored value (batch norm: scale, shift, mean, var)
};

struct TableExpectation {
  std::size_t row;
  std::string name;
  std::string published;  // as printed, e.g. "127 KB"
  std::size_t expected_bytes;
  std::size_t tolerance_bytes;
  TableConvention convention;
  bool enforced;  // false for rows the table itself gets wrong
};

struct AuditLine {
  TableExpectation expectation;
  std::size_t actual_bytes;
  bool matches;
};

struct AuditResult {
  std::vector<AuditLine> lines;
  std::size_t table_total_bytes = 0;  // sum under the table's conventions
  double published_total_mib = 0.0;
  double total_tolerance = 0.0;  // relative
  bool rows_ok = true;
  bool total_ok = true;
};

std::vector<TableExpectation> gcnn_table_expectations();
std::vector<TableExpectation> pcnn_table_expectations();
/// Compares a default-sized model against its published table.
AuditResult audit_against_table(const Model& model);

}  // namespace gcnn
