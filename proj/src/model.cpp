#include "gcnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gcnn/error.hpp"

namespace gcnn {

using nlohmann::json;

// ---- configuration ----------------------------------------------------------

PatchSpec PatchTemplate::for_level(const IcosphereLevel& level) const {
  const double edge = level.mean_edge_length();
  switch (kind) {
    case Kind::Rectangular: return RectangularPatch{sx, sy, spacing_factor * edge};
    case Kind::Circular: return CircularPatch{rings, points_per_ring, ring_step_factor * edge, include_center};
    case Kind::Polygonal: return PolygonalPatch{order};
  }
  throw ConfigError("unknown patch kind");
}

namespace {

const char* kind_name(PatchTemplate::Kind k) {
  switch (k) {
    case PatchTemplate::Kind::Rectangular: return "rectangular";
    case PatchTemplate::Kind::Circular: return "circular";
    case PatchTemplate::Kind::Polygonal: return "polygonal";
  }
  return "?";
}

PatchTemplate::Kind kind_from(const std::string& s) {
  if (s == "rectangular") return PatchTemplate::Kind::Rectangular;
  if (s == "circular") return PatchTemplate::Kind::Circular;
  if (s == "polygonal") return PatchTemplate::Kind::Polygonal;
  throw ConfigError("unknown patch kind '" + s + "'");
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void to_json(json& j, const PatchTemplate& p) {
  j = json{{"kind", kind_name(p.kind)}, {"sx", p.sx}, {"sy", p.sy}, {"spacing_factor", p.spacing_factor},
           {"rings", p.rings}, {"points_per_ring", p.points_per_ring}, {"ring_step_factor", p.ring_step_factor},
           {"include_center", p.include_center}, {"order", p.order}};
}

void from_json(const json& j, PatchTemplate& p) {
  if (j.contains("kind")) p.kind = kind_from(j.at("kind").get<std::string>());
  read_opt(j, "sx", p.sx);
  read_opt(j, "sy", p.sy);
  read_opt(j, "spacing_factor", p.spacing_factor);
  read_opt(j, "rings", p.rings);
  read_opt(j, "points_per_ring", p.points_per_ring);
  read_opt(j, "ring_step_factor", p.ring_step_factor);
  read_opt(j, "include_center", p.include_center);
  read_opt(j, "order", p.order);
}

void to_json(json& j, const GcnnConfig& c) {
  j = json{{"arch", "gcnn"},         {"input_level", c.input_level}, {"blocks", c.blocks},
           {"channels", c.channels}, {"filters", c.filters},         {"hidden", c.hidden},
           {"classes", c.classes},   {"patch", c.patch},             {"seed", c.seed}};
}

void from_json(const json& j, GcnnConfig& c) {
  read_opt(j, "input_level", c.input_level);
  read_opt(j, "blocks", c.blocks);
  read_opt(j, "channels", c.channels);
  read_opt(j, "filters", c.filters);
  read_opt(j, "hidden", c.hidden);
  read_opt(j, "classes", c.classes);
  read_opt(j, "patch", c.patch);
  read_opt(j, "seed", c.seed);
}

void to_json(json& j, const PcnnConfig& c) {
  j = json{{"arch", "pcnn"},
           {"width", c.width},
           {"height", c.height},
           {"channels", c.channels},
           {"filters", c.filters},
           {"hidden", c.hidden},
           {"classes", c.classes},
           {"conv1_kernel", c.conv1_kernel},
           {"conv1_stride", c.conv1_stride},
           {"conv1_pad", c.conv1_pad},
           {"seed", c.seed}};
}

void from_json(const json& j, PcnnConfig& c) {
  read_opt(j, "width", c.width);
  read_opt(j, "height", c.height);
  read_opt(j, "channels", c.channels);
  read_opt(j, "filters", c.filters);
  read_opt(j, "hidden", c.hidden);
  read_opt(j, "classes", c.classes);
  read_opt(j, "conv1_kernel", c.conv1_kernel);
  read_opt(j, "conv1_stride", c.conv1_stride);
  read_opt(j, "conv1_pad", c.conv1_pad);
  read_opt(j, "seed", c.seed);
}

json config_to_json(const ModelConfig& config) {
  return std::visit([](const auto& c) { return json(c); }, config);
}

ModelConfig config_from_json(const json& j) {
  const std::string arch = j.value("arch", "gcnn");
  if (arch == "gcnn") return j.get<GcnnConfig>();
  if (arch == "pcnn") return j.get<PcnnConfig>();
  throw ConfigError("unknown architecture '" + arch + "'");
}

// ---- model ------------------------------------------------------------------

Model::Model(const Model& other)
    : config_(other.config_),
      input_shape_(other.input_shape_),
      hierarchy_(other.hierarchy_),
      row_offset_(other.row_offset_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    Model copy(other);
    *this = std::move(copy);
  }
  return *this;
}

std::size_t Model::classes() const {
  return std::visit([](const auto& c) { return c.classes; }, config_);
}

std::vector<LayerDescriptor> Model::describe() const {
  std::vector<LayerDescriptor> rows;
  Shape shape = input_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    LayerDescriptor d;
    d.row = row_offset_ + i + 1;
    d.name = layers_[i]->name();
    d.type = layers_[i]->type();
    d.input = shape;
    d.output = layers_[i]->output_shape(shape);
    d.geometry = layers_[i]->geometry();
    d.frozen = layers_[i]->frozen;
    shape = d.output;
    rows.push_back(std::move(d));
  }
  return rows;
}

Tensor Model::forward_range(const Tensor& batch, Mode mode, std::size_t from, std::size_t to) {
  if (from > to || to > layers_.size()) throw IndexError("forward_range outside the layer stack");
  Tensor x = batch;
  for (std::size_t i = from; i < to; ++i) x = layers_[i]->forward(x, mode);
  return x;
}

namespace {
std::size_t logits_end(const std::vector<std::unique_ptr<Layer>>& layers) {
  if (!layers.empty() && layers.back()->type() == LayerType::Softmax) return layers.size() - 1;
  return layers.size();
}
}  // namespace

Tensor Model::logits(const Tensor& batch, Mode mode) { return forward_range(batch, mode, 0, logits_end(layers_)); }

Tensor Model::probabilities(const Tensor& batch) { return kernels::softmax(logits(batch, Mode::Eval)); }

void Model::backward(const Tensor& grad_logits) {
  std::size_t lowest = layers_.size();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i]->frozen) continue;
    const auto ps = layers_[i]->params();
    if (std::any_of(ps.begin(), ps.end(), [](const ParamView& p) { return p.trainable(); })) {
      lowest = i;
      break;
    }
  }
  const std::size_t end = logits_end(layers_);
  if (lowest >= end) return;
  Tensor g = grad_logits;
  for (std::size_t i = end; i-- > lowest;) g = layers_[i]->backward(g, i > lowest);
}

void Model::zero_grads() {
  for (auto& l : layers_)
    for (ParamView& p : l->params())
      if (p.trainable()) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

void Model::sgd_step(double learning_rate) {
  // Check every gradient first so a failure leaves the model untouched.
  for (auto& l : layers_) {
    if (l->frozen) continue;
    for (ParamView& p : l->params())
      if (p.trainable())
        for (double g : p.grad)
          if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + l->name());
  }
  for (auto& l : layers_) {
    if (l->frozen) continue;
    for (ParamView& p : l->params())
      if (p.trainable()) kernels::sgd_step(p.value, p.grad, learning_rate);
  }
}

void Model::freeze_prefix(std::size_t count) {
  if (count > layers_.size())
    throw ConfigError("cannot freeze " + std::to_string(count) + " of " + std::to_string(layers_.size()) + " rows");
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->frozen = i < count;
}

std::size_t Model::frozen_count() const {
  std::size_t n = 0;
  while (n < layers_.size() && layers_[n]->frozen) ++n;
  return n;
}

std::size_t Model::head_start() const {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i]->type() == LayerType::FullyConnected) return i;
  return layers_.size();
}

Model Model::suffix(std::size_t from) const {
  if (from > layers_.size()) throw IndexError("suffix start beyond the layer stack");
  Model m;
  m.config_ = config_;
  m.hierarchy_ = hierarchy_;
  m.row_offset_ = row_offset_ + from;
  Shape shape = input_shape_;
  for (std::size_t i = 0; i < from; ++i) shape = layers_[i]->output_shape(shape);
  m.input_shape_ = shape;
  for (std::size_t i = from; i < layers_.size(); ++i) {
    m.layers_.push_back(layers_[i]->clone());
    m.layers_.back()->frozen = false;
  }
  return m;
}

void Model::reinitialize_from(std::size_t from, std::uint64_t seed) { initialize_parameters(*this, seed, from); }

std::vector<std::vector<double>> Model::snapshot() const {
  std::vector<std::vector<double>> out;
  for (const auto& l : layers_)
    for (const ParamView& p : l->params()) out.emplace_back(p.value.begin(), p.value.end());
  return out;
}

void Model::restore(const std::vector<std::vector<double>>& values) {
  std::size_t k = 0;
  for (auto& l : layers_)
    for (ParamView& p : l->params()) {
      if (k >= values.size() || values[k].size() != p.value.size())
        throw ShapeError("parameter snapshot does not match the model");
      std::copy(values[k].begin(), values[k].end(), p.value.begin());
      ++k;
    }
  if (k != values.size()) throw ShapeError("parameter snapshot has extra arrays");
}

std::size_t Model::parameter_value_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_)
    for (const ParamView& p : l->params()) n += p.value.size();
  return n;
}

// ---- builders ---------------------------------------------------------------

void initialize_parameters(Model& model, std::uint64_t seed, std::size_t from_row) {
  std::mt19937_64 rng(seed);
  auto fill_uniform = [&](Tensor& t, double fan_in, double fan_out) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    for (double& v : t.values()) v = dist(rng);
  };
  for (std::size_t i = from_row; i < model.layer_count(); ++i) {
    Layer& l = model.layer(i);
    if (auto* conv = dynamic_cast<MeshConvLayer*>(&l)) {
      const double p = static_cast<double>(conv->weights.dim(0));
      fill_uniform(conv->weights, p * conv->weights.dim(1), p * conv->weights.dim(2));
      conv->bias.fill(0.0);
    } else if (auto* img = dynamic_cast<ImageConvLayer*>(&l)) {
      const double k2 = static_cast<double>(img->kernel * img->kernel);
      fill_uniform(img->weights, k2 * img->weights.dim(2), k2 * img->weights.dim(3));
      img->bias.fill(0.0);
    } else if (auto* fc = dynamic_cast<FullyConnectedLayer*>(&l)) {
      fill_uniform(fc->weights, static_cast<double>(fc->weights.dim(0)), static_cast<double>(fc->weights.dim(1)));
      fc->bias.fill(0.0);
    } else if (auto* bn = dynamic_cast<BatchNormLayer*>(&l)) {
      bn->state = kernels::BatchNormState::identity(bn->state.features());
    }
  }
  model.zero_grads();
}

Model build_gcnn(std::shared_ptr<const IcosphereHierarchy> hierarchy, const GcnnConfig& config) {
  if (!hierarchy) throw ConfigError("gCNN needs an icosphere hierarchy");
  if (config.blocks < 1) throw ConfigError("gCNN needs at least one convolution block");
  if (config.input_level > hierarchy->max_level())
    throw ConfigError("input level " + std::to_string(config.input_level) + " exceeds the built hierarchy (max " +
                      std::to_string(hierarchy->max_level()) + ")");
  if (config.input_level - config.blocks < 0)
    throw ConfigError("level chain " + std::to_string(config.input_level) + " -> " +
                      std::to_string(config.input_level - config.blocks) + " runs below level 0");
  if (config.channels == 0 || config.filters == 0 || config.hidden == 0 || config.classes < 2)
    throw ConfigError("gCNN needs channels, filters, hidden >= 1 and classes >= 2");

  Model m;
  m.config_ = config;
  m.hierarchy_ = hierarchy;
  const int last_level = config.input_level - config.blocks;
  m.input_shape_ = {hierarchy->level(config.input_level).node_count(), config.channels};

  std::size_t in_ch = config.channels;
  for (int b = 0; b < config.blocks; ++b) {
    const int level = config.input_level - b;
    const std::string k = std::to_string(b + 1);
    const IcosphereLevel& lvl = hierarchy->level(level);
    auto map = std::make_shared<const SamplerIndexMap>(build_index_map(lvl, config.patch.for_level(lvl)));
    m.layers_.push_back(std::make_unique<MeshConvLayer>("Convolution " + k, std::move(map), in_ch, config.filters));
    m.layers_.push_back(std::make_unique<BatchNormLayer>("Batch normalization " + k, config.filters));
    m.layers_.push_back(std::make_unique<ReluLayer>("ReLU " + k));
    m.layers_.push_back(std::make_unique<MeshPoolLayer>("Mean pool " + k, hierarchy, level - 1));
    in_ch = config.filters;
  }
  const std::string h = std::to_string(config.blocks + 1);
  const std::string o = std::to_string(config.blocks + 2);
  const std::size_t flat = hierarchy->level(last_level).node_count() * config.filters;
  m.layers_.push_back(std::make_unique<FullyConnectedLayer>("Fully connected layer " + h, flat, config.hidden));
  m.layers_.push_back(std::make_unique<BatchNormLayer>("Batch normalization " + h, config.hidden));
  m.layers_.push_back(std::make_unique<ReluLayer>("ReLU " + h));
  m.layers_.push_back(std::make_unique<FullyConnectedLayer>("Fully connected layer " + o, config.hidden, config.classes));
  m.layers_.push_back(std::make_unique<SoftmaxLayer>("Softmax classifier"));

  m.describe();  // validates the shape chain
  initialize_parameters(m, config.seed);
  return m;
}

Model build_pcnn(const PcnnConfig& config) {
  if (config.channels == 0 || config.filters == 0 || config.hidden == 0 || config.classes < 2)
    throw ConfigError("pCNN needs channels, filters, hidden >= 1 and classes >= 2");
  Model m;
  m.config_ = config;
  m.input_shape_ = {config.height, config.width, config.channels};
  const std::size_t f = config.filters;
  auto add = [&](std::unique_ptr<Layer> l) { m.layers_.push_back(std::move(l)); };

  add(std::make_unique<ImageConvLayer>("Convolution 1", config.conv1_kernel, config.conv1_stride, config.conv1_pad,
                                       config.channels, f));
  add(std::make_unique<ReluLayer>("ReLU 1"));
  add(std::make_unique<BatchNormLayer>("Normalization 1", f));
  add(std::make_unique<ImagePoolLayer>("Mean pool 1", 2, 2));
  add(std::make_unique<ImageConvLayer>("Convolution 2", 5, 1, 2, f, f));
  add(std::make_unique<ReluLayer>("ReLU 2"));
  add(std::make_unique<BatchNormLayer>("Normalization 2", f));
  add(std::make_unique<ImagePoolLayer>("Mean pool 2", 2, 2));
  for (int k = 3; k <= 5; ++k) {
    add(std::make_unique<ImageConvLayer>("Convolution " + std::to_string(k), 3, 1, 1, f, f));
    add(std::make_unique<ReluLayer>("ReLU " + std::to_string(k)));
  }
  add(std::make_unique<ImagePoolLayer>("Mean pool", 2, 2));

  // Spatial extent entering the classifier; throws ConfigError when the input
  // is too small for the stride chain.
  Shape shape = m.input_shape_;
  for (const auto& l : m.layers_) shape = l->output_shape(shape);
  if (shape[0] == 0 || shape[1] == 0) throw ConfigError("input too small for the pCNN stride chain");
  add(std::make_unique<FullyConnectedLayer>("Fully connected layer 6", shape_volume(shape), config.hidden));
  add(std::make_unique<ReluLayer>("ReLU 6"));
  add(std::make_unique<FullyConnectedLayer>("Fully connected layer 7", config.hidden, config.classes));
  add(std::make_unique<SoftmaxLayer>("Softmax classifier"));

  m.describe();
  initialize_parameters(m, config.seed);
  return m;
}

// ---- parameter audit --------------------------------------------------------

std::size_t ParameterReport::total_values() const {
  std::size_t n = 0;
  for (const auto& r : rows) n += r.values();
  return n;
}

ParameterReport parameter_report(const Model& model) {
  ParameterReport report;
  auto descriptors = model.describe();
  Model& m = const_cast<Model&>(model);  // params() hands out mutable views; nothing is written
  for (std::size_t i = 0; i < m.layer_count(); ++i) {
    const auto ps = m.layer(i).params();
    if (ps.empty()) continue;
    ParameterRow row;
    row.row = descriptors[i].row;
    row.name = descriptors[i].name;
    for (const ParamView& p : ps) {
      switch (p.role) {
        case ParamRole::Weights:
        case ParamRole::Scale:
        case ParamRole::Shift: row.weights += p.value.size(); break;
        case ParamRole::Bias: row.biases += p.value.size(); break;
        case ParamRole::RunningMean:
        case ParamRole::RunningVar: row.statistics += p.value.size(); break;
      }
    }
    report.rows.push_back(row);
  }
  return report;
}

std::vector<TableExpectation> gcnn_table_expectations() {
  using C = TableConvention;
  std::vector<TableExpectation> e;
  e.push_back({1, "Convolution 1", "7 KB", 7200, 0, C::WeightsOnly, true});
  e.push_back({2, "Batch normalization 1", "576 B", 576, 0, C::AllValues, true});
  for (std::size_t k = 2; k <= 5; ++k) {
    const std::size_t row = 4 * (k - 1) + 1;
    e.push_back({row, "Convolution " + std::to_string(k), "127 KB", 129600, 0, C::WeightsOnly, true});
    e.push_back({row + 1, "Batch normalization " + std::to_string(k), "576 B", 576, 0, C::AllValues, true});
  }
  e.push_back({21, "Fully connected layer 6", "295 KB", 302400, 0, C::WeightsOnly, true});
  e.push_back({22, "Batch normalization 6", "800 B", 800, 0, C::AllValues, true});
  e.push_back({24, "Fully connected layer 7", "408 B", 408, 0, C::WeightsAndBias, true});
  return e;
}

std::vector<TableExpectation> pcnn_table_expectations() {
  using C = TableConvention;
  // Published figures are KiB rounded to integers: allow half a KiB.
  return {
      {1, "Convolution 1", "61 KB", 61952, 0, C::WeightsOnly, true},
      {5, "Convolution 2", "400 KB", 400 * 1024, 512, C::WeightsOnly, true},
      {9, "Convolution 3", "144 KB", 144 * 1024, 512, C::WeightsOnly, true},
      {11, "Convolution 4", "144 KB", 144 * 1024, 512, C::WeightsOnly, true},
      {13, "Convolution 5", "144 KB", 144 * 1024, 512, C::WeightsOnly, true},
      {16, "Fully connected layer 6", "900 KB", 900 * 1024, 512, C::WeightsOnly, true},
      // 100 -> 2 holds 200 weights (800 B); the table repeats the gCNN figure.
      {18, "Fully connected layer 7", "408 B", 408, 0, C::WeightsAndBias, false},
  };
}

AuditResult audit_against_table(const Model& model) {
  AuditResult result;
  std::vector<TableExpectation> expected;
  if (model.is_gcnn()) {
    GcnnConfig c = std::get<GcnnConfig>(model.config());
    c.seed = GcnnConfig{}.seed;
    if (!(c == GcnnConfig{})) throw ConfigError("table audit needs the default gCNN configuration");
    expected = gcnn_table_expectations();
    result.published_total_mib = 1.63;
    result.total_tolerance = 0.02;
  } else {
    PcnnConfig c = std::get<PcnnConfig>(model.config());
    c.seed = PcnnConfig{}.seed;
    if (!(c == PcnnConfig{})) throw ConfigError("table audit needs the default pCNN configuration");
    expected = pcnn_table_expectations();
    result.published_total_mib = 1.79;
    result.total_tolerance = 0.05;
  }

  const ParameterReport report = parameter_report(model);
  for (const TableExpectation& e : expected) {
    auto it = std::find_if(report.rows.begin(), report.rows.end(), [&](const ParameterRow& r) { return r.row == e.row; });
    if (it == report.rows.end() || it->name != e.name)
      throw ConfigError("model row " + std::to_string(e.row) + " is not " + e.name);
    std::size_t actual = 0;
    switch (e.convention) {
      case TableConvention::WeightsOnly: actual = 4 * it->weights; break;
      case TableConvention::WeightsAndBias: actual = 4 * (it->weights + it->biases); break;
      case TableConvention::AllValues: actual = it->bytes(); break;
    }
    const std::size_t diff = actual > e.expected_bytes ? actual - e.expected_bytes : e.expected_bytes - actual;
    const bool ok = diff <= e.tolerance_bytes;
    result.lines.push_back({e, actual, ok});
    result.table_total_bytes += actual;
    if (e.enforced && !ok) result.rows_ok = false;
  }
  const double total_mib = static_cast<double>(result.table_total_bytes) / (1024.0 * 1024.0);
  result.total_ok = std::abs(total_mib - result.published_total_mib) <= result.total_tolerance * result.published_total_mib;
  return result;
}

}  // namespace gcnn
