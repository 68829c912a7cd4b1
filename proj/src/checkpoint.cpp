#include "gcnn/checkpoint.hpp"

#include <fstream>

#include <zlib.h>

#include "binary_io.hpp"
#include "gcnn/error.hpp"

namespace gcnn {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'G', 'C', 'N', 'N'};

std::uint32_t crc_of(const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

json spec_block(const Model& model) {
  json rows = json::array();
  json hashes = json::array();
  for (const LayerDescriptor& d : model.describe()) {
    rows.push_back({{"row", d.row}, {"name", d.name}, {"type", layer_type_name(d.type)}, {"output", d.output},
                    {"frozen", d.frozen}});
  }
  for (std::size_t i = 0; i < model.layer_count(); ++i)
    if (const auto* conv = dynamic_cast<const MeshConvLayer*>(&model.layer(i)))
      hashes.push_back({{"row", i + 1},
                        {"level", conv->index_map().level},
                        {"patch", describe_patch(conv->index_map().patch)},
                        {"hash", conv->index_map().content_hash()}});
  json j{{"config", config_to_json(model.config())}, {"rows", rows}, {"index_maps", hashes}};
  if (model.is_gcnn()) {
    const auto& c = std::get<GcnnConfig>(model.config());
    j["hierarchy"] = {{"input_level", c.input_level}, {"output_level", c.input_level - c.blocks}};
  }
  return j;
}

std::vector<std::vector<float>> row_blobs(const Model& model) {
  std::vector<std::vector<float>> blobs(model.layer_count());
  for (std::size_t i = 0; i < model.layer_count(); ++i)
    for (const ParamView& p : const_cast<Model&>(model).layer(i).params())
      for (double v : p.value) blobs[i].push_back(static_cast<float>(v));
  return blobs;
}

}  // namespace

void save_checkpoint(const Model& model, std::ostream& out) {
  if (model.describe().front().row != 1) throw ConfigError("only complete models can be checkpointed");
  detail::ByteWriter w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  const std::string spec = spec_block(model).dump();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.size()));
  w.put_string(spec);
  for (const auto& blob : row_blobs(model)) {
    w.put<std::uint64_t>(blob.size());
    w.put_bytes(blob.data(), blob.size() * sizeof(float));
  }
  const auto& bytes = w.bytes();
  const std::uint32_t crc = crc_of(bytes.data() + 8, bytes.size() - 8);
  w.put<std::uint32_t>(crc);
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw DataError("checkpoint write failed");
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  save_checkpoint(model, out);
}

namespace {

Model parse_checkpoint(const std::vector<char>& bytes, std::shared_ptr<const IcosphereHierarchy> hierarchy) {
  detail::ByteReader r(bytes, "checkpoint");
  if (std::memcmp(r.take(4, "magic"), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic at offset 0");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version) + " at offset 4");

  const auto spec_len = r.get<std::uint32_t>("spec length");
  const std::size_t spec_at = r.offset();
  json spec;
  try {
    spec = json::parse(r.get_string(spec_len, "spec block"));
  } catch (const json::exception& e) {
    throw FormatError("checkpoint: malformed spec block at offset " + std::to_string(spec_at) + ": " + e.what());
  }

  Model model;
  try {
    const ModelConfig config = config_from_json(spec.at("config"));
    if (const auto* g = std::get_if<GcnnConfig>(&config)) {
      if (!hierarchy || hierarchy->max_level() < g->input_level)
        hierarchy = std::make_shared<const IcosphereHierarchy>(IcosphereHierarchy::build(g->input_level));
      model = build_gcnn(hierarchy, *g);
    } else {
      model = build_pcnn(std::get<PcnnConfig>(config));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: invalid spec block: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: spec block describes an invalid model: ") + e.what());
  }

  if (!spec.is_object() || !spec.contains("rows") || !spec["rows"].is_array() || !spec.contains("index_maps") ||
      !spec["index_maps"].is_array())
    throw FormatError("checkpoint: spec block lacks rows or index maps");
  const json& rows = spec["rows"];
  if (rows.size() != model.layer_count())
    throw FormatError("checkpoint: spec lists " + std::to_string(rows.size()) + " rows, model has " +
                      std::to_string(model.layer_count()));
  for (const json& h : spec["index_maps"]) {
    if (!h.is_object() || !h.contains("row") || !h.contains("hash") || !h["row"].is_number_unsigned() ||
        !h["hash"].is_number_unsigned())
      throw FormatError("checkpoint: malformed index map entry");
    const std::size_t row = h["row"].get<std::size_t>();
    const auto* conv = row >= 1 && row <= model.layer_count() ? dynamic_cast<const MeshConvLayer*>(&model.layer(row - 1))
                                                              : nullptr;
    if (!conv) throw FormatError("checkpoint: index map recorded for non-convolution row " + std::to_string(row));
    if (conv->index_map().content_hash() != h["hash"].get<std::uint64_t>())
      throw FormatError("checkpoint: rebuilt sampler geometry of row " + std::to_string(row) +
                        " does not match the stored hash");
  }

  // Read every blob before touching the model.
  std::vector<std::vector<double>> snapshot;
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    const std::size_t blob_at = r.offset();
    const auto count = r.get<std::uint64_t>("parameter count");
    auto params = model.layer(i).params();
    std::size_t expected = 0;
    for (const ParamView& p : params) expected += p.value.size();
    if (count != expected)
      throw FormatError("checkpoint: row " + std::to_string(i + 1) + " stores " + std::to_string(count) +
                        " values, expected " + std::to_string(expected) + " at offset " + std::to_string(blob_at));
    if (count > r.remaining() / sizeof(float)) r.fail("truncated parameter blob of row " + std::to_string(i + 1));
    const char* raw = r.take(count * sizeof(float), "parameter blob");
    std::size_t k = 0;
    for (const ParamView& p : params) {
      std::vector<double> values(p.value.size());
      for (double& v : values) {
        float f;
        std::memcpy(&f, raw + 4 * k++, sizeof(float));
        v = f;
      }
      snapshot.push_back(std::move(values));
    }
  }
  const std::size_t crc_at = r.offset();
  const auto stored_crc = r.get<std::uint32_t>("checksum");
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes after checksum at offset " + std::to_string(r.offset()));
  const std::uint32_t actual = crc_of(bytes.data() + 8, crc_at - 8);
  if (actual != stored_crc) throw FormatError("checkpoint: checksum mismatch at offset " + std::to_string(crc_at));

  model.restore(snapshot);
  std::size_t frozen = 0;
  while (frozen < rows.size() && rows[frozen].is_object() && rows[frozen].value("frozen", false)) ++frozen;
  model.freeze_prefix(frozen);
  return model;
}

}  // namespace

Model load_checkpoint(std::istream& in, std::shared_ptr<const IcosphereHierarchy> hierarchy) {
  const std::vector<char> bytes = detail::slurp(in);
  try {
    return parse_checkpoint(bytes, std::move(hierarchy));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: invalid spec block: ") + e.what());
  }
}

Model load_checkpoint(const std::filesystem::path& path, std::shared_ptr<const IcosphereHierarchy> hierarchy) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return load_checkpoint(in, std::move(hierarchy));
}

}  // namespace gcnn
