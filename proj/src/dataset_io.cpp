#include "gcnn/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "gcnn/error.hpp"

namespace gcnn {

namespace {

constexpr char kGsrf[4] = {'G', 'S', 'R', 'F'};
constexpr char kGimg[4] = {'G', 'I', 'M', 'G'};

void write_all(std::ostream& out, detail::ByteWriter& w, const char* what) {
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw DataError(std::string(what) + " write failed");
}

std::uint32_t encode_label(const std::optional<int>& label) {
  if (!label) return kNoLabel;
  if (*label < 0) throw DataError("negative class label");
  return static_cast<std::uint32_t>(*label);
}

std::optional<int> decode_label(std::uint32_t v) {
  if (v == kNoLabel) return std::nullopt;
  return static_cast<int>(v);
}

void check_magic(detail::ByteReader& r, const char (&magic)[4], const char* what) {
  const char* m = r.take(4, "magic");
  if (std::memcmp(m, magic, 4) != 0) throw FormatError(std::string(what) + ": bad magic at offset 0");
  const auto version = r.get<std::uint32_t>("version");
  if (version != 1) throw FormatError(std::string(what) + ": unsupported version " + std::to_string(version) + " at offset 4");
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

}  // namespace

// ---- GSRF ---------------------------------------------------------------------

void save_node_maps(std::ostream& out, const std::vector<NodeMap>& maps) {
  detail::ByteWriter w;
  w.put_bytes(kGsrf, 4);
  w.put<std::uint32_t>(kNodeMapVersion);
  const int level = maps.empty() ? 0 : maps.front().level;
  const std::size_t channels = maps.empty() ? 0 : maps.front().channels;
  w.put<std::uint32_t>(static_cast<std::uint32_t>(level));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(channels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(maps.size()));
  for (const NodeMap& m : maps) {
    if (m.level != level || m.channels != channels) throw DataError("dataset mixes levels or channel counts");
    const std::size_t n = m.node_count();
    if (n != static_cast<std::size_t>(icosphere_node_count(level)) || m.values.size() != n * channels)
      throw DataError("sample '" + m.sample_id + "' has inconsistent extents");
    w.put<std::uint32_t>(encode_label(m.label));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.sample_id.size()));
    w.put_string(m.sample_id);
    std::vector<std::uint8_t> bits((n + 7) / 8, 0);
    for (std::size_t i = 0; i < n; ++i)
      if (m.mask[i]) bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
    w.put_bytes(bits.data(), bits.size());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < channels; ++c) w.put<float>(m.mask[i] ? static_cast<float>(m.at(i, c)) : 0.0f);
  }
  write_all(out, w, "dataset");
}

void save_node_maps(const std::filesystem::path& path, const std::vector<NodeMap>& maps) {
  auto out = open_out(path);
  save_node_maps(out, maps);
}

std::vector<NodeMap> load_node_maps(std::istream& in, std::optional<int> expected_level) {
  const std::vector<char> bytes = detail::slurp(in);
  detail::ByteReader r(bytes, "dataset");
  check_magic(r, kGsrf, "dataset");
  const auto level = r.get<std::uint32_t>("level");
  const auto channels = r.get<std::uint32_t>("channel count");
  const auto count = r.get<std::uint32_t>("sample count");
  if (count > 0 && level > static_cast<std::uint32_t>(kMaxIcosphereLevel))
    throw FormatError("dataset: level " + std::to_string(level) + " outside 0.." + std::to_string(kMaxIcosphereLevel) +
                      " at offset 8");
  if (count > 0 && channels == 0) throw FormatError("dataset: zero channels at offset 12");
  if (expected_level && count > 0 && static_cast<int>(level) != *expected_level)
    throw FormatError("dataset: level " + std::to_string(level) + " does not match requested level " +
                      std::to_string(*expected_level));
  std::vector<NodeMap> maps;
  if (count == 0) {
    if (r.remaining() != 0) r.fail("trailing bytes after empty dataset");
    return maps;
  }
  const std::size_t n = static_cast<std::size_t>(icosphere_node_count(static_cast<int>(level)));
  const std::size_t sample_floats = n * channels;
  for (std::uint32_t s = 0; s < count; ++s) {
    NodeMap m(static_cast<int>(level), channels);
    m.label = decode_label(r.get<std::uint32_t>("label"));
    const auto id_len = r.get<std::uint32_t>("id length");
    m.sample_id = r.get_string(id_len, "sample id");
    const std::size_t body = (n + 7) / 8 + sample_floats * sizeof(float);
    if (r.remaining() < body)
      r.fail("sample " + std::to_string(s) + " truncated: level " + std::to_string(level) + " expects N = " +
             std::to_string(n) + " nodes x " + std::to_string(channels) + " channels");
    const char* bits = r.take((n + 7) / 8, "mask");
    for (std::size_t i = 0; i < n; ++i) m.mask[i] = (static_cast<std::uint8_t>(bits[i / 8]) >> (i % 8)) & 1u;
    const char* raw = r.take(sample_floats * sizeof(float), "values");
    for (std::size_t i = 0; i < sample_floats; ++i) {
      float f;
      std::memcpy(&f, raw + 4 * i, sizeof(float));
      m.values[i] = f;
    }
    maps.push_back(std::move(m));
  }
  if (r.remaining() != 0)
    r.fail("trailing bytes after " + std::to_string(count) + " samples of N = " + std::to_string(n) + " nodes");
  return maps;
}

std::vector<NodeMap> load_node_maps(const std::filesystem::path& path, std::optional<int> expected_level) {
  auto in = open_in(path);
  return load_node_maps(in, expected_level);
}

// ---- CSV ------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return out;
}

bool parse_double(const std::string& s, double& v) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  return ec == std::errc() && p == end;
}

}  // namespace

NodeMap import_node_csv(std::istream& in, std::string sample_id, std::optional<int> label) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    std::vector<double> vals(cells.size());
    bool numeric = true;
    for (std::size_t i = 0; i < cells.size(); ++i) numeric = numeric && parse_double(cells[i], vals[i]);
    if (!numeric) {
      if (rows.empty() && line_no == 1) continue;  // header
      throw FormatError("csv: non-numeric cell on line " + std::to_string(line_no));
    }
    if (cells.size() < 3) throw FormatError("csv: line " + std::to_string(line_no) + " needs node, value(s), mask");
    if (width == 0) width = cells.size();
    if (cells.size() != width) throw FormatError("csv: ragged row on line " + std::to_string(line_no));
    rows.push_back(std::move(vals));
  }
  int level = -1;
  for (int k = 0; k <= kMaxIcosphereLevel; ++k)
    if (static_cast<std::size_t>(icosphere_node_count(k)) == rows.size()) level = k;
  if (level < 0) throw FormatError("csv: " + std::to_string(rows.size()) + " rows is not an icosphere node count");
  NodeMap m(level, width - 2);
  m.label = label;
  m.sample_id = std::move(sample_id);
  std::vector<bool> seen(rows.size(), false);
  for (const auto& row : rows) {
    const double idx = row[0];
    if (idx < 0 || idx >= static_cast<double>(rows.size()) || idx != std::floor(idx))
      throw FormatError("csv: node index " + std::to_string(idx) + " out of range");
    const auto n = static_cast<std::size_t>(idx);
    if (seen[n]) throw FormatError("csv: node " + std::to_string(n) + " listed twice");
    seen[n] = true;
    m.mask[n] = row.back() != 0.0 ? 1 : 0;
    for (std::size_t c = 0; c < m.channels; ++c) m.at(n, c) = m.mask[n] ? row[1 + c] : 0.0;
  }
  return m;
}

NodeMap import_node_csv(const std::filesystem::path& path, std::optional<int> label) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return import_node_csv(in, path.stem().string(), label);
}

// ---- GIMG -----------------------------------------------------------------------

void save_images(std::ostream& out, const std::vector<ImageSample>& images) {
  detail::ByteWriter w;
  w.put_bytes(kGimg, 4);
  w.put<std::uint32_t>(1);
  const Shape dims = images.empty() ? Shape{0, 0, 0} : images.front().image.dims();
  if (dims.size() != 3) throw DataError("images must be H x W x C");
  for (std::size_t d : dims) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(images.size()));
  for (const ImageSample& s : images) {
    if (s.image.dims() != dims) throw DataError("image dataset mixes extents");
    w.put<std::uint32_t>(encode_label(s.label));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(s.sample_id.size()));
    w.put_string(s.sample_id);
    for (double v : s.image.values()) w.put<float>(static_cast<float>(v));
  }
  write_all(out, w, "image dataset");
}

void save_images(const std::filesystem::path& path, const std::vector<ImageSample>& images) {
  auto out = open_out(path);
  save_images(out, images);
}

std::vector<ImageSample> load_images(std::istream& in) {
  const std::vector<char> bytes = detail::slurp(in);
  detail::ByteReader r(bytes, "image dataset");
  check_magic(r, kGimg, "image dataset");
  const auto h = r.get<std::uint32_t>("height");
  const auto w = r.get<std::uint32_t>("width");
  const auto c = r.get<std::uint32_t>("channels");
  const auto count = r.get<std::uint32_t>("sample count");
  const std::size_t floats = std::size_t{h} * w * c;
  if (count > 0 && floats == 0) r.fail("zero image extent");
  std::vector<ImageSample> out;
  for (std::uint32_t s = 0; s < count; ++s) {
    ImageSample img;
    img.label = decode_label(r.get<std::uint32_t>("label"));
    img.sample_id = r.get_string(r.get<std::uint32_t>("id length"), "sample id");
    if (r.remaining() / sizeof(float) < floats) r.fail("image " + std::to_string(s) + " truncated");
    const char* raw = r.take(floats * sizeof(float), "pixels");
    std::vector<double> values(floats);
    for (std::size_t i = 0; i < floats; ++i) {
      float f;
      std::memcpy(&f, raw + 4 * i, sizeof(float));
      values[i] = f;
    }
    img.image = Tensor({h, w, c}, std::move(values));
    out.push_back(std::move(img));
  }
  if (r.remaining() != 0) r.fail("trailing bytes");
  return out;
}

std::vector<ImageSample> load_images(const std::filesystem::path& path) {
  auto in = open_in(path);
  return load_images(in);
}

std::string file_magic(const std::filesystem::path& path) {
  auto in = open_in(path);
  char m[4] = {};
  in.read(m, 4);
  if (in.gcount() != 4) throw FormatError(path.string() + ": shorter than a magic number");
  return std::string(m, 4);
}

}  // namespace gcnn
