#include "gcnn/surfdata.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "gcnn/error.hpp"

namespace gcnn {

NodeMap::NodeMap(int level, std::size_t channels)
    : level(level),
      channels(channels),
      values(static_cast<std::size_t>(icosphere_node_count(level)) * channels, 0.0),
      mask(static_cast<std::size_t>(icosphere_node_count(level)), 1) {}

// ---- resampling -------------------------------------------------------------

namespace {

double triple(const Vec3& a, const Vec3& b, const Vec3& c) { return a.dot(b.cross(c)); }

void check_sphere_mesh(const SourceMesh& src) {
  const std::size_t v = src.positions.size();
  if (v < 4 || src.faces.empty()) throw GeometryError("source mesh needs at least 4 nodes and one face");
  if (src.channels == 0 || src.values.size() != v * src.channels)
    throw DataError("source mesh holds " + std::to_string(src.values.size()) + " values, expected " +
                    std::to_string(v * src.channels));
  if (!src.mask.empty() && src.mask.size() != v) throw DataError("source mask length differs from node count");
  std::set<std::pair<NodeIndex, NodeIndex>> edges;
  for (const Face& f : src.faces)
    for (int k = 0; k < 3; ++k) {
      const NodeIndex a = f[k], b = f[(k + 1) % 3];
      if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= v || static_cast<std::size_t>(b) >= v || a == b)
        throw GeometryError("source face references invalid node");
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  const long euler = static_cast<long>(v) - static_cast<long>(edges.size()) + static_cast<long>(src.faces.size());
  if (euler != 2) throw GeometryError("source mesh is not a closed sphere (V - E + F = " + std::to_string(euler) + ")");
}

}  // namespace

NodeMap resample_to_icosphere(const SourceMesh& src, const IcosphereLevel& target) {
  check_sphere_mesh(src);
  std::vector<Vec3> pos(src.positions.size());
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const double norm = src.positions[i].norm();
    if (!(norm > 0.0)) throw GeometryError("source node " + std::to_string(i) + " sits at the origin");
    pos[i] = src.positions[i] / norm;
  }
  std::vector<std::vector<std::size_t>> faces_of(pos.size());
  for (std::size_t f = 0; f < src.faces.size(); ++f)
    for (NodeIndex v : src.faces[f]) faces_of[v].push_back(f);

  const NearestNodeIndex index{std::span<const Vec3>(pos)};
  const std::size_t c_count = src.channels;
  NodeMap out(target.level, c_count);

  // Barycentric weights of p in face f, or nullopt when p lies outside.
  auto weights_in = [&](const Vec3& p, std::size_t f) -> std::optional<std::array<double, 3>> {
    const Vec3& a = pos[src.faces[f][0]];
    const Vec3& b = pos[src.faces[f][1]];
    const Vec3& c = pos[src.faces[f][2]];
    if (p.dot(a + b + c) <= 0.0) return std::nullopt;
    std::array<double, 3> w{triple(p, b, c), triple(a, p, c), triple(a, b, p)};
    const double sum = w[0] + w[1] + w[2];
    if (std::abs(sum) < 1e-300) return std::nullopt;
    constexpr double tol = -1e-12;
    for (double& x : w) x /= sum;
    if (w[0] < tol || w[1] < tol || w[2] < tol) return std::nullopt;
    return w;
  };

  for (std::size_t n = 0; n < target.node_count(); ++n) {
    const Vec3& p = target.positions[n];
    const NodeIndex near = index.nearest(p);
    if ((pos[near] - p).norm() < 1e-9) {
      for (std::size_t c = 0; c < c_count; ++c) out.at(n, c) = src.values[near * c_count + c];
      out.mask[n] = src.mask.empty() ? 1 : src.mask[near];
      if (!out.mask[n])
        for (std::size_t c = 0; c < c_count; ++c) out.at(n, c) = 0.0;
      continue;
    }
    // Search the faces around the nearest node, widening by one ring of
    // nodes at a time, then everything.
    std::optional<std::array<double, 3>> w;
    std::size_t face = 0;
    std::vector<NodeIndex> frontier{near};
    std::set<NodeIndex> seen{near};
    std::set<std::size_t> tried;
    for (int ring = 0; ring < 3 && !w; ++ring) {
      std::vector<NodeIndex> next;
      for (NodeIndex v : frontier)
        for (std::size_t f : faces_of[v]) {
          if (!w && tried.insert(f).second) {
            w = weights_in(p, f);
            if (w) face = f;
          }
          for (NodeIndex u : src.faces[f])
            if (seen.insert(u).second) next.push_back(u);
        }
      frontier = std::move(next);
    }
    for (std::size_t f = 0; f < src.faces.size() && !w; ++f) {
      w = weights_in(p, f);
      if (w) face = f;
    }
    if (!w) throw GeometryError("no source triangle contains target node " + std::to_string(n));

    bool valid = true;
    for (int k = 0; k < 3; ++k) {
      const NodeIndex v = src.faces[face][k];
      if ((*w)[k] > 1e-12 && !src.mask.empty() && !src.mask[v]) valid = false;
    }
    out.mask[n] = valid ? 1 : 0;
    for (std::size_t c = 0; c < c_count; ++c) {
      double acc = 0.0;
      if (valid)
        for (int k = 0; k < 3; ++k) acc += (*w)[k] * src.values[src.faces[face][k] * c_count + c];
      out.at(n, c) = acc;
    }
  }
  return out;
}

// ---- demeaning ----------------------------------------------------------------

NodeMap demean(const NodeMap& map) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < map.node_count(); ++n)
    if (map.mask[n])
      for (std::size_t c = 0; c < map.channels; ++c) {
        sum += map.at(n, c);
        ++count;
      }
  if (count == 0) throw DataError("sample '" + map.sample_id + "' has no masked-in nodes");
  const double mean = sum / static_cast<double>(count);
  NodeMap out = map;
  for (std::size_t n = 0; n < map.node_count(); ++n)
    for (std::size_t c = 0; c < map.channels; ++c) out.at(n, c) = map.mask[n] ? map.at(n, c) - mean : 0.0;
  return out;
}

// ---- rotation -------------------------------------------------------------------

Rotation Rotation::axis_angle(const Vec3& axis, double degrees) {
  const double norm = axis.norm();
  if (!(norm > 0.0)) throw ConfigError("rotation axis must be non-zero");
  const double rad = degrees * std::numbers::pi / 180.0;
  return {Eigen::AngleAxisd(rad, axis / norm).toRotationMatrix()};
}

Rotation Rotation::about(char axis, double degrees) {
  switch (axis) {
    case 'x': case 'X': return axis_angle(Vec3::UnitX(), degrees);
    case 'y': case 'Y': return axis_angle(Vec3::UnitY(), degrees);
    case 'z': case 'Z': return axis_angle(Vec3::UnitZ(), degrees);
  }
  throw ConfigError(std::string("rotation axis must be x, y or z, got '") + axis + "'");
}

void Rotation::validate() const {
  if (std::abs(matrix.determinant() - 1.0) > 1e-10) throw ConfigError("rotation determinant differs from 1");
  if ((matrix.transpose() * matrix - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-10)
    throw ConfigError("rotation matrix is not orthonormal");
}

MapRotator::MapRotator(const IcosphereLevel& level, const Rotation& rotation)
    : MapRotator(level, NearestNodeIndex(level), rotation) {}

MapRotator::MapRotator(const IcosphereLevel& level, const NearestNodeIndex& index, const Rotation& rotation)
    : level_(level.level), source_(level.node_count()) {
  rotation.validate();
  const Eigen::Matrix3d qt = rotation.matrix.transpose();
  const bool identity = rotation.matrix == Eigen::Matrix3d::Identity();
  for (std::size_t n = 0; n < source_.size(); ++n)
    source_[n] = identity ? static_cast<NodeIndex>(n) : index.nearest(qt * level.positions[n]);
}

NodeMap MapRotator::apply(const NodeMap& map) const {
  if (map.level != level_ || map.node_count() != source_.size())
    throw DataError("rotator built for level " + std::to_string(level_) + ", sample is level " +
                    std::to_string(map.level));
  NodeMap out = map;
  for (std::size_t n = 0; n < source_.size(); ++n) {
    const std::size_t s = static_cast<std::size_t>(source_[n]);
    out.mask[n] = map.mask[s];
    for (std::size_t c = 0; c < map.channels; ++c) out.at(n, c) = map.at(s, c);
  }
  return out;
}

NodeMap rotate_map(const NodeMap& map, const IcosphereLevel& level, const Rotation& rotation) {
  return MapRotator(level, rotation).apply(map);
}

// ---- projection -----------------------------------------------------------------

EquirectangularProjector::EquirectangularProjector(const IcosphereLevel& level, std::size_t width, std::size_t height,
                                                   std::size_t pad)
    : level_(level.level), width_(width), height_(height), pad_(pad) {
  if (width < 4 || height < 4) throw ConfigError("projection needs width and height >= 4");
  if (pad > height || pad > width) throw ConfigError("projection padding exceeds the image size");
  const NearestNodeIndex index(level);
  std::vector<NodeIndex> interior(width * height);
  for (std::size_t v = 0; v < height; ++v)
    for (std::size_t u = 0; u < width; ++u) interior[v * width + u] = index.nearest(pixel_direction(v, u));

  const long w = static_cast<long>(width), h = static_cast<long>(height), p = static_cast<long>(pad);
  pixel_node_.resize(padded_width() * padded_height());
  for (long r = 0; r < h + 2 * p; ++r)
    for (long col = 0; col < w + 2 * p; ++col) {
      long v = r - p, u = col - p;
      if (v < 0) {
        v = -1 - v;
        u += w / 2;
      } else if (v >= h) {
        v = 2 * h - 1 - v;
        u += w / 2;
      }
      u = ((u % w) + w) % w;
      pixel_node_[static_cast<std::size_t>(r) * padded_width() + static_cast<std::size_t>(col)] =
          interior[static_cast<std::size_t>(v * w + u)];
    }
}

Vec3 EquirectangularProjector::pixel_direction(std::size_t v, std::size_t u) const {
  const double lon = 2.0 * std::numbers::pi * (static_cast<double>(u) + 0.5) / static_cast<double>(width_) - std::numbers::pi;
  const double lat = std::numbers::pi / 2.0 - std::numbers::pi * (static_cast<double>(v) + 0.5) / static_cast<double>(height_);
  return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

Tensor EquirectangularProjector::apply(const NodeMap& map) const {
  if (map.level != level_) throw DataError("projector built for level " + std::to_string(level_));
  Tensor img({padded_height(), padded_width(), map.channels});
  for (std::size_t i = 0; i < pixel_node_.size(); ++i) {
    const std::size_t n = static_cast<std::size_t>(pixel_node_[i]);
    if (!map.mask[n]) continue;
    for (std::size_t c = 0; c < map.channels; ++c) img[i * map.channels + c] = map.at(n, c);
  }
  return img;
}

Tensor project_equirectangular(const NodeMap& map, const IcosphereLevel& level, std::size_t width, std::size_t height,
                               std::size_t pad) {
  return EquirectangularProjector(level, width, height, pad).apply(map);
}

// ---- synthetic data -----------------------------------------------------------

namespace {

Vec3 from_lat_lon(double lat_deg, double lon_deg) {
  const double lat = lat_deg * std::numbers::pi / 180.0, lon = lon_deg * std::numbers::pi / 180.0;
  return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (;;) {
    Vec3 v(g(rng), g(rng), g(rng));
    const double n = v.norm();
    if (n > 1e-9) return v / n;
  }
}

// Rotates `center` by an angle drawn uniformly in [0, max] about a random
// axis perpendicular to it.
Vec3 jitter(const Vec3& center, double max_degrees, std::mt19937_64& rng) {
  if (max_degrees <= 0.0) return center;
  Vec3 axis = random_unit(rng);
  axis -= axis.dot(center) * center;
  if (axis.norm() < 1e-9) return center;
  std::uniform_real_distribution<double> angle(0.0, max_degrees);
  return Rotation::axis_angle(axis, angle(rng)).matrix * center;
}

}  // namespace

SynthSpec default_synth_spec(int level, std::size_t samples, std::uint64_t seed) {
  SynthSpec s = noise_free_synth_spec(level, samples, seed);
  s.noise.field_amplitude = 0.3;
  s.noise.field_terms = 6;
  s.noise.max_frequency = 3;
  s.noise.offset_sd = 0.25;
  s.noise.center_jitter_degrees = 22.0;
  s.noise.amplitude_jitter = 0.5;
  s.noise.pixel_sd = 0.13;
  return s;
}

SynthSpec noise_free_synth_spec(int level, std::size_t samples, std::uint64_t seed) {
  SynthSpec s;
  s.level = level;
  s.samples = samples;
  s.seed = seed;
  const Bump shared{from_lat_lon(-30.0, -120.0), 0.6, 20.0, -1};
  s.classes = {
      {shared, Bump{from_lat_lon(25.0, 20.0), 1.0, 14.0, 0}, Bump{from_lat_lon(25.0, 20.0), 0.5, 14.0, 1}},
      {shared, Bump{from_lat_lon(25.0, 70.0), 1.0, 14.0, 0}, Bump{from_lat_lon(25.0, 70.0), 0.5, 14.0, 1}},
  };
  return s;
}

std::vector<NodeMap> synthesize_dataset(const IcosphereLevel& level, const SynthSpec& spec) {
  if (spec.level != level.level) throw ConfigError("synthesis level differs from the mesh level");
  if (spec.classes.size() < 2) throw ConfigError("synthesis needs at least two classes");
  if (spec.channels == 0) throw ConfigError("synthesis needs at least one channel");
  const SynthNoise& nz = spec.noise;
  if (nz.field_amplitude < 0 || nz.offset_sd < 0 || nz.pixel_sd < 0 || nz.center_jitter_degrees < 0 ||
      nz.amplitude_jitter < 0 || nz.amplitude_jitter > 1 || nz.field_terms < 0 || nz.max_frequency < 1)
    throw ConfigError("invalid synthesis noise specification");
  for (const auto& bumps : spec.classes)
    for (const Bump& b : bumps) {
      if (!(b.sigma_degrees > 0.0) || !(b.center.norm() > 0.0)) throw ConfigError("invalid bump specification");
      if (b.channel >= static_cast<int>(spec.channels)) throw ConfigError("bump channel out of range");
    }

  const std::size_t n_nodes = level.node_count();
  const std::size_t k = spec.classes.size();
  std::vector<NodeMap> out;
  out.reserve(spec.samples);
  const Vec3 cap_center(-1.0, 0.0, 0.0);
  const double cap_cos = std::cos(spec.mask_cap_degrees * std::numbers::pi / 180.0);

  for (std::size_t i = 0; i < spec.samples; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
    std::mt19937_64 rng(seq);
    const int label = static_cast<int>(i % k);
    NodeMap m(level.level, spec.channels);
    m.label = label;
    m.sample_id = "synth-" + std::to_string(i);

    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double offset = nz.offset_sd * gauss(rng);
    for (double& v : m.values) v = spec.base + offset;

    for (const Bump& b : spec.classes[static_cast<std::size_t>(label)]) {
      const Vec3 c = jitter(b.center.normalized(), nz.center_jitter_degrees, rng);
      const double amp = b.amplitude * (1.0 + nz.amplitude_jitter * (2.0 * unit(rng) - 1.0));
      const double sigma = b.sigma_degrees * std::numbers::pi / 180.0;
      for (std::size_t n = 0; n < n_nodes; ++n) {
        const double theta = std::acos(std::clamp(level.positions[n].dot(c), -1.0, 1.0));
        const double v = amp * std::exp(-theta * theta / (2.0 * sigma * sigma));
        for (std::size_t ch = 0; ch < spec.channels; ++ch)
          if (b.channel < 0 || static_cast<std::size_t>(b.channel) == ch) m.at(n, ch) += v;
      }
    }

    if (nz.field_amplitude > 0.0)
      for (std::size_t ch = 0; ch < spec.channels; ++ch)
        for (int t = 0; t < nz.field_terms; ++t) {
          const Vec3 axis = random_unit(rng);
          const double freq = 1 + static_cast<int>(unit(rng) * nz.max_frequency) % nz.max_frequency;
          const double phase = 2.0 * std::numbers::pi * unit(rng);
          const double amp = nz.field_amplitude * gauss(rng);
          for (std::size_t n = 0; n < n_nodes; ++n) {
            const double theta = std::acos(std::clamp(level.positions[n].dot(axis), -1.0, 1.0));
            m.at(n, ch) += amp * std::cos(freq * theta + phase);
          }
        }

    if (nz.pixel_sd > 0.0)
      for (double& v : m.values) v += nz.pixel_sd * gauss(rng);

    if (spec.mask_cap_degrees > 0.0)
      for (std::size_t n = 0; n < n_nodes; ++n)
        if (level.positions[n].dot(cap_center) >= cap_cos) {
          m.mask[n] = 0;
          for (std::size_t ch = 0; ch < spec.channels; ++ch) m.at(n, ch) = 0.0;
        }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace gcnn
