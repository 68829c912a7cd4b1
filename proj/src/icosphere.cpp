#include "gcnn/icosphere.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>

#include "gcnn/error.hpp"

namespace gcnn {

namespace {

void build_adjacency(IcosphereLevel& lvl) {
  lvl.adjacency.assign(lvl.positions.size(), {});
  for (const Face& f : lvl.faces) {
    for (int e = 0; e < 3; ++e) {
      const NodeIndex a = f[e];
      const NodeIndex b = f[(e + 1) % 3];
      lvl.adjacency[a].push_back(b);
      lvl.adjacency[b].push_back(a);
    }
  }
  for (auto& nbrs : lvl.adjacency) {
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
  }
}

// Orients every face counter-clockwise seen from outside the sphere.
Face orient_outward(const std::vector<Vec3>& pos, Face f) {
  const Vec3 normal = (pos[f[1]] - pos[f[0]]).cross(pos[f[2]] - pos[f[0]]);
  if (normal.dot(pos[f[0]] + pos[f[1]] + pos[f[2]]) < 0.0) std::swap(f[1], f[2]);
  return f;
}

}  // namespace

std::size_t IcosphereLevel::edge_count() const {
  std::size_t twice = 0;
  for (const auto& nbrs : adjacency) twice += nbrs.size();
  return twice / 2;
}

double IcosphereLevel::mean_edge_length() const {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < adjacency.size(); ++i) {
    for (NodeIndex j : adjacency[i]) {
      if (static_cast<std::size_t>(j) <= i) continue;
      const double c = std::clamp(positions[i].dot(positions[j]), -1.0, 1.0);
      total += std::acos(c);
      ++count;
    }
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

void IcosphereLevel::write_obj(std::ostream& out) const {
  out.precision(17);
  for (const Vec3& p : positions) out << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  for (const Face& f : faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

IcosphereLevel base_icosahedron() {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  // Fixed vertex order: (+-1, +-phi, 0), (0, +-1, +-phi), (+-phi, 0, +-1).
  const std::vector<Vec3> raw = {
      {-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1},
  };
  IcosphereLevel lvl;
  lvl.level = 0;
  for (const Vec3& v : raw) lvl.positions.push_back(v.normalized());

  // Edges of the unnormalized solid have length 2; faces are mutually
  // adjacent vertex triples, enumerated in lexicographic order.
  auto adjacent = [&](int a, int b) { return std::abs((raw[a] - raw[b]).norm() - 2.0) < 1e-9; };
  for (int a = 0; a < 12; ++a)
    for (int b = a + 1; b < 12; ++b)
      for (int c = b + 1; c < 12; ++c)
        if (adjacent(a, b) && adjacent(b, c) && adjacent(a, c))
          lvl.faces.push_back(orient_outward(lvl.positions, {a, b, c}));
  build_adjacency(lvl);
  return lvl;
}

IcosphereLevel subdivide(const IcosphereLevel& coarse) {
  IcosphereLevel fine;
  fine.level = coarse.level + 1;
  fine.positions = coarse.positions;

  const auto n_coarse = static_cast<NodeIndex>(coarse.positions.size());
  std::map<std::pair<NodeIndex, NodeIndex>, NodeIndex> midpoint;
  for (NodeIndex a = 0; a < n_coarse; ++a)
    for (NodeIndex b : coarse.adjacency[a])
      if (a < b) midpoint.emplace(std::make_pair(a, b), 0);

  NodeIndex next = n_coarse;
  fine.positions.reserve(coarse.positions.size() + midpoint.size());
  for (auto& [edge, idx] : midpoint) {
    idx = next++;
    fine.positions.push_back((coarse.positions[edge.first] + coarse.positions[edge.second]).normalized());
  }

  auto mid = [&](NodeIndex a, NodeIndex b) {
    return midpoint.at(a < b ? std::make_pair(a, b) : std::make_pair(b, a));
  };
  fine.faces.reserve(coarse.faces.size() * 4);
  for (const Face& f : coarse.faces) {
    const NodeIndex ab = mid(f[0], f[1]);
    const NodeIndex bc = mid(f[1], f[2]);
    const NodeIndex ca = mid(f[2], f[0]);
    fine.faces.push_back({f[0], ab, ca});
    fine.faces.push_back({f[1], bc, ab});
    fine.faces.push_back({f[2], ca, bc});
    fine.faces.push_back({ab, bc, ca});
  }
  build_adjacency(fine);
  return fine;
}

IcosphereHierarchy IcosphereHierarchy::build(int max_level) {
  if (max_level < 0 || max_level > kMaxIcosphereLevel)
    throw ConfigError("icosphere level " + std::to_string(max_level) + " outside [0, " +
                      std::to_string(kMaxIcosphereLevel) + "]");
  IcosphereHierarchy h;
  h.levels_.push_back(base_icosahedron());
  for (int k = 1; k <= max_level; ++k) h.levels_.push_back(subdivide(h.levels_.back()));

  for (int k = 0; k < max_level; ++k) {
    const IcosphereLevel& fine = h.levels_[k + 1];
    PoolingGroups groups(h.levels_[k].node_count());
    for (std::size_t i = 0; i < groups.size(); ++i) {
      groups[i].reserve(7);
      groups[i].push_back(static_cast<NodeIndex>(i));
      // Fine neighbors of a parent are all midpoints, so indices exceed i.
      for (NodeIndex j : fine.adjacency[i]) groups[i].push_back(j);
    }
    h.groups_.push_back(std::move(groups));
  }
  return h;
}

const IcosphereLevel& IcosphereHierarchy::level(int k) const {
  if (k < 0 || k > max_level())
    throw IndexError("level " + std::to_string(k) + " not built (max " + std::to_string(max_level()) + ")");
  return levels_[k];
}

const PoolingGroups& IcosphereHierarchy::pooling_groups(int coarse_level) const {
  if (coarse_level < 0 || coarse_level >= max_level())
    throw IndexError("no pooling groups for coarse level " + std::to_string(coarse_level));
  return groups_[coarse_level];
}

std::vector<NodeIndex> neighbor_ring(const IcosphereLevel& level, NodeIndex node, int order) {
  const auto n = static_cast<NodeIndex>(level.node_count());
  if (node < 0 || node >= n)
    throw IndexError("node " + std::to_string(node) + " out of range [0, " + std::to_string(n) + ")");
  if (order < 0) throw ConfigError("neighbor ring order must be >= 0");

  std::vector<NodeIndex> visited{node};
  std::vector<NodeIndex> frontier{node};
  for (int r = 0; r < order && !frontier.empty(); ++r) {
    std::vector<NodeIndex> next;
    for (NodeIndex u : frontier)
      for (NodeIndex v : level.adjacency[u])
        if (std::find(visited.begin(), visited.end(), v) == visited.end()) {
          visited.push_back(v);
          next.push_back(v);
        }
    frontier = std::move(next);
  }
  std::sort(visited.begin(), visited.end());
  return visited;
}

}  // namespace gcnn
