#include <doctest.h>

#include <algorithm>
#include <queue>
#include <set>
#include <sstream>

#include "gcnn/error.hpp"
#include "gcnn/icosphere.hpp"

using namespace gcnn;

namespace {

// Plain BFS over adjacency as an independent oracle.
std::vector<NodeIndex> bfs_ring(const IcosphereLevel& lvl, NodeIndex start, int order) {
  std::vector<int> dist(lvl.node_count(), -1);
  std::queue<NodeIndex> q;
  dist[start] = 0;
  q.push(start);
  while (!q.empty()) {
    const NodeIndex u = q.front();
    q.pop();
    if (dist[u] == order) continue;
    for (NodeIndex v : lvl.adjacency[u])
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
  }
  std::vector<NodeIndex> out;
  for (std::size_t i = 0; i < dist.size(); ++i)
    if (dist[i] >= 0) out.push_back(static_cast<NodeIndex>(i));
  return out;
}

}  // namespace

TEST_CASE("base icosahedron") {
  const auto h = IcosphereHierarchy::build(0);
  const auto& l0 = h.level(0);
  CHECK(l0.node_count() == 12);
  CHECK(l0.faces.size() == 20);
  CHECK(l0.edge_count() == 30);
  for (std::size_t n = 0; n < 12; ++n) CHECK(l0.degree(static_cast<NodeIndex>(n)) == 5);
}

TEST_CASE("node counts and level invariants") {
  const auto h = IcosphereHierarchy::build(5);
  const std::int64_t expected[] = {12, 42, 162, 642, 2562, 10242};
  for (int k = 0; k <= 5; ++k) {
    const auto& lvl = h.level(k);
    CHECK(static_cast<std::int64_t>(lvl.node_count()) == expected[k]);
    CHECK(static_cast<std::int64_t>(lvl.node_count()) == icosphere_node_count(k));
    CHECK(lvl.faces.size() == 20u << (2 * k));
    CHECK(lvl.edge_count() == 30u << (2 * k));
    std::size_t pent = 0;
    for (std::size_t n = 0; n < lvl.node_count(); ++n) {
      CHECK(std::abs(lvl.positions[n].norm() - 1.0) < 1e-12);
      const auto d = lvl.degree(static_cast<NodeIndex>(n));
      CHECK((d == 5 || d == 6));
      pent += d == 5;
    }
    CHECK(pent == 12);
  }
}

TEST_CASE("level 6 has 40962 nodes") {
  const auto h = IcosphereHierarchy::build(6);
  CHECK(h.level(6).node_count() == 40962);
}

TEST_CASE("parent-first ordering is bit-exact") {
  const auto h = IcosphereHierarchy::build(4);
  for (int k = 0; k < 4; ++k) {
    const auto& c = h.level(k);
    const auto& f = h.level(k + 1);
    for (std::size_t n = 0; n < c.node_count(); ++n) CHECK(c.positions[n] == f.positions[n]);
  }
}

TEST_CASE("midpoints sit at normalized edge midpoints") {
  const auto h = IcosphereHierarchy::build(2);
  const auto& c = h.level(1);
  const auto& f = h.level(2);
  // Every fine node beyond the parents is adjacent to exactly the two parents of its edge.
  for (std::size_t m = c.node_count(); m < f.node_count(); ++m) {
    std::vector<NodeIndex> parents;
    for (NodeIndex v : f.adjacency[m])
      if (static_cast<std::size_t>(v) < c.node_count()) parents.push_back(v);
    REQUIRE(parents.size() == 2);
    const Vec3 mid = (c.positions[parents[0]] + c.positions[parents[1]]).normalized();
    CHECK((mid - f.positions[m]).norm() < 1e-12);
  }
}

TEST_CASE("adjacency is symmetric, sorted, self-free") {
  const auto h = IcosphereHierarchy::build(3);
  const auto& lvl = h.level(3);
  for (std::size_t i = 0; i < lvl.node_count(); ++i) {
    const auto& a = lvl.adjacency[i];
    CHECK(std::is_sorted(a.begin(), a.end()));
    CHECK(std::find(a.begin(), a.end(), static_cast<NodeIndex>(i)) == a.end());
    for (NodeIndex j : a) {
      const auto& b = lvl.adjacency[j];
      CHECK(std::binary_search(b.begin(), b.end(), static_cast<NodeIndex>(i)));
    }
  }
}

TEST_CASE("mean edge length roughly halves") {
  const auto h = IcosphereHierarchy::build(5);
  for (int k = 0; k < 5; ++k) {
    const double a = h.level(k).mean_edge_length();
    const double b = h.level(k + 1).mean_edge_length();
    CHECK(b < a);
    CHECK(std::abs(b / a - 0.5) < 0.1 * 0.5 + 0.05);
  }
}

TEST_CASE("builds are deterministic") {
  const auto a = IcosphereHierarchy::build(3);
  const auto b = IcosphereHierarchy::build(3);
  CHECK(a.level(3).positions == b.level(3).positions);
  CHECK(a.level(3).faces == b.level(3).faces);
}

TEST_CASE("build rejects bad levels") {
  CHECK_THROWS_AS(IcosphereHierarchy::build(-1), ConfigError);
  CHECK_THROWS_AS(IcosphereHierarchy::build(8), ConfigError);
}

TEST_CASE("neighbor rings") {
  const auto h = IcosphereHierarchy::build(3);
  CHECK(neighbor_ring(h.level(0), 0, 0) == std::vector<NodeIndex>{0});
  for (NodeIndex n = 0; n < 12; ++n) CHECK(neighbor_ring(h.level(0), n, 1).size() == 6);

  const auto& l2 = h.level(2);
  // A hexagon with no pentagon within two rings has 1 + 6 + 12 members.
  std::size_t checked = 0;
  const auto& l3 = h.level(3);
  for (NodeIndex n = 0; n < 642; ++n) {
    const auto r2 = neighbor_ring(l3, n, 2);
    const bool all_hex = std::all_of(r2.begin(), r2.end(), [&](NodeIndex j) { return l3.degree(j) == 6; });
    if (!all_hex) continue;
    CHECK(r2.size() == 19);
    ++checked;
  }
  CHECK(checked > 0);
  CHECK(neighbor_ring(l2, 0, 2).size() == 16);
  for (NodeIndex n : {0, 13, 57, 161})
    for (int r = 0; r <= 3; ++r) CHECK(neighbor_ring(l2, n, r) == bfs_ring(l2, n, r));

  CHECK_THROWS_AS(neighbor_ring(l2, 162, 1), IndexError);
  CHECK_THROWS_AS(neighbor_ring(l2, -1, 1), IndexError);
}

TEST_CASE("pooling groups") {
  const auto h = IcosphereHierarchy::build(6);
  const auto& g0 = h.pooling_groups(0);
  CHECK(g0.size() == 12);
  for (const auto& g : g0) CHECK(g.size() == 6);

  const auto& g1 = h.pooling_groups(1);
  CHECK(g1.size() == 42);
  CHECK(std::count_if(g1.begin(), g1.end(), [](const auto& g) { return g.size() == 6; }) == 12);
  CHECK(std::count_if(g1.begin(), g1.end(), [](const auto& g) { return g.size() == 7; }) == 30);

  for (int k = 0; k < 6; ++k) {
    const auto& groups = h.pooling_groups(k);
    const std::size_t nc = h.level(k).node_count();
    const std::size_t nf = h.level(k + 1).node_count();
    std::vector<int> hits(nf, 0);
    std::size_t sum = 0;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      CHECK(std::find(groups[i].begin(), groups[i].end(), static_cast<NodeIndex>(i)) != groups[i].end());
      CHECK(groups[i].size() == (i < 12 ? 6u : 7u));
      for (NodeIndex j : groups[i]) ++hits[j];
      sum += groups[i].size();
    }
    CHECK(sum == nc + 2 * (nf - nc));
    for (std::size_t j = nc; j < nf; ++j) CHECK(hits[j] == 2);
    CHECK(std::all_of(hits.begin(), hits.end(), [](int v) { return v >= 1; }));
  }
  CHECK_THROWS_AS(h.pooling_groups(6), IndexError);
  CHECK_THROWS_AS(h.pooling_groups(-1), IndexError);
}

TEST_CASE("OBJ export") {
  const auto h = IcosphereHierarchy::build(1);
  std::ostringstream os;
  h.level(1).write_obj(os);
  std::istringstream is(os.str());
  std::string line;
  std::size_t v = 0, f = 0;
  int max_index = 0, min_index = 1 << 30;
  while (std::getline(is, line)) {
    if (line.rfind("v ", 0) == 0) ++v;
    if (line.rfind("f ", 0) == 0) {
      ++f;
      std::istringstream fs(line.substr(2));
      int a;
      while (fs >> a) {
        max_index = std::max(max_index, a);
        min_index = std::min(min_index, a);
      }
    }
  }
  CHECK(v == 42);
  CHECK(f == 80);
  CHECK(min_index == 1);
  CHECK(max_index == 42);
}

TEST_CASE("180 degree z rotation maps nodes onto nodes") {
  const auto h = IcosphereHierarchy::build(3);
  const auto& lvl = h.level(3);
  std::size_t matched = 0;
  for (const Vec3& p : lvl.positions) {
    const Vec3 q(-p.x(), -p.y(), p.z());
    for (const Vec3& r : lvl.positions)
      if ((r - q).norm() < 1e-12) {
        ++matched;
        break;
      }
  }
  CHECK(matched == lvl.node_count());
}
