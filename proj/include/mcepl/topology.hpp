#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mcepl/error.hpp"
#include "mcepl/rng.hpp"

namespace mcepl {

/// Static undirected communication graph. Immutable once built; the
/// constructor rejects self-loops, asymmetry and disconnected graphs.
class Graph {
 public:
  Graph() = default;

  Graph(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) : n_(n), adj_(n * n, 0) {
    for (auto [i, j] : edges) {
      if (i >= n || j >= n) throw ArgumentError("edge endpoint out of range");
      if (i == j) throw ArgumentError("self-loop at node " + std::to_string(i));
      adj_[i * n + j] = adj_[j * n + i] = 1;
    }
    build_neighbors();
    if (!connected()) throw ArgumentError("graph is not connected");
  }

  std::size_t size() const noexcept { return n_; }
  bool adjacent(std::size_t i, std::size_t j) const { return adj_.at(i * n_ + j) != 0; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return nbrs_.at(i); }
  std::size_t degree(std::size_t i) const { return nbrs_.at(i).size(); }

  std::size_t edge_count() const noexcept {
    std::size_t e = 0;
    for (const auto& nb : nbrs_) e += nb.size();
    return e / 2;
  }

  /// Edges with i < j in lexicographic order.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < n_; ++i) {
      for (auto j : nbrs_[i]) {
        if (i < j) out.emplace_back(i, j);
      }
    }
    return out;
  }

  bool connected() const { return is_connected(n_, adj_); }

  static bool is_connected(std::size_t n, const std::vector<std::uint8_t>& adj) {
    if (n == 0) return false;
    std::vector<std::uint8_t> seen(n, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    std::size_t reached = 1;
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      for (std::size_t v = 0; v < n; ++v) {
        if (adj[u * n + v] && !seen[v]) {
          seen[v] = 1;
          ++reached;
          stack.push_back(v);
        }
      }
    }
    return reached == n;
  }

  friend bool operator==(const Graph& a, const Graph& b) { return a.n_ == b.n_ && a.adj_ == b.adj_; }

 private:
  void build_neighbors() {
    nbrs_.assign(n_, {});
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        if (adj_[i * n_ + j]) nbrs_[i].push_back(j);
      }
    }
  }

  std::size_t n_ = 0;
  std::vector<std::uint8_t> adj_;
  std::vector<std::vector<std::size_t>> nbrs_;
};

/// True iff the symmetric adjacency spans a single component.
inline bool is_connected(const Graph& g) { return g.connected(); }

inline Graph ring(std::size_t n) {
  if (n < 3) throw ArgumentError("ring topology needs at least 3 nodes");
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
  return Graph(n, edges);
}

/// G(n, p) by rejection: draws are repeated from the same stream until one
/// is connected.
inline Graph erdos_renyi(std::size_t n, double p, std::uint64_t seed, std::size_t max_retries = 100) {
  if (n < 2) throw ArgumentError("Erdos-Renyi graph needs at least 2 nodes");
  if (!(p > 0.0 && p <= 1.0)) throw ArgumentError("edge probability must lie in (0, 1]");
  auto eng = make_engine(seed, "topology", n);
  for (std::size_t draw = 1; draw <= max_retries; ++draw) {
    std::vector<std::uint8_t> adj(n * n, 0);
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (uniform01(eng) < p) {
          adj[i * n + j] = adj[j * n + i] = 1;
          edges.emplace_back(i, j);
        }
      }
    }
    if (Graph::is_connected(n, adj)) return Graph(n, edges);
  }
  throw GenerationError("no connected Erdos-Renyi draw after " + std::to_string(max_retries) +
                        " draws (n=" + std::to_string(n) + ", p=" + std::to_string(p) + ")");
}

// Edge-list text format: one "i j" pair per line, 0-indexed. The node count
// is carried by a leading "# nodes <n>" line so isolated trailing ids survive.

inline void write_edge_list(std::ostream& os, const Graph& g) {
  os << "# nodes " << g.size() << '\n';
  for (auto [i, j] : g.edges()) os << i << ' ' << j << '\n';
}

inline Graph read_edge_list(std::istream& is) {
  std::size_t n = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string hash, key;
      ls >> hash >> key;
      if (key == "nodes") ls >> n;
      continue;
    }
    long long i = -1, j = -1;
    if (!(ls >> i >> j) || i < 0 || j < 0) {
      throw InputError("edge list line " + std::to_string(lineno) + ": expected two node ids");
    }
    edges.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    n = std::max({n, static_cast<std::size_t>(i) + 1, static_cast<std::size_t>(j) + 1});
  }
  return Graph(n, edges);
}

}  // namespace mcepl
