#include "nash/graph.hpp"

#include <algorithm>
#include <string>

#include "nash/error.hpp"

namespace nash {

using Eigen::Index;

Graph Graph::chain(Index p) {
  Graph g;
  g.adjacency_.resize(static_cast<std::size_t>(p));
  for (Index j = 0; j + 1 < p; ++j) {
    g.adjacency_[j].push_back(j + 1);
    g.adjacency_[j + 1].push_back(j);
  }
  for (auto& nb : g.adjacency_) std::sort(nb.begin(), nb.end());
  g.kind_ = GraphKind::Chain;
  return g;
}

Graph Graph::grid4(Index height, Index width) {
  Graph g;
  g.adjacency_.resize(static_cast<std::size_t>(height * width));
  for (Index r = 0; r < height; ++r) {
    for (Index c = 0; c < width; ++c) {
      auto& nb = g.adjacency_[r * width + c];
      if (r > 0) nb.push_back((r - 1) * width + c);
      if (c > 0) nb.push_back(r * width + c - 1);
      if (c + 1 < width) nb.push_back(r * width + c + 1);
      if (r + 1 < height) nb.push_back((r + 1) * width + c);
    }
  }
  g.kind_ = GraphKind::Grid4;
  g.height_ = height;
  g.width_ = width;
  return g;
}

Graph Graph::from_edges(Index p, const std::vector<std::pair<Index, Index>>& edges) {
  Graph g;
  g.adjacency_.resize(static_cast<std::size_t>(p));
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= p || b >= p) {
      throw Error(ErrorKind::DimensionMismatch,
                  "edge (" + std::to_string(a) + "," + std::to_string(b) + ") outside node range");
    }
    if (a == b) throw Error(ErrorKind::DimensionMismatch, "self-loop at node " + std::to_string(a));
    g.adjacency_[a].push_back(b);
    g.adjacency_[b].push_back(a);
  }
  for (auto& nb : g.adjacency_) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return g;
}

Graph Graph::edgeless(Index p) {
  Graph g;
  g.adjacency_.resize(static_cast<std::size_t>(p));
  return g;
}

std::span<const Index> Graph::neighbors(Index j) const {
  if (j < 0 || j >= size()) throw Error(ErrorKind::IndexOutOfRange, "node " + std::to_string(j));
  return adjacency_[static_cast<std::size_t>(j)];
}

std::size_t Graph::edge_count() const {
  std::size_t total = 0;
  for (const auto& nb : adjacency_) total += nb.size();
  return total / 2;
}

Graph Graph::permuted(const std::vector<Index>& perm) const {
  if (static_cast<Index>(perm.size()) != size()) {
    throw Error(ErrorKind::LengthMismatch, "permutation length differs from node count");
  }
  Graph g;
  g.adjacency_.resize(adjacency_.size());
  for (std::size_t j = 0; j < adjacency_.size(); ++j) {
    auto& nb = g.adjacency_[static_cast<std::size_t>(perm[j])];
    for (Index k : adjacency_[j]) nb.push_back(perm[static_cast<std::size_t>(k)]);
    std::sort(nb.begin(), nb.end());
  }
  g.kind_ = GraphKind::General;
  return g;
}

void Graph::validate() const {
  const Index p = size();
  for (Index j = 0; j < p; ++j) {
    for (Index k : adjacency_[j]) {
      if (k < 0 || k >= p) throw Error(ErrorKind::DimensionMismatch, "neighbor id out of range");
      if (k == j) throw Error(ErrorKind::DimensionMismatch, "self-loop at node " + std::to_string(j));
      const auto& back = adjacency_[k];
      if (!std::binary_search(back.begin(), back.end(), j)) {
        throw Error(ErrorKind::DimensionMismatch, "asymmetric adjacency between " + std::to_string(j) +
                                                      " and " + std::to_string(k));
      }
    }
    if (kind_ == GraphKind::Grid4 && adjacency_[j].size() > 4) {
      throw Error(ErrorKind::DimensionMismatch, "grid node with more than 4 neighbors");
    }
  }
}

}  // namespace nash
