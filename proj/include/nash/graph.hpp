#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace nash {

enum class GraphKind { Chain, Grid4, General };

/// Undirected simple graph over covariates (or pixels) with sorted adjacency lists.
class Graph {
 public:
  Graph() = default;

  static Graph chain(Eigen::Index p);
  /// Row-major pixel grid; node id = row * width + col.
  static Graph grid4(Eigen::Index height, Eigen::Index width);
  static Graph from_edges(Eigen::Index p, const std::vector<std::pair<Eigen::Index, Eigen::Index>>& edges);
  static Graph edgeless(Eigen::Index p);

  Eigen::Index size() const { return static_cast<Eigen::Index>(adjacency_.size()); }
  std::span<const Eigen::Index> neighbors(Eigen::Index j) const;
  GraphKind kind() const { return kind_; }
  Eigen::Index height() const { return height_; }
  Eigen::Index width() const { return width_; }
  std::size_t edge_count() const;

  /// Relabel nodes: new node `perm[j]` takes the role of old node `j`.
  Graph permuted(const std::vector<Eigen::Index>& perm) const;

  /// Throws DimensionMismatch if adjacency is asymmetric, has self-loops or bad ids.
  void validate() const;

 private:
  std::vector<std::vector<Eigen::Index>> adjacency_;
  GraphKind kind_ = GraphKind::General;
  Eigen::Index height_ = 0;
  Eigen::Index width_ = 0;
};

}  // namespace nash
