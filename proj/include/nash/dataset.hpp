#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nash/graph.hpp"

namespace nash {

struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<std::string> columnNames;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }

  /// n >= 2, p >= 1, matching lengths, finite entries.
  void validate() const;
};

/// Centered response and centered columns scaled to sample sd 1, i.e. x_j'x_j = n - 1.
struct StandardizedDesign {
  Eigen::MatrixXd Xs;
  Eigen::VectorXd ys;
  double yMean = 0.0;
  Eigen::VectorXd colMeans;
  Eigen::VectorXd colScales;
  // Raw column index of each standardized column; identity unless constant
  // columns were dropped.
  std::vector<Eigen::Index> keptColumns;
  Eigen::Index rawColumns = 0;

  Eigen::Index n() const { return Xs.rows(); }
  Eigen::Index p() const { return Xs.cols(); }
  double column_norm2() const { return static_cast<double>(Xs.rows() - 1); }
};

struct StandardizeOptions {
  bool dropConstant = false;
};

StandardizedDesign standardize(const Dataset& data, const StandardizeOptions& options = {});

struct RawCoefficients {
  Eigen::VectorXd coefficients;  // raw units, length = original column count
  double intercept = 0.0;
};

RawCoefficients unstandardize(const Eigen::VectorXd& bScaled, const StandardizedDesign& design);

enum class SideInfoKind { None, Features, Graph };

struct SideInfo {
  SideInfoKind kind = SideInfoKind::None;
  Eigen::MatrixXd features;  // p x k when kind == Features
  Graph graph;               // p nodes when kind == Graph
  std::vector<std::string> featureNames;

  static SideInfo none() { return {}; }
  static SideInfo from_features(Eigen::MatrixXd D, std::vector<std::string> names = {});
  static SideInfo from_graph(Graph g);

  void validate(Eigen::Index p) const;
  /// Keep only the rows (nodes) that survived column dropping.
  SideInfo restrict_to(const std::vector<Eigen::Index>& kept) const;
};

}  // namespace nash
