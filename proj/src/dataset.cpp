#include "nash/dataset.hpp"

#include <cmath>
#include <iostream>
#include <string>

#include "nash/error.hpp"

namespace nash {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void Dataset::validate() const {
  if (X.rows() < 2) throw Error(ErrorKind::DimensionMismatch, "need at least 2 observations");
  if (X.cols() < 1) throw Error(ErrorKind::DimensionMismatch, "need at least 1 predictor");
  if (y.size() != X.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "response length " + std::to_string(y.size()) +
                                                  " differs from predictor rows " +
                                                  std::to_string(X.rows()));
  }
  if (!y.allFinite() || !X.allFinite()) throw Error(ErrorKind::NonFinite, "non-finite value in data");
  if (!columnNames.empty() && static_cast<Index>(columnNames.size()) != X.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "column name count differs from predictor count");
  }
}

StandardizedDesign standardize(const Dataset& data, const StandardizeOptions& options) {
  data.validate();
  const Index n = data.n();
  const Index p = data.p();

  StandardizedDesign d;
  d.rawColumns = p;
  d.yMean = data.y.mean();
  d.ys = data.y.array() - d.yMean;

  std::vector<double> means;
  std::vector<double> scales;
  for (Index j = 0; j < p; ++j) {
    const double mean = data.X.col(j).mean();
    const double ss = (data.X.col(j).array() - mean).square().sum();
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    // Relative guard so columns that are constant up to rounding count as constant.
    const double magnitude = std::max(1.0, std::abs(mean));
    if (!(sd > 1e-13 * magnitude)) {
      if (options.dropConstant) {
        std::cerr << "warning: dropping constant column " << j << '\n';
        continue;
      }
      throw Error(ErrorKind::ConstantColumn, "constant column " + std::to_string(j));
    }
    d.keptColumns.push_back(j);
    means.push_back(mean);
    scales.push_back(sd);
  }
  if (d.keptColumns.empty()) throw Error(ErrorKind::ConstantColumn, "all columns are constant");

  const Index kept = static_cast<Index>(d.keptColumns.size());
  d.colMeans = Eigen::Map<VectorXd>(means.data(), kept);
  d.colScales = Eigen::Map<VectorXd>(scales.data(), kept);
  d.Xs.resize(n, kept);
  for (Index k = 0; k < kept; ++k) {
    d.Xs.col(k) = (data.X.col(d.keptColumns[k]).array() - d.colMeans[k]) / d.colScales[k];
  }
  return d;
}

RawCoefficients unstandardize(const VectorXd& bScaled, const StandardizedDesign& design) {
  if (bScaled.size() != design.p()) {
    throw Error(ErrorKind::LengthMismatch, "coefficient length " + std::to_string(bScaled.size()) +
                                               " differs from design columns " +
                                               std::to_string(design.p()));
  }
  RawCoefficients out;
  out.coefficients = VectorXd::Zero(design.rawColumns);
  out.intercept = design.yMean;
  for (Index k = 0; k < design.p(); ++k) {
    const double c = bScaled[k] / design.colScales[k];
    out.coefficients[design.keptColumns[k]] = c;
    out.intercept -= c * design.colMeans[k];
  }
  return out;
}

SideInfo SideInfo::from_features(MatrixXd D, std::vector<std::string> names) {
  SideInfo s;
  s.kind = SideInfoKind::Features;
  s.features = std::move(D);
  s.featureNames = std::move(names);
  return s;
}

SideInfo SideInfo::from_graph(Graph g) {
  SideInfo s;
  s.kind = SideInfoKind::Graph;
  s.graph = std::move(g);
  return s;
}

void SideInfo::validate(Index p) const {
  switch (kind) {
    case SideInfoKind::None:
      return;
    case SideInfoKind::Features:
      if (features.rows() != p) {
        throw Error(ErrorKind::DimensionMismatch, "side information has " +
                                                      std::to_string(features.rows()) +
                                                      " rows, expected " + std::to_string(p));
      }
      if (!features.allFinite()) throw Error(ErrorKind::NonFinite, "non-finite side information");
      return;
    case SideInfoKind::Graph:
      if (graph.size() != p) {
        throw Error(ErrorKind::DimensionMismatch, "graph has " + std::to_string(graph.size()) +
                                                      " nodes, expected " + std::to_string(p));
      }
      graph.validate();
      return;
  }
}

SideInfo SideInfo::restrict_to(const std::vector<Index>& kept) const {
  SideInfo s = *this;
  if (kind == SideInfoKind::Features) {
    if (static_cast<Index>(kept.size()) == features.rows()) return s;
    s.features.resize(static_cast<Index>(kept.size()), features.cols());
    for (std::size_t k = 0; k < kept.size(); ++k) s.features.row(static_cast<Index>(k)) = features.row(kept[k]);
  } else if (kind == SideInfoKind::Graph) {
    if (static_cast<Index>(kept.size()) == graph.size()) return s;
    std::vector<Index> newId(static_cast<std::size_t>(graph.size()), -1);
    for (std::size_t k = 0; k < kept.size(); ++k) newId[kept[k]] = static_cast<Index>(k);
    std::vector<std::pair<Index, Index>> edges;
    for (Index j = 0; j < graph.size(); ++j) {
      for (Index nb : graph.neighbors(j)) {
        if (j < nb && newId[j] >= 0 && newId[nb] >= 0) edges.emplace_back(newId[j], newId[nb]);
      }
    }
    s.graph = Graph::from_edges(static_cast<Index>(kept.size()), edges);
  }
  return s;
}

}  // namespace nash
