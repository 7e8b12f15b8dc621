#include "nash/message_net.hpp"

#include <cmath>
#include <random>

#include "nash/error.hpp"

namespace nash::fused {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct Layout {
  Index h;
  Index A1, B1, c1, A2, B2, c2, wv, av, ws, as, total;
  explicit Layout(Index hidden) : h(hidden) {
    const Index F = MessageNet::kFeatures;
    A1 = 0;
    B1 = A1 + h * F;
    c1 = B1 + h * F;
    A2 = c1 + h;
    B2 = A2 + h * h;
    c2 = B2 + h * h;
    wv = c2 + h;
    av = wv + h;
    ws = av + 1;
    as = ws + h;
    total = as + 1;
  }
};

using CMap = Eigen::Map<const MatrixXd>;
using Map = Eigen::Map<MatrixXd>;

// mean over neighbors of each row of M; isolated nodes get zeros
MatrixXd neighbor_mean(const Graph& g, const MatrixXd& M) {
  MatrixXd out = MatrixXd::Zero(M.rows(), M.cols());
  for (Index j = 0; j < g.size(); ++j) {
    const auto nb = g.neighbors(j);
    if (nb.empty()) continue;
    for (Index k : nb) out.row(j) += M.row(k);
    out.row(j) /= static_cast<double>(nb.size());
  }
  return out;
}

// transpose of neighbor_mean: scatter each row's gradient back to its neighbors
MatrixXd neighbor_mean_adjoint(const Graph& g, const MatrixXd& G) {
  MatrixXd out = MatrixXd::Zero(G.rows(), G.cols());
  for (Index j = 0; j < g.size(); ++j) {
    const auto nb = g.neighbors(j);
    if (nb.empty()) continue;
    const double w = 1.0 / static_cast<double>(nb.size());
    for (Index k : nb) out.row(k) += w * G.row(j);
  }
  return out;
}

}  // namespace

MessageNet::MessageNet(int hidden, bool perNodeS2) : hidden_(hidden), perNodeS2_(perNodeS2) {
  if (hidden < 1) throw Error(ErrorKind::InvalidArgument, "message network needs a positive hidden width");
  theta_ = VectorXd::Zero(Layout(hidden).total);
}

void MessageNet::init_random(std::uint64_t seed, double scale) {
  const Layout L(hidden_);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, scale);
  theta_.setZero();
  for (Index i = L.A1; i < L.c1; ++i) theta_[i] = z(rng);
  for (Index i = L.A2; i < L.c2; ++i) theta_[i] = z(rng);
}

MatrixXd MessageNet::node_features(const Graph& graph, const VectorXd& y, const VectorXd& bBar) {
  const Index p = graph.size();
  if (y.size() != p || bBar.size() != p) throw Error(ErrorKind::LengthMismatch, "features differ from node count");
  MatrixXd X(p, kFeatures);
  const bool grid = graph.kind() == GraphKind::Grid4;
  for (Index j = 0; j < p; ++j) {
    X(j, 0) = y[j];
    if (grid) {
      const Index r = j / graph.width(), c = j % graph.width();
      X(j, 1) = graph.height() > 1 ? static_cast<double>(r) / static_cast<double>(graph.height() - 1) : 0.0;
      X(j, 2) = graph.width() > 1 ? static_cast<double>(c) / static_cast<double>(graph.width() - 1) : 0.0;
    } else {
      X(j, 1) = p > 1 ? static_cast<double>(j) / static_cast<double>(p - 1) : 0.0;
      X(j, 2) = 0.0;
    }
    X(j, 3) = bBar[j];
  }
  return X;
}

MessageNet::Cache MessageNet::run(const Graph& graph, const MatrixXd& X) const {
  if (X.rows() != graph.size() || X.cols() != kFeatures) {
    throw Error(ErrorKind::DimensionMismatch, "message network features have the wrong shape");
  }
  const Layout L(hidden_);
  const Index h = hidden_;
  CMap A1(theta_.data() + L.A1, h, kFeatures), B1(theta_.data() + L.B1, h, kFeatures);
  CMap A2(theta_.data() + L.A2, h, h), B2(theta_.data() + L.B2, h, h);
  const Eigen::Map<const Eigen::RowVectorXd> c1(theta_.data() + L.c1, h), c2(theta_.data() + L.c2, h);
  Cache c;
  c.z1 = X * A1.transpose() + neighbor_mean(graph, X) * B1.transpose();
  c.z1.rowwise() += c1;
  c.h1 = c.z1.cwiseMax(0.0);
  c.z2 = c.h1 * A2.transpose() + neighbor_mean(graph, c.h1) * B2.transpose();
  c.z2.rowwise() += c2;
  c.h2 = c.z2.cwiseMax(0.0);
  return c;
}

MessageOutput MessageNet::forward(const Graph& graph, const MatrixXd& X, const VectorXd& bBar) const {
  const Layout L(hidden_);
  const Cache c = run(graph, X);
  const Eigen::Map<const VectorXd> wv(theta_.data() + L.wv, hidden_), ws(theta_.data() + L.ws, hidden_);
  MessageOutput out;
  out.v1 = neighbor_mean(graph, MatrixXd(bBar)).col(0) + c.h2 * wv;
  out.v1.array() += theta_[L.av];
  if (perNodeS2_) {
    out.logS2Offset = c.h2 * ws;
    out.logS2Offset.array() += theta_[L.as];
  } else {
    out.logS2Offset = VectorXd::Zero(graph.size());
  }
  return out;
}

VectorXd MessageNet::backprop(const Graph& graph, const MatrixXd& X, const VectorXd& dV, const VectorXd& dS) const {
  const Layout L(hidden_);
  const Index h = hidden_;
  const Cache c = run(graph, X);
  VectorXd g = VectorXd::Zero(theta_.size());
  const Eigen::Map<const VectorXd> wv(theta_.data() + L.wv, h), ws(theta_.data() + L.ws, h);
  CMap A2(theta_.data() + L.A2, h, h), B2(theta_.data() + L.B2, h, h);

  Eigen::Map<VectorXd>(g.data() + L.wv, h) = c.h2.transpose() * dV;
  g[L.av] = dV.sum();
  MatrixXd dH2 = dV * wv.transpose();
  if (perNodeS2_) {
    Eigen::Map<VectorXd>(g.data() + L.ws, h) = c.h2.transpose() * dS;
    g[L.as] = dS.sum();
    dH2 += dS * ws.transpose();
  }
  const MatrixXd dZ2 = dH2.cwiseProduct((c.z2.array() > 0.0).cast<double>().matrix());
  Map(g.data() + L.A2, h, h) = dZ2.transpose() * c.h1;
  Map(g.data() + L.B2, h, h) = dZ2.transpose() * neighbor_mean(graph, c.h1);
  Eigen::Map<VectorXd>(g.data() + L.c2, h) = dZ2.colwise().sum().transpose();
  const MatrixXd dH1 = dZ2 * A2 + neighbor_mean_adjoint(graph, dZ2 * B2);
  const MatrixXd dZ1 = dH1.cwiseProduct((c.z1.array() > 0.0).cast<double>().matrix());
  Map(g.data() + L.A1, h, kFeatures) = dZ1.transpose() * X;
  Map(g.data() + L.B1, h, kFeatures) = dZ1.transpose() * neighbor_mean(graph, X);
  Eigen::Map<VectorXd>(g.data() + L.c1, h) = dZ1.colwise().sum().transpose();
  return g;
}

nlohmann::json MessageNet::to_json() const {
  return {{"hidden", hidden_},
          {"per_node_s2", perNodeS2_},
          {"values", std::vector<double>(theta_.data(), theta_.data() + theta_.size())}};
}

MessageNet MessageNet::from_json(const nlohmann::json& j) {
  MessageNet net(j.at("hidden").get<int>(), j.at("per_node_s2").get<bool>());
  const auto v = j.at("values").get<std::vector<double>>();
  if (static_cast<Index>(v.size()) != net.size()) {
    throw Error(ErrorKind::ParseError, "message network has " + std::to_string(v.size()) + " values, expected " +
                                           std::to_string(net.size()));
  }
  net.theta_ = Eigen::Map<const VectorXd>(v.data(), net.size());
  return net;
}

double message_objective(const MessageNet& net, const Graph& graph, const MatrixXd& X, const VectorXd& bBar,
                         const VectorXd& betaBar, double sigma02, const FusedScales& scales, VectorXd* grad) {
  const Index p = graph.size();
  if (betaBar.size() != p) throw Error(ErrorKind::LengthMismatch, "observations differ from node count");
  const MessageOutput m = net.forward(graph, X, bBar);
  VectorXd dV = VectorXd::Zero(p), dS = VectorXd::Zero(p);
  std::vector<FactorGradient> fg;
  double total = 0.0;
  for (Index j = 0; j < p; ++j) {
    if (graph.neighbors(j).empty()) continue;
    const LaplaceFactor f[2] = {{0.0, scales.s1}, {m.v1[j], scales.s2 * std::exp(m.logS2Offset[j])}};
    const auto s = laplace_product_posterior(betaBar[j], sigma02, f, grad ? &fg : nullptr);
    total += s.logMarginal;
    if (grad) {
      dV[j] = fg[1].dCenter;
      dS[j] = fg[1].dLogScale;
    }
  }
  if (grad) *grad = net.backprop(graph, X, dV, dS);
  return total;
}

nets::TrainReport train_message_net(MessageNet& net, const Graph& graph, const MatrixXd& X, const VectorXd& bBar,
                                    const VectorXd& betaBar, double sigma02, const FusedScales& scales,
                                    const nets::TrainConfig& cfg, int steps) {
  cfg.validate();
  nets::Adam adam(net.size(), cfg);
  const double p = static_cast<double>(graph.size());
  nets::TrainReport rep;
  rep.initialObjective = message_objective(net, graph, X, bBar, betaBar, sigma02, scales);
  double best = rep.initialObjective;
  VectorXd bestTheta = net.params();
  VectorXd grad;
  for (int s = 0; s < steps; ++s) {
    message_objective(net, graph, X, bBar, betaBar, sigma02, scales, &grad);
    if (!grad.allFinite()) {
      throw Error(ErrorKind::NonFiniteGradient, "non-finite message network gradient at step " + std::to_string(s));
    }
    grad /= p;
    adam.ascend(net.params(), grad);
    const double obj = message_objective(net, graph, X, bBar, betaBar, sigma02, scales);
    rep.trace.push_back(obj);
    if (obj > best) {
      best = obj;
      bestTheta = net.params();
    }
  }
  net.params() = bestTheta;
  rep.finalObjective = best;
  rep.steps = steps;
  return rep;
}

}  // namespace nash::fused
