#pragma once

#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nash/fused.hpp"
#include "nash/graph.hpp"
#include "nash/nets.hpp"

namespace nash::fused {

/// Per-node outputs of the message network.
struct MessageOutput {
  Eigen::VectorXd v1;           // smoothness center
  Eigen::VectorXd logS2Offset;  // log multiplier on the global s2 (zero in global mode)
};

/// Two rounds of mean-aggregated message passing over node features:
///   h1 = relu(A1 x_j + B1 mean_{k~j} x_k + c1)
///   h2 = relu(A2 h1_j + B2 mean_{k~j} h1_k + c2)
///   v1 = mean_{k~j} bBar_k + wv.h2 + av,  log s2 offset = ws.h2 + as.
/// With zero heads the network reproduces the plain neighbor-mean summary.
class MessageNet {
 public:
  static constexpr int kFeatures = 4;

  MessageNet() = default;
  MessageNet(int hidden, bool perNodeS2 = false);

  int hidden() const { return hidden_; }
  bool per_node_s2() const { return perNodeS2_; }
  Eigen::Index size() const { return theta_.size(); }
  Eigen::VectorXd& params() { return theta_; }
  const Eigen::VectorXd& params() const { return theta_; }

  /// Gaussian trunk weights, zero heads.
  void init_random(std::uint64_t seed, double scale);

  /// [y_j, row/(H-1), col/(W-1), bBar_j] on grids; [y_j, j/(p-1), 0, bBar_j] otherwise.
  static Eigen::MatrixXd node_features(const Graph& graph, const Eigen::VectorXd& y, const Eigen::VectorXd& bBar);

  MessageOutput forward(const Graph& graph, const Eigen::MatrixXd& X, const Eigen::VectorXd& bBar) const;

  /// Gradient of sum_j (dV_j v1_j + dS_j logS2Offset_j) with respect to the parameters.
  Eigen::VectorXd backprop(const Graph& graph, const Eigen::MatrixXd& X, const Eigen::VectorXd& dV,
                           const Eigen::VectorXd& dS) const;

  nlohmann::json to_json() const;
  static MessageNet from_json(const nlohmann::json& j);

 private:
  struct Cache {
    Eigen::MatrixXd z1, h1, z2, h2;  // p x hidden
  };
  Cache run(const Graph& graph, const Eigen::MatrixXd& X) const;

  int hidden_ = 0;
  bool perNodeS2_ = false;
  Eigen::VectorXd theta_;
};

/// Sum over non-isolated nodes of the log marginal likelihood under the
/// two-factor prior L(0, s1) L(v1_j, s2 exp(offset_j)); optional gradient.
double message_objective(const MessageNet& net, const Graph& graph, const Eigen::MatrixXd& X,
                         const Eigen::VectorXd& bBar, const Eigen::VectorXd& betaBar, double sigma02,
                         const FusedScales& scales, Eigen::VectorXd* grad = nullptr);

/// Adam ascent on message_objective; keeps the best iterate.
nets::TrainReport train_message_net(MessageNet& net, const Graph& graph, const Eigen::MatrixXd& X,
                                    const Eigen::VectorXd& bBar, const Eigen::VectorXd& betaBar, double sigma02,
                                    const FusedScales& scales, const nets::TrainConfig& cfg, int steps);

}  // namespace nash::fused
