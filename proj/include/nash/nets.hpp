#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace nash::nets {

struct TrainConfig {
  double learningRate = 1e-3;
  int steps = 500;           // first invocation
  int stepsAfterFirst = 50;  // every later invocation (warm start)
  int batchSize = 0;         // 0: full batch up to 4096 rows, else 4096-row minibatches
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainReport {
  double initialObjective = 0.0;
  double finalObjective = 0.0;
  std::vector<double> trace;  // full-data objective after every step
  int steps = 0;
};

/// Adam on a flat parameter vector, ascending the objective.
class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index size, const TrainConfig& cfg);
  void ascend(Eigen::VectorXd& theta, const Eigen::VectorXd& grad);
  Eigen::Index size() const { return m_.size(); }

 private:
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  double lr_ = 1e-3, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
};

/// Input k -> optional rectified hidden layer of width h -> linear heads.
/// All parameters live in one flat vector; the trunk occupies the front.
class TrunkNet {
 public:
  TrunkNet() = default;
  TrunkNet(int inputs, int hidden, int headWidth);

  int inputs() const { return inputs_; }
  int hidden() const { return hidden_; }
  int depth() const { return hidden_ > 0 ? 1 : 0; }
  int features() const { return hidden_ > 0 ? hidden_ : inputs_; }  // width feeding the heads
  int head_width() const { return headWidth_; }

  Eigen::VectorXd& params() { return theta_; }
  const Eigen::VectorXd& params() const { return theta_; }

  Eigen::Map<const Eigen::MatrixXd> W1() const { return {theta_.data(), hidden_, inputs_}; }
  Eigen::Map<const Eigen::VectorXd> b1() const { return {theta_.data() + hidden_ * inputs_, hidden_}; }
  /// Stacked head weights (headWidth x features) and biases.
  Eigen::Map<const Eigen::MatrixXd> W2() const { return {theta_.data() + trunk_size(), headWidth_, features()}; }
  Eigen::Map<const Eigen::VectorXd> b2() const {
    return {theta_.data() + trunk_size() + headWidth_ * features(), headWidth_};
  }
  Eigen::Map<Eigen::MatrixXd> W1() { return {theta_.data(), hidden_, inputs_}; }
  Eigen::Map<Eigen::VectorXd> b1() { return {theta_.data() + hidden_ * inputs_, hidden_}; }
  Eigen::Map<Eigen::MatrixXd> W2() { return {theta_.data() + trunk_size(), headWidth_, features()}; }
  Eigen::Map<Eigen::VectorXd> b2() { return {theta_.data() + trunk_size() + headWidth_ * features(), headWidth_}; }

  /// Gaussian weights with standard deviation `scale`; biases zero.
  void init_random(std::uint64_t seed, double scale);

  /// Raw head outputs for every row of D (p x headWidth). `hiddenOut` receives
  /// the post-activation trunk features when non-null.
  Eigen::MatrixXd heads(const Eigen::MatrixXd& D, Eigen::MatrixXd* hiddenOut = nullptr) const;
  Eigen::VectorXd heads(const Eigen::Ref<const Eigen::VectorXd>& d) const;

  /// Backpropagate dObjective/dHeads (p x headWidth) for the rows in `rows`
  /// into a flat gradient.
  Eigen::VectorXd backprop(const Eigen::MatrixXd& D, const Eigen::MatrixXd& hiddenOut, const Eigen::MatrixXd& gHeads,
                           const std::vector<Eigen::Index>& rows) const;

  nlohmann::json to_json() const;
  void from_json(const nlohmann::json& j);

 private:
  Eigen::Index trunk_size() const { return static_cast<Eigen::Index>(hidden_) * (inputs_ + 1); }

  int inputs_ = 0;
  int hidden_ = 0;
  int headWidth_ = 0;
  Eigen::VectorXd theta_;
};

/// d_j -> mixture weights pi(d_j) over M fixed components.
class SoftmaxPriorNet : public TrunkNet {
 public:
  SoftmaxPriorNet() = default;
  SoftmaxPriorNet(int inputs, int hidden, int components) : TrunkNet(inputs, hidden, components) {}
  int components() const { return head_width(); }
};

Eigen::VectorXd forward_softmax(const SoftmaxPriorNet& net, const Eigen::Ref<const Eigen::VectorXd>& d);
/// Row-wise log pi(d_j).
Eigen::MatrixXd log_weights(const SoftmaxPriorNet& net, const Eigen::MatrixXd& D);

/// sum_j log sum_m pi_m(d_j) exp(L_jm)
double softmax_objective(const SoftmaxPriorNet& net, const Eigen::MatrixXd& D, const Eigen::MatrixXd& L);
/// Objective over `rows` (all when empty) and its gradient.
double softmax_objective_grad(const SoftmaxPriorNet& net, const Eigen::MatrixXd& D, const Eigen::MatrixXd& L,
                              Eigen::VectorXd& grad, const std::vector<Eigen::Index>& rows = {});
TrainReport train_softmax(SoftmaxPriorNet& net, const Eigen::MatrixXd& D, const Eigen::MatrixXd& L,
                          const TrainConfig& cfg, int steps, Adam* adam = nullptr);

/// Heads: K+1 logits (null first), K means, K log-variances.
class MdnPriorNet : public TrunkNet {
 public:
  MdnPriorNet() = default;
  MdnPriorNet(int inputs, int hidden, int components) : TrunkNet(inputs, hidden, 3 * components + 1), k_(components) {}
  int components() const { return k_; }

  void from_json(const nlohmann::json& j);

 private:
  int k_ = 0;
};

struct MdnOutput {
  Eigen::VectorXd weights;    // K + 1, null first
  Eigen::VectorXd means;      // K
  Eigen::VectorXd variances;  // K
};

MdnOutput mdn_forward(const MdnPriorNet& net, const Eigen::Ref<const Eigen::VectorXd>& d);

/// sum_j log[pi_0 N(b_j; 0, s0^2) + sum_k pi_k N(b_j; mu_k, s0^2 + sigma_k^2)]
double mdn_objective(const MdnPriorNet& net, const Eigen::MatrixXd& D, const Eigen::VectorXd& betaBar, double sigma02);
double mdn_objective_grad(const MdnPriorNet& net, const Eigen::MatrixXd& D, const Eigen::VectorXd& betaBar,
                          double sigma02, Eigen::VectorXd& grad, const std::vector<Eigen::Index>& rows = {});
TrainReport train_mdn(MdnPriorNet& net, const Eigen::MatrixXd& D, const Eigen::VectorXd& betaBar, double sigma02,
                      const TrainConfig& cfg, int steps, Adam* adam = nullptr);

}  // namespace nash::nets
