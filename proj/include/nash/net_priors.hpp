#pragma once

#include <optional>

#include <Eigen/Dense>

#include "nash/ash.hpp"
#include "nash/nets.hpp"
#include "nash/prior_model.hpp"

namespace nash::nets {

/// Posterior of b under N(obs; b, sigma0^2) x [pi_0 delta_0 + sum_k pi_k N(mu_k, sigma_k^2)].
PosteriorSummary mdn_posterior(double betaBar, double sigma02, const MdnOutput& components);

struct SoftmaxPriorConfig {
  int hidden = 0;  // 0: multinomial logistic, otherwise one rectified hidden layer
  Eigen::Index gridSize = 20;
  TrainConfig train;
  double initScale = 0.1;  // std of the random first-layer weights
  // Start the output biases at the covariate-free EM weights.
  bool initFromEm = true;
  std::optional<ash::MixtureGrid> grid;
};

/// Mixture weights pi(d_j) from a network over a fixed variance grid.
class SoftmaxPrior final : public PriorModel {
 public:
  SoftmaxPrior(Eigen::MatrixXd features, SoftmaxPriorConfig config = {});

  std::string kind() const override { return "softmax"; }
  std::vector<PosteriorSummary> solve(const Eigen::VectorXd& betaBar, double sigma02) override;
  Eigen::VectorXd null_weights() const override;
  nlohmann::json parameters() const override;
  std::unique_ptr<PriorModel> clone() const override { return std::make_unique<SoftmaxPrior>(*this); }

  const SoftmaxPriorNet& net() const { return net_; }
  const std::optional<ash::MixtureGrid>& grid() const { return grid_; }
  const std::vector<TrainReport>& reports() const { return reports_; }

 private:
  Eigen::MatrixXd D_;
  SoftmaxPriorConfig config_;
  std::optional<ash::MixtureGrid> grid_;
  SoftmaxPriorNet net_;
  Adam adam_;
  bool initialized_ = false;
  Eigen::MatrixXd logPi_;
  std::vector<TrainReport> reports_;
};

struct MdnPriorConfig {
  int hidden = 0;
  int components = 3;
  TrainConfig train;
  double initScale = 0.1;
};

class MdnPrior final : public PriorModel {
 public:
  MdnPrior(Eigen::MatrixXd features, MdnPriorConfig config = {});

  std::string kind() const override { return "mdn"; }
  std::vector<PosteriorSummary> solve(const Eigen::VectorXd& betaBar, double sigma02) override;
  Eigen::VectorXd null_weights() const override;
  nlohmann::json parameters() const override;
  std::unique_ptr<PriorModel> clone() const override { return std::make_unique<MdnPrior>(*this); }

  const MdnPriorNet& net() const { return net_; }
  const std::vector<TrainReport>& reports() const { return reports_; }

 private:
  Eigen::MatrixXd D_;
  MdnPriorConfig config_;
  MdnPriorNet net_;
  Adam adam_;
  bool initialized_ = false;
  Eigen::VectorXd nullW_;
  std::vector<TrainReport> reports_;
};

}  // namespace nash::nets
