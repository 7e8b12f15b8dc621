#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "nash/prior_model.hpp"

namespace nash::ash {

/// Component variances of a point-mass-plus-normals scale mixture. The first
/// entry is exactly zero (the point mass at zero); entries strictly ascend.
class MixtureGrid {
 public:
  MixtureGrid() = default;
  explicit MixtureGrid(Eigen::VectorXd variances);

  const Eigen::VectorXd& variances() const { return variances_; }
  Eigen::Index size() const { return variances_.size(); }
  double operator[](Eigen::Index m) const { return variances_[m]; }

 private:
  Eigen::VectorXd variances_;
};

/// Simplex vector of mixture proportions.
class MixtureWeights {
 public:
  MixtureWeights() = default;
  explicit MixtureWeights(Eigen::VectorXd pi);
  static MixtureWeights uniform(Eigen::Index m);

  const Eigen::VectorXd& pi() const { return pi_; }
  Eigen::Index size() const { return pi_.size(); }
  double operator[](Eigen::Index m) const { return pi_[m]; }

 private:
  Eigen::VectorXd pi_;
};

/// Zero followed by M-1 geometric variances from sigma0^2/100 up to
/// max(4 (max_j betaBar_j^2 - sigma0^2), sigma0^2).
MixtureGrid default_grid(const Eigen::VectorXd& betaBar, double sigma02, Eigen::Index m);

/// p x M matrix of log N(betaBar_j; 0, sigma0^2 + sigma_m^2).
Eigen::MatrixXd marginal_loglik_matrix(const Eigen::VectorXd& betaBar, double sigma02, const MixtureGrid& grid);

/// sum_j log sum_m pi_m exp(L_jm)
double mixture_objective(const Eigen::MatrixXd& logLik, const Eigen::VectorXd& pi);

struct EmResult {
  MixtureWeights weights;
  double objective = 0.0;
  int iterations = 0;
  std::vector<double> trace;  // objective before the first and after every iteration
};

EmResult fit_weights_em(const Eigen::MatrixXd& logLik, const MixtureWeights& init, int maxIter = 1000,
                        double tol = 1e-8);

PosteriorSummary posterior_summary(double betaBar, double sigma02, const MixtureGrid& grid,
                                   const Eigen::Ref<const Eigen::VectorXd>& pi);

struct AshConfig {
  Eigen::Index gridSize = 20;
  int emMaxIter = 1000;
  double emTol = 1e-8;
  // Build the grid on the first solve and keep it; otherwise rebuild every solve.
  bool fixedGrid = true;
  std::optional<MixtureGrid> grid;
  std::optional<MixtureWeights> initWeights;
};

struct CebnmResult {
  MixtureGrid grid;
  MixtureWeights weights;
  std::vector<PosteriorSummary> summaries;
};

/// default_grid -> marginal_loglik_matrix -> fit_weights_em -> posterior_summary.
CebnmResult cebnm_solve(const Eigen::VectorXd& betaBar, double sigma02, const AshConfig& config = {});

/// The covariate-free prior used by the regression engine. EM weights are
/// warm-started from the previous solve, so with a fixed grid each solve
/// does not decrease the marginal likelihood.
class AshPrior final : public PriorModel {
 public:
  explicit AshPrior(AshConfig config = {});

  std::string kind() const override { return "ash"; }
  std::vector<PosteriorSummary> solve(const Eigen::VectorXd& betaBar, double sigma02) override;
  Eigen::VectorXd null_weights() const override;
  bool exact_ascent() const override { return config_.fixedGrid; }
  nlohmann::json parameters() const override;
  std::unique_ptr<PriorModel> clone() const override { return std::make_unique<AshPrior>(*this); }

  const std::optional<MixtureGrid>& grid() const { return grid_; }
  const std::optional<MixtureWeights>& weights() const { return weights_; }

 private:
  AshConfig config_;
  std::optional<MixtureGrid> grid_;
  std::optional<MixtureWeights> weights_;
  Eigen::Index p_ = 0;
};

}  // namespace nash::ash
