#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace nash {

/// Posterior of one latent mean b_j given its noisy observation.
struct PosteriorSummary {
  double mean = 0.0;
  double variance = 0.0;
  double nullProb = 0.0;     // posterior mass of the point mass at zero
  double logMarginal = 0.0;  // log of  int N(obs; b, sigma0^2) g(b) db
};

/// A covariate-moderated normal-means solver: given observations betaBar_j
/// with noise variance sigma0^2, learn the prior parameters, then return the
/// exact posterior summary of each b_j under the learned prior.
class PriorModel {
 public:
  virtual ~PriorModel() = default;

  virtual std::string kind() const = 0;

  virtual std::vector<PosteriorSummary> solve(const Eigen::VectorXd& betaBar, double sigma02) = 0;

  /// Prior weight of the point mass at zero for every coordinate.
  virtual Eigen::VectorXd null_weights() const = 0;

  /// True when solve() never decreases the normal-means marginal likelihood
  /// relative to the previous parameters (fixed components, EM weights).
  virtual bool exact_ascent() const { return false; }

  virtual nlohmann::json parameters() const = 0;

  virtual std::unique_ptr<PriorModel> clone() const = 0;
};

}  // namespace nash
