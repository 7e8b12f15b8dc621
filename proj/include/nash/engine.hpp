#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nash/dataset.hpp"
#include "nash/prior_model.hpp"

namespace nash {

enum class VarianceRule {
  ExactCavi,   // exact maximizers of the expected log-likelihood and split terms
  FixedPoint,  // (n + p)-denominator fixed-point formulas with the null-weight factor
};

enum class InitMode { Zero, Provided };

struct FitConfig {
  int maxSweeps = 200;
  double elboTol = 1e-6;  // relative ELBO change between sweeps
  InitMode initMode = InitMode::Zero;
  VarianceRule varianceRule = VarianceRule::ExactCavi;
  bool fixVariances = false;  // keep sigma^2, sigma0^2 at their initial values
  Eigen::VectorXd initBeta;   // InitMode::Provided, standardized scale
  std::optional<double> initSigma2;
  std::optional<double> initSigma02;
  std::uint64_t seed = 0;
  nlohmann::json priorConfig = nlohmann::json::object();  // echoed into the model file

  void validate() const;
};

inline constexpr double kVarianceFloor = 1e-12;

struct FitState {
  Eigen::VectorXd betaBar;  // E_q beta_j
  Eigen::VectorXd bBar;     // E_q b_j
  Eigen::VectorXd bVar;     // Var_q b_j
  Eigen::VectorXd rBar;     // ys - Xs betaBar
  Eigen::VectorXd betaMle;  // x_j' r_j / x_j'x_j from the latest sweep
  double sigma2 = 1.0;
  double sigma02 = 1.0;
  double omega = 0.5;
  double sJ2 = 0.0;  // shared posterior variance of every beta_j
  std::vector<double> elboTrace;
  int sweepCount = 0;
  std::vector<PosteriorSummary> summaries;
  // Set after the normal-means step, cleared by any later update; the ELBO
  // uses the exact-subposterior identity and is only valid while fresh.
  bool posteriorFresh = false;
  int clampCount = 0;
};

struct FitResult {
  FitState state;
  Eigen::VectorXd coefficients;        // raw units, from betaBar
  double intercept = 0.0;
  Eigen::VectorXd latentCoefficients;  // raw units, from bBar
  std::vector<PosteriorSummary> summaries;
  bool converged = false;
  int sweeps = 0;
  nlohmann::json priorParameters;
  std::string priorKind;
  FitConfig config;
};

/// omega = c sigma0^2 / (sigma^2 + c sigma0^2) for columns with x_j'x_j = c.
double compute_omega(double columnNorm2, double sigma2, double sigma02);
/// Regression form with x_j'x_j = n - 1.
double compute_omega(int n, double sigma2, double sigma02);

inline double update_beta_j(double olsEstimate, double bBarJ, double omega) {
  return omega * olsEstimate + (1.0 - omega) * bBarJ;
}

/// r_j = rBar + x_j betaBar_j
Eigen::VectorXd partial_residual(const FitState& state, Eigen::Index j, const Eigen::Ref<const Eigen::VectorXd>& xj);

FitState initial_state(const StandardizedDesign& design, const FitConfig& config);

/// One pass of coordinate updates, the normal-means step, ELBO evaluation and
/// the variance updates.
void sweep(FitState& state, const StandardizedDesign& design, PriorModel& prior, const FitConfig& config);

double update_sigma2(const FitState& state, const StandardizedDesign& design, VarianceRule rule);
double update_sigma02(const FitState& state, const StandardizedDesign& design, VarianceRule rule,
                      const Eigen::VectorXd& nullWeights);

/// Expected log-likelihood plus entropy of q_beta.
double elbo_likelihood_term(const FitState& state, const StandardizedDesign& design);
/// Expected log p(beta_j | b_j, sigma0^2) summed over j.
double elbo_split_term(const FitState& state);
/// Full ELBO; throws StaleState unless the posterior is fresh.
double compute_elbo(const FitState& state, const StandardizedDesign& design);

FitResult fit_design(const StandardizedDesign& design, PriorModel& prior, const FitConfig& config);
FitResult fit(const Dataset& data, const SideInfo& side, PriorModel& prior, const FitConfig& config,
              const StandardizeOptions& options = {});

Eigen::VectorXd predict(const FitResult& result, const Eigen::MatrixXd& Xnew);

}  // namespace nash
