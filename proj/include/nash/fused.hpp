#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "nash/graph.hpp"
#include "nash/prior_model.hpp"

namespace nash::fused {

struct FusedScales {
  double s1 = 0.45;  // sparsity factor L(0, s1)
  double s2 = 0.15;  // smoothness factor(s) L(neighbor, s2)
  void validate() const;
};

/// -|b|/s1 - |b - left|/s2 - |b - right|/s2; a missing neighbor drops its factor.
double fused_log_density(double b, std::optional<double> leftMean, std::optional<double> rightMean,
                         const FusedScales& scales);

/// One Laplace factor exp(-|b - center| / scale).
struct LaplaceFactor {
  double center = 0.0;
  double scale = 1.0;
};

/// Gauss-Hermite nodes and weights for the weight e^{-t^2} (Golub-Welsch).
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const GaussHermiteRule& gauss_hermite(int nodes);

/// Posterior of b under N(betaBar; b, sigma0^2) exp(logPrior(b)), by
/// Gauss-Hermite quadrature with b = betaBar + sqrt(2 sigma0^2) t. logPrior
/// should be normalized for logMarginal to be a marginal likelihood.
PosteriorSummary gh_posterior(double betaBar, double sigma02, const std::function<double(double)>& logPrior,
                              int nodes = 32);

/// Gradient of log marginal with respect to each factor's center and log-scale.
struct FactorGradient {
  double dCenter = 0.0;
  double dLogScale = 0.0;
};

/// Exact posterior under the normalized product of Laplace factors: the log
/// prior is piecewise linear between factor centers, so each segment is a
/// truncated normal and the normalizer is a sum of exponential integrals.
PosteriorSummary laplace_product_posterior(double betaBar, double sigma02, std::span<const LaplaceFactor> factors,
                                           std::vector<FactorGradient>* gradients = nullptr);

/// log of the integral of the unnormalized product of factors over the real line.
double log_prior_normalizer(std::span<const LaplaceFactor> factors);

/// Factors of node j's prior: L(0, s1) plus one L(c, s2 * s2Factor) per neighbor center.
std::vector<LaplaceFactor> node_factors(std::span<const double> centers, const FusedScales& scales,
                                        double s2Factor = 1.0);

enum class Quadrature { Exact, GaussHermite };

/// Posterior of node j given its neighbor centers.
PosteriorSummary fused_posterior(double betaBar, double sigma02, std::span<const double> centers,
                                 const FusedScales& scales, Quadrature q = Quadrature::Exact, int ghNodes = 32,
                                 double s2Factor = 1.0);

class MessageNet;

/// (v1_j, s2_j) and the smoothness centers of node j. Chain graphs keep the
/// two neighbors as separate factors; other graphs use one factor at the
/// neighbor mean. An isolated node reports (0, s1) and has no centers.
struct NeighborSummary {
  double v1 = 0.0;
  double s2 = 0.0;
  bool isolated = false;
  std::vector<double> centers;
  double s2Factor = 1.0;  // per-node multiplier on s2 from a message network
};

/// Auto: separate factors on chains, one factor at the neighbor mean otherwise.
enum class NeighborMode { Auto, Mean, Separate };

NeighborSummary neighbor_summary(const Graph& graph, const Eigen::VectorXd& bBar, const FusedScales& scales,
                                 Eigen::Index j, NeighborMode mode = NeighborMode::Auto);

/// Summaries for every node, optionally through a message network.
std::vector<NeighborSummary> neighbor_summaries(const Graph& graph, const Eigen::VectorXd& bBar,
                                                const FusedScales& scales, const MessageNet* net = nullptr,
                                                const Eigen::VectorXd* observed = nullptr,
                                                NeighborMode mode = NeighborMode::Auto);

struct LearnScalesConfig {
  int gridPoints = 12;
  double lower = 1e-3;
  double upper = 10.0;
  int polishIterations = 200;
  bool learnS2 = true;  // false: keep s2 fixed, search s1 only
};

/// Sum over nodes of the log marginal likelihood.
double fused_objective(const Eigen::VectorXd& betaBar, double sigma02, const std::vector<NeighborSummary>& nbrs,
                       const FusedScales& scales);

/// Log grid search over (s1, s2) followed by a Nelder-Mead polish in log space.
FusedScales learn_scales(const Eigen::VectorXd& betaBar, double sigma02, const std::vector<NeighborSummary>& nbrs,
                         const LearnScalesConfig& config = {}, const FusedScales& fallback = {});

/// Nelder-Mead minimizer on a box (coordinates clamped), deterministic.
std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                                double step, int iterations, double lower, double upper);

struct FusedPriorConfig {
  FusedScales initScales;
  LearnScalesConfig learn;
  int learnEvery = 1;  // re-learn the scales every k-th solve (0: never)
  Quadrature quadrature = Quadrature::Exact;
  int ghNodes = 32;
  NeighborMode neighborMode = NeighborMode::Auto;
};

/// Graph-fused prior for regression: neighbor centers come from the previous
/// solve's posterior means (Jacobi-style).
class FusedPrior final : public PriorModel {
 public:
  FusedPrior(Graph graph, FusedPriorConfig config = {});

  std::string kind() const override { return "fused"; }
  std::vector<PosteriorSummary> solve(const Eigen::VectorXd& betaBar, double sigma02) override;
  Eigen::VectorXd null_weights() const override { return Eigen::VectorXd::Zero(graph_.size()); }
  nlohmann::json parameters() const override;
  std::unique_ptr<PriorModel> clone() const override { return std::make_unique<FusedPrior>(*this); }

  const FusedScales& scales() const { return scales_; }

 private:
  Graph graph_;
  FusedPriorConfig config_;
  FusedScales scales_;
  Eigen::VectorXd bPrev_;
  int solves_ = 0;
};

}  // namespace nash::fused
