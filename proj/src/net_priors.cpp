#include "nash/net_priors.hpp"

#include <algorithm>
#include <cmath>

#include "nash/error.hpp"
#include "nash/math.hpp"

namespace nash::nets {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

PosteriorSummary mdn_posterior(double betaBar, double sigma02, const MdnOutput& c) {
  const Index K = c.means.size();
  if (c.weights.size() != K + 1 || c.variances.size() != K) {
    throw Error(ErrorKind::DimensionMismatch, "mixture components have inconsistent sizes");
  }
  VectorXd lw(K + 1);
  lw[0] = c.weights[0] > 0.0 ? std::log(c.weights[0]) + math::log_normal_pdf(betaBar, 0.0, sigma02) : math::kNegInf;
  for (Index k = 0; k < K; ++k) {
    lw[k + 1] = c.weights[k + 1] > 0.0
                    ? std::log(c.weights[k + 1]) + math::log_normal_pdf(betaBar, c.means[k], sigma02 + c.variances[k])
                    : math::kNegInf;
  }
  const double logZ = math::logsumexp(lw);
  VectorXd mean(K + 1), var(K + 1), gamma(K + 1);
  mean[0] = 0.0;
  var[0] = 0.0;
  for (Index k = 0; k < K; ++k) {
    // precision-weighted form, written to stay finite as sigma_k^2 -> 0
    const double s2 = c.variances[k];
    mean[k + 1] = (betaBar * s2 + c.means[k] * sigma02) / (sigma02 + s2);
    var[k + 1] = sigma02 * s2 / (sigma02 + s2);
  }
  for (Index m = 0; m <= K; ++m) gamma[m] = std::exp(lw[m] - logZ);
  PosteriorSummary s;
  s.logMarginal = logZ;
  s.mean = gamma.dot(mean);
  double v = 0.0;
  for (Index m = 0; m <= K; ++m) v += gamma[m] * (var[m] + (mean[m] - s.mean) * (mean[m] - s.mean));
  s.variance = std::max(v, 0.0);
  s.nullProb = gamma[0];
  return s;
}

namespace {

std::vector<double> to_vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

SoftmaxPrior::SoftmaxPrior(MatrixXd features, SoftmaxPriorConfig config)
    : D_(std::move(features)), config_(std::move(config)) {
  if (D_.cols() < 1) throw Error(ErrorKind::InvalidArgument, "softmax prior requires side information");
  if (!D_.allFinite()) throw Error(ErrorKind::NonFinite, "non-finite side information");
  config_.train.validate();
  if (config_.grid) grid_ = config_.grid;
}

std::vector<PosteriorSummary> SoftmaxPrior::solve(const VectorXd& betaBar, double sigma02) {
  if (betaBar.size() != D_.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "side information has " + std::to_string(D_.rows()) +
                                                  " rows, expected " + std::to_string(betaBar.size()));
  }
  if (!grid_) grid_ = ash::default_grid(betaBar, sigma02, config_.gridSize);
  const MatrixXd L = ash::marginal_loglik_matrix(betaBar, sigma02, *grid_);
  const int M = static_cast<int>(grid_->size());
  int steps = config_.train.stepsAfterFirst;
  if (!initialized_) {
    net_ = SoftmaxPriorNet(static_cast<int>(D_.cols()), config_.hidden, M);
    net_.init_random(config_.train.seed, config_.initScale);
    net_.W2().setZero();
    if (config_.initFromEm) {
      const auto em = ash::fit_weights_em(L, ash::MixtureWeights::uniform(M));
      net_.b2() = (em.weights.pi().array() + 1e-8).log();
    }
    initialized_ = true;
    steps = config_.train.steps;
  }
  reports_.push_back(train_softmax(net_, D_, L, config_.train, steps, &adam_));
  logPi_ = log_weights(net_, D_);
  std::vector<PosteriorSummary> out;
  out.reserve(static_cast<std::size_t>(betaBar.size()));
  for (Index j = 0; j < betaBar.size(); ++j) {
    const VectorXd pi = logPi_.row(j).array().exp().transpose();
    out.push_back(ash::posterior_summary(betaBar[j], sigma02, *grid_, pi));
  }
  return out;
}

VectorXd SoftmaxPrior::null_weights() const {
  if (logPi_.size() == 0) return VectorXd::Zero(D_.rows());
  return logPi_.col(0).array().exp();
}

nlohmann::json SoftmaxPrior::parameters() const {
  nlohmann::json j;
  j["architecture"] = {{"type", "softmax"}, {"depth", config_.hidden > 0 ? 1 : 0}, {"hidden", config_.hidden}};
  j["variances"] = grid_ ? to_vec(grid_->variances()) : std::vector<double>{};
  j["network"] = net_.to_json();
  return j;
}

MdnPrior::MdnPrior(MatrixXd features, MdnPriorConfig config) : D_(std::move(features)), config_(std::move(config)) {
  if (D_.cols() < 1) throw Error(ErrorKind::InvalidArgument, "mdn prior requires side information");
  if (!D_.allFinite()) throw Error(ErrorKind::NonFinite, "non-finite side information");
  if (config_.components < 1) throw Error(ErrorKind::InvalidArgument, "mdn prior needs at least one component");
  config_.train.validate();
}

std::vector<PosteriorSummary> MdnPrior::solve(const VectorXd& betaBar, double sigma02) {
  if (betaBar.size() != D_.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "side information has " + std::to_string(D_.rows()) +
                                                  " rows, expected " + std::to_string(betaBar.size()));
  }
  const int K = config_.components;
  int steps = config_.train.stepsAfterFirst;
  if (!initialized_) {
    net_ = MdnPriorNet(static_cast<int>(D_.cols()), config_.hidden, K);
    net_.init_random(config_.train.seed, config_.initScale);
    // Biases: half the mass on the null, component means at spread quantiles
    // of the observations, variances at their spread.
    std::vector<double> sorted(betaBar.data(), betaBar.data() + betaBar.size());
    std::sort(sorted.begin(), sorted.end());
    const double spread = std::max(betaBar.squaredNorm() / static_cast<double>(betaBar.size()), sigma02);
    auto b2 = net_.b2();
    b2[0] = std::log(0.5);
    for (int k = 0; k < K; ++k) {
      b2[1 + k] = std::log(0.5 / K);
      const auto q = static_cast<std::size_t>((k + 0.5) / K * static_cast<double>(sorted.size() - 1));
      b2[1 + K + k] = sorted[q];
      b2[1 + 2 * K + k] = std::log(spread);
    }
    initialized_ = true;
    steps = config_.train.steps;
  }
  reports_.push_back(train_mdn(net_, D_, betaBar, sigma02, config_.train, steps, &adam_));
  std::vector<PosteriorSummary> out;
  out.reserve(static_cast<std::size_t>(betaBar.size()));
  nullW_.resize(betaBar.size());
  for (Index j = 0; j < betaBar.size(); ++j) {
    const MdnOutput c = mdn_forward(net_, D_.row(j).transpose());
    nullW_[j] = c.weights[0];
    out.push_back(mdn_posterior(betaBar[j], sigma02, c));
  }
  return out;
}

VectorXd MdnPrior::null_weights() const {
  if (nullW_.size() == 0) return VectorXd::Zero(D_.rows());
  return nullW_;
}

nlohmann::json MdnPrior::parameters() const {
  nlohmann::json j;
  j["architecture"] = {{"type", "mdn"},
                       {"depth", config_.hidden > 0 ? 1 : 0},
                       {"hidden", config_.hidden},
                       {"components", config_.components}};
  j["network"] = net_.to_json();
  return j;
}

}  // namespace nash::nets
