#include "nash/ash.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nash/error.hpp"
#include "nash/math.hpp"

namespace nash::ash {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

MixtureGrid::MixtureGrid(VectorXd variances) : variances_(std::move(variances)) {
  if (variances_.size() < 1) throw Error(ErrorKind::InvalidArgument, "mixture grid is empty");
  if (variances_[0] != 0.0) throw Error(ErrorKind::InvalidArgument, "first grid variance must be 0");
  if (!variances_.allFinite()) throw Error(ErrorKind::NonFinite, "non-finite grid variance");
  for (Index m = 1; m < variances_.size(); ++m) {
    if (!(variances_[m] > variances_[m - 1])) {
      throw Error(ErrorKind::InvalidArgument, "grid variances must strictly ascend");
    }
  }
}

MixtureWeights::MixtureWeights(VectorXd pi) : pi_(std::move(pi)) {
  if (pi_.size() < 1) throw Error(ErrorKind::InvalidArgument, "mixture weights are empty");
  if ((pi_.array() < 0.0).any() || !pi_.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "mixture weights must be finite and non-negative");
  }
  const double total = pi_.sum();
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorKind::InvalidArgument, "mixture weights must sum to 1");
  pi_ /= total;
}

MixtureWeights MixtureWeights::uniform(Index m) {
  return MixtureWeights(VectorXd::Constant(m, 1.0 / static_cast<double>(m)));
}

MixtureGrid default_grid(const VectorXd& betaBar, double sigma02, Index m) {
  if (m < 2) throw Error(ErrorKind::InvalidArgument, "grid needs at least 2 components");
  if (!(sigma02 > 0.0)) throw Error(ErrorKind::NonPositiveVariance, "sigma0^2 must be positive");
  const double maxSq = betaBar.size() > 0 ? betaBar.array().square().maxCoeff() : 0.0;
  const double upper = std::max(4.0 * (maxSq - sigma02), sigma02);
  const double lower = sigma02 / 100.0;
  VectorXd v(m);
  v[0] = 0.0;
  if (m == 2) {
    v[1] = upper;
  } else {
    const double logLo = std::log(lower);
    const double step = (std::log(upper) - logLo) / static_cast<double>(m - 2);
    for (Index k = 1; k < m; ++k) v[k] = std::exp(logLo + step * static_cast<double>(k - 1));
    v[m - 1] = upper;
  }
  return MixtureGrid(std::move(v));
}

MatrixXd marginal_loglik_matrix(const VectorXd& betaBar, double sigma02, const MixtureGrid& grid) {
  if (!(sigma02 > 0.0)) throw Error(ErrorKind::NonPositiveVariance, "sigma0^2 must be positive");
  MatrixXd L(betaBar.size(), grid.size());
  for (Index m = 0; m < grid.size(); ++m) {
    const double var = sigma02 + grid[m];
    for (Index j = 0; j < betaBar.size(); ++j) L(j, m) = math::log_normal_pdf(betaBar[j], 0.0, var);
  }
  return L;
}

namespace {

struct ScaledLikelihood {
  MatrixXd expL;      // exp(L - rowMax)
  VectorXd rowMax;
};

ScaledLikelihood scale_rows(const MatrixXd& L) {
  ScaledLikelihood s;
  s.rowMax = L.rowwise().maxCoeff();
  s.expL = (L.colwise() - s.rowMax).array().exp();
  return s;
}

double scaled_objective(const ScaledLikelihood& s, const VectorXd& pi) {
  const VectorXd mix = s.expL * pi;
  return s.rowMax.sum() + mix.array().log().sum();
}

}  // namespace

double mixture_objective(const MatrixXd& logLik, const VectorXd& pi) {
  return scaled_objective(scale_rows(logLik), pi);
}

EmResult fit_weights_em(const MatrixXd& logLik, const MixtureWeights& init, int maxIter, double tol) {
  if (logLik.cols() != init.size()) {
    throw Error(ErrorKind::DimensionMismatch, "likelihood columns differ from weight count");
  }
  if (!logLik.allFinite()) throw Error(ErrorKind::NonFinite, "non-finite likelihood matrix");
  EmResult out;
  const Index M = logLik.cols();
  const Index p = logLik.rows();
  if (M == 1 || p == 0) {
    out.weights = M == 1 ? MixtureWeights(VectorXd::Ones(1)) : init;
    out.objective = p == 0 ? 0.0 : logLik.sum();
    out.trace.push_back(out.objective);
    return out;
  }
  const ScaledLikelihood s = scale_rows(logLik);
  VectorXd pi = init.pi();
  double obj = scaled_objective(s, pi);
  out.trace.push_back(obj);
  const double invP = 1.0 / static_cast<double>(p);
  for (int it = 0; it < maxIter; ++it) {
    const VectorXd mix = s.expL * pi;
    // pi_m <- mean_j pi_m E_jm / (E pi)_j
    const VectorXd colAvg = s.expL.transpose() * mix.cwiseInverse();
    VectorXd next = pi.cwiseProduct(colAvg) * invP;
    next /= next.sum();
    const double nextObj = scaled_objective(s, next);
    pi = std::move(next);
    ++out.iterations;
    out.trace.push_back(nextObj);
    const double change = std::abs(nextObj - obj);
    obj = nextObj;
    if (change <= tol * std::max(1.0, std::abs(obj))) break;
  }
  out.weights = MixtureWeights(pi);
  out.objective = obj;
  return out;
}

PosteriorSummary posterior_summary(double betaBar, double sigma02, const MixtureGrid& grid,
                                   const Eigen::Ref<const VectorXd>& pi) {
  const Index M = grid.size();
  if (pi.size() != M) throw Error(ErrorKind::DimensionMismatch, "weights differ from grid size");
  double logw[64];
  std::vector<double> heap;
  double* lw = logw;
  if (M > 64) {
    heap.resize(static_cast<std::size_t>(M));
    lw = heap.data();
  }
  for (Index m = 0; m < M; ++m) {
    lw[m] = pi[m] > 0.0 ? std::log(pi[m]) + math::log_normal_pdf(betaBar, 0.0, sigma02 + grid[m]) : math::kNegInf;
  }
  const double logZ = math::logsumexp(std::span<const double>(lw, static_cast<std::size_t>(M)));
  PosteriorSummary s;
  s.logMarginal = logZ;
  double mean = 0.0;
  for (Index m = 0; m < M; ++m) {
    const double gamma = std::exp(lw[m] - logZ);
    const double shrink = grid[m] / (grid[m] + sigma02);
    mean += gamma * betaBar * shrink;
  }
  double var = 0.0;
  for (Index m = 0; m < M; ++m) {
    const double gamma = std::exp(lw[m] - logZ);
    const double shrink = grid[m] / (grid[m] + sigma02);
    const double mm = betaBar * shrink;
    var += gamma * (sigma02 * shrink + (mm - mean) * (mm - mean));
  }
  s.mean = mean;
  s.variance = std::max(var, 0.0);
  s.nullProb = std::exp(lw[0] - logZ);
  return s;
}

CebnmResult cebnm_solve(const VectorXd& betaBar, double sigma02, const AshConfig& config) {
  CebnmResult r;
  r.grid = config.grid ? *config.grid : default_grid(betaBar, sigma02, config.gridSize);
  const MatrixXd L = marginal_loglik_matrix(betaBar, sigma02, r.grid);
  const MixtureWeights init = config.initWeights ? *config.initWeights : MixtureWeights::uniform(r.grid.size());
  r.weights = fit_weights_em(L, init, config.emMaxIter, config.emTol).weights;
  r.summaries.reserve(static_cast<std::size_t>(betaBar.size()));
  for (Index j = 0; j < betaBar.size(); ++j) {
    r.summaries.push_back(posterior_summary(betaBar[j], sigma02, r.grid, r.weights.pi()));
  }
  return r;
}

AshPrior::AshPrior(AshConfig config) : config_(std::move(config)) {
  if (config_.grid) grid_ = config_.grid;
  if (config_.initWeights) weights_ = config_.initWeights;
}

std::vector<PosteriorSummary> AshPrior::solve(const VectorXd& betaBar, double sigma02) {
  if (config_.grid) {
    grid_ = config_.grid;
  } else if (!grid_ || !config_.fixedGrid) {
    grid_ = default_grid(betaBar, sigma02, config_.gridSize);
  }
  if (!weights_ || weights_->size() != grid_->size()) weights_ = MixtureWeights::uniform(grid_->size());
  AshConfig step = config_;
  step.grid = grid_;
  step.initWeights = weights_;
  CebnmResult r = cebnm_solve(betaBar, sigma02, step);
  weights_ = r.weights;
  p_ = betaBar.size();
  return std::move(r.summaries);
}

VectorXd AshPrior::null_weights() const {
  return VectorXd::Constant(p_, weights_ ? (*weights_)[0] : 0.0);
}

nlohmann::json AshPrior::parameters() const {
  nlohmann::json j;
  const auto toVec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  j["variances"] = grid_ ? toVec(grid_->variances()) : std::vector<double>{};
  j["weights"] = weights_ ? toVec(weights_->pi()) : std::vector<double>{};
  return j;
}

}  // namespace nash::ash
