#include "nash/engine.hpp"

#include <cmath>
#include <iostream>
#include <string>

#include "nash/error.hpp"
#include "nash/math.hpp"

namespace nash {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void FitConfig::validate() const {
  if (maxSweeps < 1) throw Error(ErrorKind::InvalidArgument, "maxSweeps must be >= 1");
  if (!(elboTol > 0.0)) throw Error(ErrorKind::InvalidArgument, "elboTol must be positive");
}

double compute_omega(double columnNorm2, double sigma2, double sigma02) {
  if (!(sigma2 > 0.0) || !(sigma02 > 0.0)) {
    throw Error(ErrorKind::NonPositiveVariance, "variances must be positive");
  }
  return columnNorm2 * sigma02 / (sigma2 + columnNorm2 * sigma02);
}

double compute_omega(int n, double sigma2, double sigma02) {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "n must be >= 2");
  return compute_omega(static_cast<double>(n - 1), sigma2, sigma02);
}

VectorXd partial_residual(const FitState& state, Index j, const Eigen::Ref<const VectorXd>& xj) {
  if (j < 0 || j >= state.betaBar.size()) throw Error(ErrorKind::IndexOutOfRange, "coordinate " + std::to_string(j));
  if (xj.size() != state.rBar.size()) throw Error(ErrorKind::LengthMismatch, "column length differs from n");
  return state.rBar + xj * state.betaBar[j];
}

namespace {

double clamp_variance(double v, FitState& state, const char* what) {
  if (std::isfinite(v) && v >= kVarianceFloor) return v;
  if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteGradient, std::string("non-finite ") + what);
  if (state.clampCount++ == 0) {
    std::cerr << "warning: " << what << " update fell below " << kVarianceFloor << "; clamped\n";
  }
  return kVarianceFloor;
}

}  // namespace

FitState initial_state(const StandardizedDesign& design, const FitConfig& config) {
  const Index n = design.n();
  const Index p = design.p();
  FitState s;
  s.betaBar = VectorXd::Zero(p);
  s.bBar = VectorXd::Zero(p);
  s.bVar = VectorXd::Zero(p);
  s.betaMle = VectorXd::Zero(p);
  if (config.initMode == InitMode::Provided && config.initBeta.size() > 0) {
    if (config.initBeta.size() != p) throw Error(ErrorKind::LengthMismatch, "initial coefficients length");
    s.betaBar = config.initBeta;
    s.bBar = config.initBeta;
  }
  s.rBar = design.ys - design.Xs * s.betaBar;
  const double varY = design.ys.squaredNorm() / static_cast<double>(n - 1);
  s.sigma2 = std::max(config.initSigma2.value_or(varY), kVarianceFloor);
  s.sigma02 = std::max(config.initSigma02.value_or(s.sigma2 / static_cast<double>(p)), kVarianceFloor);
  s.omega = compute_omega(design.column_norm2(), s.sigma2, s.sigma02);
  s.sJ2 = 1.0 / (design.column_norm2() / s.sigma2 + 1.0 / s.sigma02);
  return s;
}

double elbo_likelihood_term(const FitState& state, const StandardizedDesign& design) {
  const double n = static_cast<double>(design.n());
  const double p = static_cast<double>(design.p());
  const double c = design.column_norm2();
  const double rss = state.rBar.squaredNorm();
  return -0.5 * n * (math::kLog2Pi + std::log(state.sigma2)) - (rss + c * p * state.sJ2) / (2.0 * state.sigma2) +
         0.5 * p * (math::kLog2Pi + 1.0 + std::log(state.sJ2));
}

double elbo_split_term(const FitState& state) {
  const double p = static_cast<double>(state.betaBar.size());
  const double ss = (state.betaBar - state.bBar).squaredNorm() + state.bVar.sum() + p * state.sJ2;
  return -0.5 * p * (math::kLog2Pi + std::log(state.sigma02)) - ss / (2.0 * state.sigma02);
}

double compute_elbo(const FitState& state, const StandardizedDesign& design) {
  if (!state.posteriorFresh) {
    throw Error(ErrorKind::StaleState, "ELBO requested after the posterior was invalidated");
  }
  const double t1 = elbo_likelihood_term(state, design);
  const double t2 = elbo_split_term(state);
  double t3 = 0.0;
  const double logNorm = 0.5 * (math::kLog2Pi + std::log(state.sigma02));
  for (Index j = 0; j < state.betaBar.size(); ++j) {
    const double d = state.betaBar[j] - state.bBar[j];
    t3 += state.summaries[j].logMarginal + logNorm + (state.bVar[j] + d * d) / (2.0 * state.sigma02);
  }
  return t1 + t2 + t3;
}

double update_sigma2(const FitState& state, const StandardizedDesign& design, VarianceRule rule) {
  const double n = static_cast<double>(design.n());
  const double p = static_cast<double>(design.p());
  const double rss = state.rBar.squaredNorm();
  if (rule == VarianceRule::ExactCavi) {
    return (rss + design.column_norm2() * p * state.sJ2) / n;
  }
  const double cross = state.betaBar.dot(state.betaMle - state.betaBar);
  return (rss + cross + state.sigma2 * p) / (n + p);
}

double update_sigma02(const FitState& state, const StandardizedDesign& design, VarianceRule rule,
                      const VectorXd& nullWeights) {
  const double p = static_cast<double>(state.betaBar.size());
  if (rule == VarianceRule::ExactCavi) {
    return ((state.betaBar - state.bBar).squaredNorm() + state.bVar.sum() + p * state.sJ2) / p;
  }
  const double n = static_cast<double>(design.n());
  const double nonNull = 1.0 - (nullWeights.size() > 0 ? nullWeights.mean() : 0.0);
  const double rss = (design.ys - design.Xs * state.bBar).squaredNorm();
  const double cross = state.bBar.dot(state.betaBar - state.bBar);
  return (rss + cross + state.sigma02 * p * nonNull) / (n + p * nonNull);
}

void sweep(FitState& state, const StandardizedDesign& design, PriorModel& prior, const FitConfig& config) {
  const Index p = design.p();
  const double c = design.column_norm2();
  state.posteriorFresh = false;
  state.sJ2 = 1.0 / (c / state.sigma2 + 1.0 / state.sigma02);
  state.omega = compute_omega(c, state.sigma2, state.sigma02);

  for (Index j = 0; j < p; ++j) {
    const auto xj = design.Xs.col(j);
    state.rBar.noalias() += xj * state.betaBar[j];
    const double mle = xj.dot(state.rBar) / c;
    state.betaMle[j] = mle;
    state.betaBar[j] = update_beta_j(mle, state.bBar[j], state.omega);
    state.rBar.noalias() -= xj * state.betaBar[j];
  }

  state.summaries = prior.solve(state.betaBar, state.sigma02);
  if (static_cast<Index>(state.summaries.size()) != p) {
    throw Error(ErrorKind::DimensionMismatch, "prior returned wrong number of posterior summaries");
  }
  for (Index j = 0; j < p; ++j) {
    state.bBar[j] = state.summaries[j].mean;
    state.bVar[j] = state.summaries[j].variance;
  }
  state.posteriorFresh = true;
  const double elbo = compute_elbo(state, design);
  if (!std::isfinite(elbo)) throw Error(ErrorKind::NonFiniteGradient, "non-finite ELBO");
  state.elboTrace.push_back(elbo);
  ++state.sweepCount;

  if (!config.fixVariances) {
    const double s2 = clamp_variance(update_sigma2(state, design, config.varianceRule), state, "sigma^2");
    state.sigma2 = s2;
    const VectorXd nullW = config.varianceRule == VarianceRule::FixedPoint ? prior.null_weights() : VectorXd();
    state.sigma02 =
        clamp_variance(update_sigma02(state, design, config.varianceRule, nullW), state, "sigma0^2");
    state.posteriorFresh = false;
  }
  state.omega = compute_omega(c, state.sigma2, state.sigma02);
}

FitResult fit_design(const StandardizedDesign& design, PriorModel& prior, const FitConfig& config) {
  config.validate();
  FitResult result;
  result.config = config;
  FitState state = initial_state(design, config);
  for (int t = 0; t < config.maxSweeps; ++t) {
    sweep(state, design, prior, config);
    const auto& tr = state.elboTrace;
    if (tr.size() >= 2) {
      const double prev = tr[tr.size() - 2];
      const double rel = std::abs(tr.back() - prev) / std::max(std::abs(prev), 1e-300);
      if (rel < config.elboTol) {
        result.converged = true;
        break;
      }
    }
  }
  result.sweeps = state.sweepCount;
  const RawCoefficients raw = unstandardize(state.betaBar, design);
  result.coefficients = raw.coefficients;
  result.intercept = raw.intercept;
  result.latentCoefficients = unstandardize(state.bBar, design).coefficients;
  result.summaries = state.summaries;
  result.priorParameters = prior.parameters();
  result.priorKind = prior.kind();
  result.state = std::move(state);
  return result;
}

FitResult fit(const Dataset& data, const SideInfo& side, PriorModel& prior, const FitConfig& config,
              const StandardizeOptions& options) {
  side.validate(data.p());
  const StandardizedDesign design = standardize(data, options);
  return fit_design(design, prior, config);
}

VectorXd predict(const FitResult& result, const MatrixXd& Xnew) {
  if (Xnew.cols() != result.coefficients.size()) {
    throw Error(ErrorKind::DimensionMismatch, "new data has " + std::to_string(Xnew.cols()) +
                                                  " columns, model expects " +
                                                  std::to_string(result.coefficients.size()));
  }
  return (Xnew * result.coefficients).array() + result.intercept;
}

}  // namespace nash
