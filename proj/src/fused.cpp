#include "nash/fused.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include <Eigen/Eigenvalues>

#include "nash/error.hpp"
#include "nash/math.hpp"
#include "nash/message_net.hpp"

namespace nash::fused {

using Eigen::Index;
using Eigen::VectorXd;

constexpr double kInf = std::numeric_limits<double>::infinity();

void FusedScales::validate() const {
  if (!(s1 > 0.0) || !(s2 > 0.0) || !std::isfinite(s1) || !std::isfinite(s2)) {
    throw Error(ErrorKind::InvalidArgument, "fused scales must be positive and finite");
  }
}

double fused_log_density(double b, std::optional<double> leftMean, std::optional<double> rightMean,
                         const FusedScales& scales) {
  double v = -std::abs(b) / scales.s1;
  if (leftMean) v -= std::abs(b - *leftMean) / scales.s2;
  if (rightMean) v -= std::abs(b - *rightMean) / scales.s2;
  return v;
}

const GaussHermiteRule& gauss_hermite(int nodes) {
  if (nodes < 1) throw Error(ErrorKind::InvalidArgument, "Gauss-Hermite needs at least one node");
  static std::mutex mu;
  static std::map<int, GaussHermiteRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(nodes);
  if (it != cache.end()) return it->second;
  // Jacobi matrix of the Hermite recurrence: zero diagonal, sqrt(i/2) off-diagonal.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nodes, nodes);
  for (int i = 1; i < nodes; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(0.5 * i);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  GaussHermiteRule rule;
  for (int i = 0; i < nodes; ++i) {
    rule.nodes.push_back(es.eigenvalues()[i]);
    const double v0 = es.eigenvectors()(0, i);
    rule.weights.push_back(std::sqrt(std::numbers::pi) * v0 * v0);
  }
  return cache.emplace(nodes, std::move(rule)).first->second;
}

PosteriorSummary gh_posterior(double betaBar, double sigma02, const std::function<double(double)>& logPrior,
                              int nodes) {
  if (nodes < 8) throw Error(ErrorKind::InvalidArgument, "Gauss-Hermite posterior needs at least 8 nodes");
  if (!(sigma02 > 0.0)) throw Error(ErrorKind::NonPositiveVariance, "sigma0^2 must be positive");
  const GaussHermiteRule& rule = gauss_hermite(nodes);
  const double sd = std::sqrt(sigma02);
  std::vector<double> lw(static_cast<std::size_t>(nodes));
  std::vector<double> b(static_cast<std::size_t>(nodes));
  // kappa widens the rule once if every node underflows; the Gaussian
  // weight is then corrected by exp(-(kappa^2 - 1) t^2).
  for (double kappa : {1.0, 4.0}) {
    for (int i = 0; i < nodes; ++i) {
      const double t = rule.nodes[static_cast<std::size_t>(i)];
      b[static_cast<std::size_t>(i)] = betaBar + std::numbers::sqrt2 * sd * kappa * t;
      lw[static_cast<std::size_t>(i)] = std::log(rule.weights[static_cast<std::size_t>(i)]) + std::log(kappa) -
                                        0.5 * std::log(std::numbers::pi) - (kappa * kappa - 1.0) * t * t +
                                        logPrior(b[static_cast<std::size_t>(i)]);
    }
    const double logZ = math::logsumexp(lw);
    if (!std::isfinite(logZ)) continue;
    PosteriorSummary s;
    s.logMarginal = logZ;
    double mean = 0.0;
    for (int i = 0; i < nodes; ++i) mean += std::exp(lw[static_cast<std::size_t>(i)] - logZ) * b[static_cast<std::size_t>(i)];
    double var = 0.0;
    for (int i = 0; i < nodes; ++i) {
      const double d = b[static_cast<std::size_t>(i)] - mean;
      var += std::exp(lw[static_cast<std::size_t>(i)] - logZ) * d * d;
    }
    s.mean = mean;
    s.variance = var;
    s.nullProb = 0.0;
    return s;
  }
  throw Error(ErrorKind::QuadratureUnderflow, "all quadrature weights vanished");
}

namespace {

// log of the integral of exp(A + B b) over [lo, hi]
double log_exp_integral(double A, double B, double lo, double hi) {
  const double L = hi - lo;
  if (B > 0.0) return A + B * hi + std::log(-std::expm1(-B * L)) - std::log(B);
  if (B < 0.0) return A + B * lo + std::log(-std::expm1(B * L)) - std::log(-B);
  return A + std::log(L);
}

// mean of the density proportional to exp(B b) on [lo, hi]
double exp_segment_mean(double B, double lo, double hi) {
  if (lo == -kInf) return hi - 1.0 / B;
  if (hi == kInf) return lo - 1.0 / B;
  const double L = hi - lo;
  const double x = B * L;
  if (std::abs(x) < 1e-8) return lo + 0.5 * L;
  return lo + L / (-std::expm1(-x)) - 1.0 / B;
}

struct Segment {
  double lo, hi, A, B;
};

std::vector<Segment> segments(std::span<const LaplaceFactor> factors) {
  std::vector<double> knots;
  knots.reserve(factors.size());
  for (const auto& f : factors) {
    if (!(f.scale > 0.0) || !std::isfinite(f.scale) || !std::isfinite(f.center)) {
      throw Error(ErrorKind::InvalidArgument, "Laplace factor needs a finite center and positive scale");
    }
    knots.push_back(f.center);
  }
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
  std::vector<Segment> segs;
  segs.reserve(knots.size() + 1);
  for (std::size_t k = 0; k <= knots.size(); ++k) {
    Segment s;
    s.lo = k == 0 ? -kInf : knots[k - 1];
    s.hi = k == knots.size() ? kInf : knots[k];
    s.A = 0.0;
    s.B = 0.0;
    for (const auto& f : factors) {
      // on this segment b >= center iff the segment starts at or right of it
      if (s.lo >= f.center) {
        s.A += f.center / f.scale;
        s.B -= 1.0 / f.scale;
      } else {
        s.A -= f.center / f.scale;
        s.B += 1.0 / f.scale;
      }
    }
    segs.push_back(s);
  }
  return segs;
}

struct SegmentPosterior {
  double logMass;
  double mean;
  double var;
};

SegmentPosterior segment_posterior(const Segment& s, double betaBar, double sigma02, bool moments) {
  const double sd = std::sqrt(sigma02);
  const double mu = betaBar + s.B * sigma02;
  const double a = (s.lo - mu) / sd;
  const double b = (s.hi - mu) / sd;
  const double logZt = math::log_normal_interval(a, b);
  SegmentPosterior out{s.A + s.B * betaBar + 0.5 * s.B * s.B * sigma02 + logZt, mu, 0.0};
  if (!moments || !std::isfinite(logZt)) return out;
  const double la = std::isfinite(a) ? std::exp(math::log_normal_density_std(a) - logZt) : 0.0;
  const double lb = std::isfinite(b) ? std::exp(math::log_normal_density_std(b) - logZt) : 0.0;
  const double ala = std::isfinite(a) ? a * la : 0.0;
  const double blb = std::isfinite(b) ? b * lb : 0.0;
  out.mean = std::clamp(mu + sd * (la - lb), s.lo, s.hi);
  double v = sigma02 * (1.0 + ala - blb - (la - lb) * (la - lb));
  if (std::isfinite(s.lo) && std::isfinite(s.hi)) v = std::min(v, 0.25 * (s.hi - s.lo) * (s.hi - s.lo));
  out.var = std::max(v, 0.0);
  return out;
}

}  // namespace

double log_prior_normalizer(std::span<const LaplaceFactor> factors) {
  if (factors.empty()) throw Error(ErrorKind::InvalidArgument, "prior needs at least one factor");
  const auto segs = segments(factors);
  std::vector<double> lz;
  for (const auto& s : segs) lz.push_back(log_exp_integral(s.A, s.B, s.lo, s.hi));
  return math::logsumexp(lz);
}

PosteriorSummary laplace_product_posterior(double betaBar, double sigma02, std::span<const LaplaceFactor> factors,
                                           std::vector<FactorGradient>* gradients) {
  if (!(sigma02 > 0.0)) throw Error(ErrorKind::NonPositiveVariance, "sigma0^2 must be positive");
  if (factors.empty()) throw Error(ErrorKind::InvalidArgument, "prior needs at least one factor");
  const auto segs = segments(factors);
  const std::size_t S = segs.size();
  std::vector<SegmentPosterior> post(S);
  std::vector<double> lm(S), lz(S);
  for (std::size_t k = 0; k < S; ++k) {
    post[k] = segment_posterior(segs[k], betaBar, sigma02, true);
    lm[k] = post[k].logMass;
    lz[k] = log_exp_integral(segs[k].A, segs[k].B, segs[k].lo, segs[k].hi);
  }
  const double logM = math::logsumexp(lm);
  const double logZ = math::logsumexp(lz);
  if (!std::isfinite(logM)) throw Error(ErrorKind::QuadratureUnderflow, "posterior mass underflowed");
  std::vector<double> w(S), wz(S);
  for (std::size_t k = 0; k < S; ++k) {
    w[k] = std::exp(lm[k] - logM);
    wz[k] = std::exp(lz[k] - logZ);
  }
  PosteriorSummary out;
  out.logMarginal = logM - logZ;
  double mean = 0.0;
  for (std::size_t k = 0; k < S; ++k) {
    if (w[k] > 0.0) mean += w[k] * post[k].mean;
  }
  double var = 0.0;
  for (std::size_t k = 0; k < S; ++k) {
    if (w[k] > 0.0) var += w[k] * (post[k].var + (post[k].mean - mean) * (post[k].mean - mean));
  }
  out.mean = mean;
  out.variance = std::max(var, 0.0);
  out.nullProb = 0.0;

  if (gradients) {
    gradients->assign(factors.size(), {});
    std::vector<double> priorMean(S);
    for (std::size_t k = 0; k < S; ++k) priorMean[k] = exp_segment_mean(segs[k].B, segs[k].lo, segs[k].hi);
    for (std::size_t f = 0; f < factors.size(); ++f) {
      const double c = factors[f].center;
      const double s = factors[f].scale;
      double postSign = 0.0, priorSign = 0.0, postAbs = 0.0, priorAbs = 0.0;
      for (std::size_t k = 0; k < S; ++k) {
        const double sign = segs[k].lo >= c ? 1.0 : -1.0;
        if (w[k] > 0.0) {
          postSign += w[k] * sign;
          postAbs += w[k] * sign * (post[k].mean - c);
        }
        if (wz[k] > 0.0) {
          priorSign += wz[k] * sign;
          priorAbs += wz[k] * sign * (priorMean[k] - c);
        }
      }
      (*gradients)[f].dCenter = (postSign - priorSign) / s;
      (*gradients)[f].dLogScale = (postAbs - priorAbs) / s;
    }
  }
  return out;
}

std::vector<LaplaceFactor> node_factors(std::span<const double> centers, const FusedScales& scales,
                                        double s2Factor) {
  std::vector<LaplaceFactor> f;
  f.reserve(centers.size() + 1);
  f.push_back({0.0, scales.s1});
  for (double c : centers) f.push_back({c, scales.s2 * s2Factor});
  return f;
}

PosteriorSummary fused_posterior(double betaBar, double sigma02, std::span<const double> centers,
                                 const FusedScales& scales, Quadrature q, int ghNodes, double s2Factor) {
  const auto factors = node_factors(centers, scales, s2Factor);
  if (q == Quadrature::Exact) return laplace_product_posterior(betaBar, sigma02, factors);
  const double logZ = log_prior_normalizer(factors);
  auto logPrior = [&](double b) {
    double v = -logZ;
    for (const auto& f : factors) v -= std::abs(b - f.center) / f.scale;
    return v;
  };
  return gh_posterior(betaBar, sigma02, logPrior, ghNodes);
}

NeighborSummary neighbor_summary(const Graph& graph, const VectorXd& bBar, const FusedScales& scales, Index j,
                                 NeighborMode mode) {
  if (bBar.size() != graph.size()) throw Error(ErrorKind::LengthMismatch, "posterior means differ from node count");
  const auto nb = graph.neighbors(j);
  NeighborSummary s;
  if (nb.empty()) {
    s.isolated = true;
    s.v1 = 0.0;
    s.s2 = scales.s1;
    return s;
  }
  double sum = 0.0;
  for (Index k : nb) sum += bBar[k];
  s.v1 = sum / static_cast<double>(nb.size());
  s.s2 = scales.s2;
  const bool separate = mode == NeighborMode::Separate || (mode == NeighborMode::Auto && graph.kind() == GraphKind::Chain);
  if (separate) {
    for (Index k : nb) s.centers.push_back(bBar[k]);
  } else {
    s.centers.push_back(s.v1);
  }
  return s;
}

std::vector<NeighborSummary> neighbor_summaries(const Graph& graph, const VectorXd& bBar, const FusedScales& scales,
                                                const MessageNet* net, const VectorXd* observed, NeighborMode mode) {
  std::vector<NeighborSummary> out;
  out.reserve(static_cast<std::size_t>(graph.size()));
  for (Index j = 0; j < graph.size(); ++j) out.push_back(neighbor_summary(graph, bBar, scales, j, mode));
  if (net) {
    const VectorXd& y = observed ? *observed : bBar;
    const auto msg = net->forward(graph, MessageNet::node_features(graph, y, bBar), bBar);
    for (Index j = 0; j < graph.size(); ++j) {
      auto& s = out[static_cast<std::size_t>(j)];
      if (s.isolated) continue;
      s.v1 = msg.v1[j];
      s.s2Factor = std::exp(msg.logS2Offset[j]);
      s.s2 = scales.s2 * s.s2Factor;
      s.centers.assign(1, s.v1);
    }
  }
  return out;
}

namespace {

double node_log_marginal(double betaBar, double sigma02, const NeighborSummary& nb, const FusedScales& scales) {
  const auto factors = node_factors(nb.centers, scales, nb.s2Factor);
  const auto segs = segments(factors);
  double lm = math::kNegInf, lz = math::kNegInf;
  for (const auto& s : segs) {
    lm = math::logaddexp(lm, segment_posterior(s, betaBar, sigma02, false).logMass);
    lz = math::logaddexp(lz, log_exp_integral(s.A, s.B, s.lo, s.hi));
  }
  return lm - lz;
}

}  // namespace

double fused_objective(const VectorXd& betaBar, double sigma02, const std::vector<NeighborSummary>& nbrs,
                       const FusedScales& scales) {
  if (static_cast<Index>(nbrs.size()) != betaBar.size()) {
    throw Error(ErrorKind::LengthMismatch, "neighbor summaries differ from node count");
  }
  double total = 0.0;
  for (Index j = 0; j < betaBar.size(); ++j) {
    total += node_log_marginal(betaBar[j], sigma02, nbrs[static_cast<std::size_t>(j)], scales);
  }
  return total;
}

std::vector<double> nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                                double step, int iterations, double lower, double upper) {
  const std::size_t d = x0.size();
  auto clampv = [&](std::vector<double> x) {
    for (auto& v : x) v = std::clamp(v, lower, upper);
    return x;
  };
  std::vector<std::vector<double>> pts{clampv(x0)};
  for (std::size_t i = 0; i < d; ++i) {
    auto x = x0;
    x[i] += x[i] + step > upper ? -step : step;
    pts.push_back(clampv(x));
  }
  std::vector<double> vals;
  for (const auto& p : pts) vals.push_back(f(p));
  auto combine = [&](const std::vector<double>& a, const std::vector<double>& b, double t) {
    std::vector<double> r(d);
    for (std::size_t i = 0; i < d; ++i) r[i] = a[i] + t * (b[i] - a[i]);
    return clampv(r);
  };
  for (int it = 0; it < iterations; ++it) {
    std::vector<std::size_t> idx(pts.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    std::vector<std::vector<double>> p2;
    std::vector<double> v2;
    for (auto i : idx) {
      p2.push_back(pts[i]);
      v2.push_back(vals[i]);
    }
    pts = std::move(p2);
    vals = std::move(v2);
    if (std::abs(vals.back() - vals.front()) <= 1e-10 * (1.0 + std::abs(vals.front()))) break;
    std::vector<double> centroid(d, 0.0);
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t i = 0; i < d; ++i) centroid[i] += pts[k][i] / static_cast<double>(d);
    const auto& worst = pts.back();
    const auto xr = combine(centroid, worst, -1.0);
    const double fr = f(xr);
    if (fr < vals.front()) {
      const auto xe = combine(centroid, worst, -2.0);
      const double fe = f(xe);
      if (fe < fr) {
        pts.back() = xe;
        vals.back() = fe;
      } else {
        pts.back() = xr;
        vals.back() = fr;
      }
    } else if (fr < vals[d - 1]) {
      pts.back() = xr;
      vals.back() = fr;
    } else {
      const auto xc = combine(centroid, worst, 0.5);
      const double fc = f(xc);
      if (fc < vals.back()) {
        pts.back() = xc;
        vals.back() = fc;
      } else {
        for (std::size_t k = 1; k < pts.size(); ++k) {
          pts[k] = combine(pts[0], pts[k], 0.5);
          vals[k] = f(pts[k]);
        }
      }
    }
  }
  const auto best = std::min_element(vals.begin(), vals.end()) - vals.begin();
  return pts[static_cast<std::size_t>(best)];
}

FusedScales learn_scales(const VectorXd& betaBar, double sigma02, const std::vector<NeighborSummary>& nbrs,
                         const LearnScalesConfig& config, const FusedScales& fallback) {
  if (config.gridPoints < 2 || !(config.lower > 0.0) || !(config.upper > config.lower)) {
    throw Error(ErrorKind::InvalidArgument, "bad scale search range");
  }
  const double lo = std::log(config.lower), hi = std::log(config.upper);
  const double stepLog = (hi - lo) / (config.gridPoints - 1);
  auto objective = [&](double ls1, double ls2) {
    return fused_objective(betaBar, sigma02, nbrs, {std::exp(ls1), std::exp(ls2)});
  };
  double best = -kInf;
  double b1 = std::log(fallback.s1), b2 = std::log(fallback.s2);
  const int n2 = config.learnS2 ? config.gridPoints : 1;
  for (int a = 0; a < config.gridPoints; ++a) {
    for (int c = 0; c < n2; ++c) {
      const double l1 = lo + a * stepLog;
      const double l2 = config.learnS2 ? lo + c * stepLog : std::log(fallback.s2);
      const double v = objective(l1, l2);
      if (v > best) {
        best = v;
        b1 = l1;
        b2 = l2;
      }
    }
  }
  if (config.polishIterations > 0) {
    if (config.learnS2) {
      const auto x = nelder_mead([&](const std::vector<double>& v) { return -objective(v[0], v[1]); }, {b1, b2},
                                 0.5 * stepLog, config.polishIterations, lo, hi);
      if (objective(x[0], x[1]) >= best) {
        b1 = x[0];
        b2 = x[1];
      }
    } else {
      const auto x = nelder_mead([&](const std::vector<double>& v) { return -objective(v[0], b2); }, {b1},
                                 0.5 * stepLog, config.polishIterations, lo, hi);
      if (objective(x[0], b2) >= best) b1 = x[0];
    }
  }
  return {std::exp(b1), std::exp(b2)};
}

FusedPrior::FusedPrior(Graph graph, FusedPriorConfig config)
    : graph_(std::move(graph)), config_(std::move(config)), scales_(config_.initScales) {
  graph_.validate();
  scales_.validate();
}

std::vector<PosteriorSummary> FusedPrior::solve(const VectorXd& betaBar, double sigma02) {
  if (betaBar.size() != graph_.size()) {
    throw Error(ErrorKind::DimensionMismatch, "graph has " + std::to_string(graph_.size()) + " nodes, expected " +
                                                  std::to_string(betaBar.size()));
  }
  if (bPrev_.size() != betaBar.size()) bPrev_ = VectorXd::Zero(betaBar.size());
  const auto nbrs = neighbor_summaries(graph_, bPrev_, scales_, nullptr, nullptr, config_.neighborMode);
  if (config_.learnEvery > 0 && solves_ % config_.learnEvery == 0) {
    scales_ = learn_scales(betaBar, sigma02, nbrs, config_.learn, scales_);
  }
  ++solves_;
  std::vector<PosteriorSummary> out;
  out.reserve(static_cast<std::size_t>(betaBar.size()));
  for (Index j = 0; j < betaBar.size(); ++j) {
    const auto& nb = nbrs[static_cast<std::size_t>(j)];
    out.push_back(fused_posterior(betaBar[j], sigma02, nb.centers, scales_, config_.quadrature, config_.ghNodes,
                                  nb.s2Factor));
    bPrev_[j] = out.back().mean;
  }
  return out;
}

nlohmann::json FusedPrior::parameters() const {
  const char* kind = graph_.kind() == GraphKind::Chain ? "chain" : graph_.kind() == GraphKind::Grid4 ? "grid4" : "general";
  return {{"s1", scales_.s1}, {"s2", scales_.s2}, {"graph", kind}, {"edges", graph_.edge_count()}};
}

}  // namespace nash::fused
