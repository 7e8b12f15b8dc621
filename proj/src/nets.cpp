#include "nash/nets.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>

#include "nash/error.hpp"
#include "nash/math.hpp"

namespace nash::nets {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void TrainConfig::validate() const {
  if (!(learningRate > 0.0)) throw Error(ErrorKind::InvalidArgument, "learning rate must be positive");
  if (steps < 0 || stepsAfterFirst < 0) throw Error(ErrorKind::InvalidArgument, "step counts must be >= 0");
  if (batchSize < 0) throw Error(ErrorKind::InvalidArgument, "batch size must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "Adam moments must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw Error(ErrorKind::InvalidArgument, "Adam epsilon must be positive");
}

Adam::Adam(Index size, const TrainConfig& cfg)
    : m_(VectorXd::Zero(size)),
      v_(VectorXd::Zero(size)),
      lr_(cfg.learningRate),
      b1_(cfg.beta1),
      b2_(cfg.beta2),
      eps_(cfg.epsilon) {}

void Adam::ascend(VectorXd& theta, const VectorXd& grad) {
  ++t_;
  m_ = b1_ * m_ + (1.0 - b1_) * grad;
  v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  theta.array() += lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

TrunkNet::TrunkNet(int inputs, int hidden, int headWidth) : inputs_(inputs), hidden_(hidden), headWidth_(headWidth) {
  if (inputs < 1 || hidden < 0 || headWidth < 1) throw Error(ErrorKind::InvalidArgument, "bad network shape");
  theta_ = VectorXd::Zero(trunk_size() + static_cast<Index>(headWidth_) * (features() + 1));
}

void TrunkNet::init_random(std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, scale);
  for (Index i = 0; i < W1().size(); ++i) W1().data()[i] = z(rng);
  for (Index i = 0; i < W2().size(); ++i) W2().data()[i] = z(rng);
}

MatrixXd TrunkNet::heads(const MatrixXd& D, MatrixXd* hiddenOut) const {
  if (D.cols() != inputs_) {
    throw Error(ErrorKind::DimensionMismatch, "network expects " + std::to_string(inputs_) + " inputs, got " +
                                                  std::to_string(D.cols()));
  }
  if (hidden_ == 0) {
    if (hiddenOut) *hiddenOut = D;
    return (D * W2().transpose()).rowwise() + b2().transpose();
  }
  MatrixXd H = ((D * W1().transpose()).rowwise() + b1().transpose()).cwiseMax(0.0);
  MatrixXd out = (H * W2().transpose()).rowwise() + b2().transpose();
  if (hiddenOut) *hiddenOut = std::move(H);
  return out;
}

VectorXd TrunkNet::heads(const Eigen::Ref<const VectorXd>& d) const {
  if (d.size() != inputs_) {
    throw Error(ErrorKind::DimensionMismatch, "network expects " + std::to_string(inputs_) + " inputs, got " +
                                                  std::to_string(d.size()));
  }
  if (hidden_ == 0) return W2() * d + b2();
  const VectorXd h = (W1() * d + b1()).cwiseMax(0.0);
  return W2() * h + b2();
}

VectorXd TrunkNet::backprop(const MatrixXd& D, const MatrixXd& H, const MatrixXd& gHeads,
                            const std::vector<Index>& rows) const {
  MatrixXd masked;
  if (static_cast<Index>(rows.size()) != gHeads.rows()) {
    masked = MatrixXd::Zero(gHeads.rows(), gHeads.cols());
    for (Index j : rows) masked.row(j) = gHeads.row(j);
  }
  const MatrixXd& G = masked.size() > 0 ? masked : gHeads;
  VectorXd grad = VectorXd::Zero(theta_.size());
  const Index f = features();
  Eigen::Map<MatrixXd> gW2(grad.data() + trunk_size(), headWidth_, f);
  Eigen::Map<VectorXd> gb2(grad.data() + trunk_size() + headWidth_ * f, headWidth_);
  gW2.noalias() = G.transpose() * H;
  gb2 = G.colwise().sum().transpose();
  if (hidden_ > 0) {
    Eigen::Map<MatrixXd> gW1(grad.data(), hidden_, inputs_);
    Eigen::Map<VectorXd> gb1(grad.data() + hidden_ * inputs_, hidden_);
    const MatrixXd dH = ((G * W2()).array() * (H.array() > 0.0).cast<double>()).matrix();
    gW1.noalias() = dH.transpose() * D;
    gb1 = dH.colwise().sum().transpose();
  }
  return grad;
}

nlohmann::json TrunkNet::to_json() const {
  nlohmann::json j;
  j["inputs"] = inputs_;
  j["hidden"] = hidden_;
  j["head_width"] = headWidth_;
  const auto vec = [](const auto& m) { return std::vector<double>(m.data(), m.data() + m.size()); };
  j["layers"] = nlohmann::json::array();
  if (hidden_ > 0) {
    j["layers"].push_back({{"name", "W1"}, {"shape", {hidden_, inputs_}}, {"values", vec(W1())}});
    j["layers"].push_back({{"name", "b1"}, {"shape", {hidden_}}, {"values", vec(b1())}});
  }
  j["layers"].push_back({{"name", "W2"}, {"shape", {headWidth_, features()}}, {"values", vec(W2())}});
  j["layers"].push_back({{"name", "b2"}, {"shape", {headWidth_}}, {"values", vec(b2())}});
  return j;
}

void TrunkNet::from_json(const nlohmann::json& j) {
  *this = TrunkNet(j.at("inputs").get<int>(), j.at("hidden").get<int>(), j.at("head_width").get<int>());
  for (const auto& layer : j.at("layers")) {
    const auto name = layer.at("name").get<std::string>();
    const auto values = layer.at("values").get<std::vector<double>>();
    auto fill = [&](auto target) {
      if (static_cast<Index>(values.size()) != target.size()) {
        throw Error(ErrorKind::DimensionMismatch, "layer " + name + " has the wrong size");
      }
      std::copy(values.begin(), values.end(), target.data());
    };
    if (name == "W1") fill(W1());
    else if (name == "b1") fill(b1());
    else if (name == "W2") fill(W2());
    else if (name == "b2") fill(b2());
    else throw Error(ErrorKind::ParseError, "unknown layer " + name);
  }
}

namespace {

std::vector<Index> all_rows(Index p) {
  std::vector<Index> r(static_cast<std::size_t>(p));
  std::iota(r.begin(), r.end(), Index{0});
  return r;
}

void check_gradient(const VectorXd& grad, int step) {
  if (grad.allFinite()) return;
  Index bad = 0;
  while (bad < grad.size() && std::isfinite(grad[bad])) ++bad;
  std::ostringstream msg;
  msg << "non-finite gradient at step " << step << " (parameter " << bad << " of " << grad.size() << ")";
  throw Error(ErrorKind::NonFiniteGradient, msg.str());
}

using ObjGrad = std::function<double(const VectorXd& theta, VectorXd& grad, const std::vector<Index>& rows)>;
using Obj = std::function<double(const VectorXd& theta)>;

// Shared Adam loop. Returns the best full-data iterate, so the final
// objective never falls below the starting one.
TrainReport adam_loop(VectorXd& theta, Index p, const TrainConfig& cfg, int steps, Adam* external,
                      const ObjGrad& objGrad, const Obj& objective) {
  cfg.validate();
  Adam local;
  if (!external || external->size() != theta.size()) {
    local = Adam(theta.size(), cfg);
    if (external) *external = local;
  }
  Adam& adam = external ? *external : local;

  const Index batch = cfg.batchSize > 0 ? cfg.batchSize : (p <= 4096 ? p : 4096);
  std::vector<Index> order = all_rows(p);
  std::mt19937_64 rng(cfg.seed);
  std::size_t cursor = order.size();

  TrainReport rep;
  rep.initialObjective = objective(theta);
  if (!std::isfinite(rep.initialObjective)) throw Error(ErrorKind::NonFiniteGradient, "non-finite objective");
  double best = rep.initialObjective;
  VectorXd bestTheta = theta;
  VectorXd grad;
  auto record = [&](double obj, const VectorXd& at) {
    rep.trace.push_back(obj);
    if (obj > best) {
      best = obj;
      bestTheta = at;
    }
  };
  for (int s = 0; s < steps; ++s) {
    std::vector<Index> rows;
    if (batch >= p) {
      rows = order;
    } else {
      if (cursor + static_cast<std::size_t>(batch) > order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      rows.assign(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                  order.begin() + static_cast<std::ptrdiff_t>(cursor + static_cast<std::size_t>(batch)));
      cursor += static_cast<std::size_t>(batch);
    }
    const double here = objGrad(theta, grad, rows);
    // full batch: the gradient pass already evaluated the objective at theta
    if (batch >= p && s > 0) record(here, theta);
    check_gradient(grad, s);
    // mean-likelihood scaling keeps step sizes independent of p
    grad /= static_cast<double>(rows.size());
    adam.ascend(theta, grad);
    if (batch < p || s + 1 == steps) record(objective(theta), theta);
    ++rep.steps;
  }
  theta = bestTheta;
  rep.finalObjective = best;
  return rep;
}

}  // namespace

VectorXd forward_softmax(const SoftmaxPriorNet& net, const Eigen::Ref<const VectorXd>& d) {
  VectorXd z = net.heads(d);
  const double lse = math::logsumexp(z);
  return (z.array() - lse).exp();
}

namespace {

VectorXd rowwise_logsumexp(const MatrixXd& A) {
  const VectorXd m = A.rowwise().maxCoeff();
  return m.array() + (A.colwise() - m).array().exp().rowwise().sum().log();
}

}  // namespace

MatrixXd log_weights(const SoftmaxPriorNet& net, const MatrixXd& D) {
  const MatrixXd Z = net.heads(D);
  return Z.colwise() - rowwise_logsumexp(Z);
}

double softmax_objective(const SoftmaxPriorNet& net, const MatrixXd& D, const MatrixXd& L) {
  if (L.rows() != D.rows() || L.cols() != net.components()) {
    throw Error(ErrorKind::DimensionMismatch, "likelihood matrix shape does not match the network");
  }
  return rowwise_logsumexp(log_weights(net, D) + L).sum();
}

double softmax_objective_grad(const SoftmaxPriorNet& net, const MatrixXd& D, const MatrixXd& L, VectorXd& grad,
                              const std::vector<Index>& rowsIn) {
  if (L.rows() != D.rows() || L.cols() != net.components()) {
    throw Error(ErrorKind::DimensionMismatch, "likelihood matrix shape does not match the network");
  }
  const std::vector<Index> rows = rowsIn.empty() ? all_rows(D.rows()) : rowsIn;
  MatrixXd H;
  const MatrixXd Z = net.heads(D, &H);
  const MatrixXd logPi = Z.colwise() - rowwise_logsumexp(Z);
  const MatrixXd post = logPi + L;
  const VectorXd lj = rowwise_logsumexp(post);
  // d/dz of log sum_m softmax(z)_m e^{L_m} = responsibilities - weights
  const MatrixXd G = (post.colwise() - lj).array().exp() - logPi.array().exp();
  double total = 0.0;
  for (Index j : rows) total += lj[j];
  grad = net.backprop(D, H, G, rows);
  return total;
}

TrainReport train_softmax(SoftmaxPriorNet& net, const MatrixXd& D, const MatrixXd& L, const TrainConfig& cfg,
                          int steps, Adam* adam) {
  if (!L.allFinite() || !D.allFinite()) throw Error(ErrorKind::NonFinite, "non-finite training input");
  SoftmaxPriorNet work = net;
  auto objGrad = [&](const VectorXd& theta, VectorXd& g, const std::vector<Index>& rows) {
    work.params() = theta;
    return softmax_objective_grad(work, D, L, g, rows);
  };
  auto obj = [&](const VectorXd& theta) {
    work.params() = theta;
    return softmax_objective(work, D, L);
  };
  TrainReport rep = adam_loop(net.params(), D.rows(), cfg, steps, adam, objGrad, obj);
  return rep;
}

void MdnPriorNet::from_json(const nlohmann::json& j) {
  TrunkNet::from_json(j);
  if ((head_width() - 1) % 3 != 0) throw Error(ErrorKind::ParseError, "mixture network head width must be 3K+1");
  k_ = (head_width() - 1) / 3;
}

namespace {

struct MdnRow {
  VectorXd logPi;  // K+1
  VectorXd means;
  VectorXd logVar;
};

MdnRow split_heads(const Eigen::Ref<const VectorXd>& z, int K) {
  MdnRow r;
  const VectorXd logits = z.head(K + 1);
  r.logPi = logits.array() - math::logsumexp(logits);
  r.means = z.segment(K + 1, K);
  r.logVar = z.segment(2 * K + 1, K);
  return r;
}

}  // namespace

MdnOutput mdn_forward(const MdnPriorNet& net, const Eigen::Ref<const VectorXd>& d) {
  const MdnRow r = split_heads(net.heads(d), net.components());
  MdnOutput out;
  out.weights = r.logPi.array().exp();
  out.means = r.means;
  out.variances = r.logVar.array().exp();
  return out;
}

double mdn_objective_grad(const MdnPriorNet& net, const MatrixXd& D, const VectorXd& betaBar, double sigma02,
                          VectorXd& grad, const std::vector<Index>& rowsIn) {
  if (betaBar.size() != D.rows()) throw Error(ErrorKind::DimensionMismatch, "side information rows differ from p");
  if (!(sigma02 > 0.0)) throw Error(ErrorKind::NonPositiveVariance, "sigma0^2 must be positive");
  const int K = net.components();
  const std::vector<Index> rows = rowsIn.empty() ? all_rows(D.rows()) : rowsIn;
  MatrixXd H;
  const MatrixXd Z = net.heads(D, &H);
  MatrixXd G = MatrixXd::Zero(Z.rows(), Z.cols());
  double total = 0.0;
  VectorXd l(K + 1);
  VectorXd var(K);
  for (Index j : rows) {
    const MdnRow r = split_heads(Z.row(j).transpose(), K);
    const double b = betaBar[j];
    l[0] = r.logPi[0] + math::log_normal_pdf(b, 0.0, sigma02);
    for (int k = 0; k < K; ++k) {
      var[k] = sigma02 + std::exp(r.logVar[k]);
      l[k + 1] = r.logPi[k + 1] + math::log_normal_pdf(b, r.means[k], var[k]);
    }
    const double lj = math::logsumexp(l);
    total += lj;
    const VectorXd gamma = (l.array() - lj).exp();
    G.row(j).head(K + 1) = (gamma.array() - r.logPi.array().exp()).matrix().transpose();
    for (int k = 0; k < K; ++k) {
      const double d = b - r.means[k];
      const double g = gamma[k + 1];
      G(j, K + 1 + k) = g * d / var[k];
      G(j, 2 * K + 1 + k) = g * 0.5 * (d * d / (var[k] * var[k]) - 1.0 / var[k]) * std::exp(r.logVar[k]);
    }
  }
  grad = net.backprop(D, H, G, rows);
  return total;
}

double mdn_objective(const MdnPriorNet& net, const MatrixXd& D, const VectorXd& betaBar, double sigma02) {
  if (betaBar.size() != D.rows()) throw Error(ErrorKind::DimensionMismatch, "side information rows differ from p");
  const int K = net.components();
  const MatrixXd Z = net.heads(D);
  double total = 0.0;
  VectorXd l(K + 1);
  for (Index j = 0; j < D.rows(); ++j) {
    const MdnRow r = split_heads(Z.row(j).transpose(), K);
    l[0] = r.logPi[0] + math::log_normal_pdf(betaBar[j], 0.0, sigma02);
    for (int k = 0; k < K; ++k) {
      l[k + 1] = r.logPi[k + 1] + math::log_normal_pdf(betaBar[j], r.means[k], sigma02 + std::exp(r.logVar[k]));
    }
    total += math::logsumexp(l);
  }
  return total;
}

TrainReport train_mdn(MdnPriorNet& net, const MatrixXd& D, const VectorXd& betaBar, double sigma02,
                      const TrainConfig& cfg, int steps, Adam* adam) {
  if (!betaBar.allFinite() || !D.allFinite()) throw Error(ErrorKind::NonFinite, "non-finite training input");
  MdnPriorNet work = net;
  auto objGrad = [&](const VectorXd& theta, VectorXd& g, const std::vector<Index>& rows) {
    work.params() = theta;
    return mdn_objective_grad(work, D, betaBar, sigma02, g, rows);
  };
  auto obj = [&](const VectorXd& theta) {
    work.params() = theta;
    return mdn_objective(work, D, betaBar, sigma02);
  };
  return adam_loop(net.params(), D.rows(), cfg, steps, adam, objGrad, obj);
}

}  // namespace nash::nets
