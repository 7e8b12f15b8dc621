#include <doctest.h>

#include <random>

#include "nash/ash.hpp"
#include "nash/engine.hpp"
#include "nash/error.hpp"
#include "nash/math.hpp"
#include "nash/net_priors.hpp"
#include "nash/nets.hpp"
#include "oracles.hpp"

using namespace nash;
using namespace nash::nets;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd randn(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> z(0.0, scale);
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = z(rng);
  return m;
}

double max_rel_error(const VectorXd& a, const VectorXd& b) {
  // relative to the gradient's overall magnitude; coordinates that are
  // exactly zero by construction (dead units) do not blow up the ratio
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-12});
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-3 * scale});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

// Finite differences are meaningless across a rectifier kink; redraw inputs
// until every hidden pre-activation is at least 1e-3 away from zero.
template <class Net>
MatrixXd inputs_away_from_kinks(const Net& net, Eigen::Index p, std::mt19937_64& rng) {
  while (true) {
    MatrixXd D = randn(p, net.inputs(), rng);
    if (net.hidden() == 0) return D;
    const MatrixXd pre = (D * net.W1().transpose()).rowwise() + net.b1().transpose();
    if (pre.cwiseAbs().minCoeff() > 1e-3) return D;
  }
}

MatrixXd one_hot_groups(int p, int groups) {
  MatrixXd D = MatrixXd::Zero(p, groups);
  for (int j = 0; j < p; ++j) D(j, j % groups) = 1.0;
  return D;
}

}  // namespace

TEST_CASE("softmax forward basics") {
  SoftmaxPriorNet net(3, 0, 5);
  const VectorXd d = VectorXd::LinSpaced(3, -1, 2);
  const VectorXd pi = forward_softmax(net, d);
  for (int m = 0; m < 5; ++m) CHECK(pi[m] == doctest::Approx(0.2));

  std::mt19937_64 rng(1);
  SoftmaxPriorNet deep(3, 4, 5);
  deep.init_random(7, 0.8);
  deep.b2() = randn(5, 1, rng);
  const VectorXd before = forward_softmax(deep, d);
  deep.b2().array() += 3.7;
  const VectorXd after = forward_softmax(deep, d);
  CHECK((before - after).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(after.sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(forward_softmax(deep, VectorXd::Zero(2)), Error);
}

TEST_CASE("depth-0 one-hot input selects a weight column") {
  std::mt19937_64 rng(2);
  SoftmaxPriorNet net(3, 0, 4);
  net.params() = randn(net.params().size(), 1, rng);
  for (int g = 0; g < 3; ++g) {
    VectorXd d = VectorXd::Zero(3);
    d[g] = 1.0;
    const VectorXd z = net.b2() + net.W2().col(g);
    const VectorXd expect = (z.array() - nash::math::logsumexp(z)).exp();
    CHECK((forward_softmax(net, d) - expect).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("softmax gradient matches finite differences") {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const int k = 2 + rep % 3, h = rep % 2 == 0 ? 0 : 4, M = 3 + rep % 4, p = 15;
    SoftmaxPriorNet net(k, h, M);
    net.init_random(100 + rep, 0.7);
    net.b2() = randn(M, 1, rng);
    const MatrixXd D = inputs_away_from_kinks(net, p, rng);
    const MatrixXd L = randn(p, M, rng, 2.0);
    VectorXd g;
    softmax_objective_grad(net, D, L, g);
    const VectorXd fd = oracle::finite_difference(
        [&](const VectorXd& th) {
          SoftmaxPriorNet c = net;
          c.params() = th;
          return softmax_objective(c, D, L);
        },
        net.params(), 1e-5);
    worst = std::max(worst, max_rel_error(g, fd));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("mdn gradient matches finite differences") {
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const int k = 2 + rep % 3, h = rep % 2 == 0 ? 0 : 5, K = 1 + rep % 3, p = 15;
    MdnPriorNet net(k, h, K);
    net.init_random(200 + rep, 0.5);
    net.b2() = randn(3 * K + 1, 1, rng, 0.5);
    const MatrixXd D = inputs_away_from_kinks(net, p, rng);
    const VectorXd b = randn(p, 1, rng, 1.5);
    VectorXd g;
    mdn_objective_grad(net, D, b, 0.3, g);
    const VectorXd fd = oracle::finite_difference(
        [&](const VectorXd& th) {
          MdnPriorNet c = net;
          c.params() = th;
          return mdn_objective(c, D, b, 0.3);
        },
        net.params(), 1e-5);
    worst = std::max(worst, max_rel_error(g, fd));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("constant side information reaches the EM optimum") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 3; ++rep) {
    const int p = 60;
    VectorXd b = randn(p, 1, rng, 0.3);
    for (int j = 0; j < 6; ++j) b[j] = 3.0 * randn(1, 1, rng)(0);
    const auto grid = ash::default_grid(b, 0.2, 8);
    const MatrixXd L = ash::marginal_loglik_matrix(b, 0.2, grid);
    const auto em = ash::fit_weights_em(L, ash::MixtureWeights::uniform(8), 100000, 1e-14);
    SoftmaxPriorNet net(1, 0, 8);
    TrainConfig cfg;
    cfg.learningRate = 0.05;
    const MatrixXd D = MatrixXd::Ones(p, 1);
    const auto rep1 = train_softmax(net, D, L, cfg, 4000);
    CHECK(rep1.finalObjective >= rep1.initialObjective);
    CHECK(std::abs(rep1.finalObjective - em.objective) < 1e-3);
  }
}

TEST_CASE("dominant likelihood column captures a group") {
  std::mt19937_64 rng(6);
  const int p = 40, M = 4;
  const MatrixXd D = one_hot_groups(p, 2);
  MatrixXd L = randn(p, M, rng, 0.1);
  for (int j = 0; j < p; j += 2) L(j, 2) += 6.0;
  SoftmaxPriorNet net(2, 0, M);
  TrainConfig cfg;
  cfg.learningRate = 0.05;
  train_softmax(net, D, L, cfg, 1000);
  VectorXd a(2);
  a << 1, 0;
  CHECK(forward_softmax(net, a)[2] > 0.9);
}

TEST_CASE("group one-hot softmax matches per-group EM") {
  std::mt19937_64 rng(7);
  const int p = 200;
  const MatrixXd D = one_hot_groups(p, 2);
  VectorXd b(p);
  for (int j = 0; j < p; ++j) b[j] = (j % 2 == 0 && j % 6 == 0) ? 2.5 * randn(1, 1, rng)(0) : 0.3 * randn(1, 1, rng)(0);
  const auto grid = ash::default_grid(b, 0.1, 6);
  const MatrixXd L = ash::marginal_loglik_matrix(b, 0.1, grid);
  SoftmaxPriorNet net(2, 0, 6);
  TrainConfig cfg;
  cfg.learningRate = 0.05;
  train_softmax(net, D, L, cfg, 6000);
  for (int g = 0; g < 2; ++g) {
    MatrixXd Lg(p / 2, 6);
    for (int j = 0; j < p / 2; ++j) Lg.row(j) = L.row(2 * j + g);
    const auto em = ash::fit_weights_em(Lg, ash::MixtureWeights::uniform(6), 100000, 1e-14);
    VectorXd d = VectorXd::Zero(2);
    d[g] = 1.0;
    const double tv = 0.5 * (forward_softmax(net, d) - em.weights.pi()).cwiseAbs().sum();
    CHECK(tv < 1e-2);
  }
}

TEST_CASE("mdn forward contract") {
  MdnPriorNet net(3, 0, 2);
  const MdnOutput o = mdn_forward(net, VectorXd::Ones(3));
  for (int m = 0; m < 3; ++m) CHECK(o.weights[m] == doctest::Approx(1.0 / 3.0));
  CHECK(o.means.cwiseAbs().maxCoeff() == 0.0);
  CHECK((o.variances.array() == 1.0).all());

  std::mt19937_64 rng(8);
  MdnPriorNet deep(4, 6, 3);
  deep.init_random(9, 2.0);
  deep.b2() = randn(10, 1, rng, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const VectorXd d = randn(4, 1, rng, 3.0);
    const MdnOutput a = mdn_forward(deep, d);
    CHECK(std::abs(a.weights.sum() - 1.0) < 1e-12);
    CHECK((a.variances.array() > 0.0).all());
    const MdnOutput b = mdn_forward(deep, d);
    CHECK((a.means - b.means).norm() == 0.0);
  }
}

TEST_CASE("mdn posterior") {
  MdnOutput c;
  c.weights = VectorXd::Zero(2);
  c.weights[1] = 1.0;
  c.means = VectorXd::Constant(1, 1.3);
  c.variances = VectorXd::Constant(1, 1e-14);
  CHECK(mdn_posterior(0.2, 1.0, c).mean == doctest::Approx(1.3).epsilon(1e-10));
  c.variances[0] = 0.7;
  CHECK(mdn_posterior(1.3, 0.4, c).mean == doctest::Approx(1.3).epsilon(1e-14));

  MdnOutput two;
  two.weights = VectorXd(3);
  two.weights << 0.0, 0.4, 0.6;
  two.means = VectorXd(2);
  two.means << -1.0, 2.0;
  two.variances = VectorXd::Constant(2, 0.5);
  const PosteriorSummary s = mdn_posterior(0.5, 1.0, two);
  const auto o = oracle::density_posterior(
      0.5, 1.0, [](double b) { return 0.4 * oracle::normal_pdf(b, -1.0, 0.5) + 0.6 * oracle::normal_pdf(b, 2.0, 0.5); },
      -12.0, 14.0);
  CHECK(std::abs(s.mean - o.mean) < 1e-6);
  CHECK(std::abs(s.variance - o.variance) < 1e-6);
  CHECK(std::abs(std::exp(s.logMarginal) - o.mass) < 1e-8);
}

TEST_CASE("mdn recovers group-dependent means") {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> z;
  const int p = 300;
  const MatrixXd D = one_hot_groups(p, 2);
  VectorXd b(p);
  for (int j = 0; j < p; ++j) b[j] = (j % 2 == 0 ? 2.0 : -1.0) + 0.3 * z(rng) + std::sqrt(0.1) * z(rng);
  MdnPriorNet net(2, 0, 1);
  net.init_random(3, 0.1);
  TrainConfig cfg;
  cfg.learningRate = 0.02;
  const auto rep = train_mdn(net, D, b, 0.1, cfg, 3000);
  VectorXd a(2), c(2);
  a << 1, 0;
  c << 0, 1;
  const double gap = mdn_forward(net, a).means[0] - mdn_forward(net, c).means[0];
  CHECK(std::abs(gap - 3.0) < 0.2 * 3.0);
  for (std::size_t t = 50; t < rep.trace.size(); ++t) CHECK(rep.trace[t] >= rep.trace[t - 50] - 1e-9);
}

TEST_CASE("train config validation and non-finite input") {
  TrainConfig bad;
  bad.learningRate = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  SoftmaxPriorNet net(1, 0, 2);
  MatrixXd L = MatrixXd::Zero(3, 2);
  L(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(train_softmax(net, MatrixXd::Ones(3, 1), L, {}, 5), Error);
}

TEST_CASE("network priors inside the engine") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z;
  const int n = 100, p = 40;
  Dataset d;
  d.X = randn(n, p, rng);
  VectorXd beta = VectorXd::Zero(p);
  for (int j = 0; j < p; j += 8) beta[j] = 1.5;
  d.y = d.X * beta + randn(n, 1, rng);
  MatrixXd D = MatrixXd::Zero(p, 2);
  for (int j = 0; j < p; ++j) D(j, j % 8 == 0 ? 0 : 1) = 1.0;

  SoftmaxPrior sp(D);
  const FitResult a = fit(d, SideInfo::from_features(D), sp, {});
  CHECK(a.state.elboTrace.back() >= a.state.elboTrace.front());
  for (const auto& rep : sp.reports()) CHECK(rep.finalObjective >= rep.initialObjective);
  CHECK(a.priorParameters["network"]["layers"].size() == 2);

  SoftmaxPriorConfig deep;
  deep.hidden = 4;
  SoftmaxPrior sp2(D, deep);
  const FitResult b = fit(d, SideInfo::from_features(D), sp2, {});
  CHECK(b.state.elboTrace.back() >= b.state.elboTrace.front());

  MdnPrior mp(D);
  const FitResult c = fit(d, SideInfo::from_features(D), mp, {});
  CHECK(c.state.elboTrace.back() >= c.state.elboTrace.front());
  CHECK(std::isfinite(c.state.sigma2));

  MdnPrior mp2(D);
  const FitResult c2 = fit(d, SideInfo::from_features(D), mp2, {});
  CHECK(c.state.elboTrace == c2.state.elboTrace);
  CHECK_THROWS_AS(SoftmaxPrior(MatrixXd(p, 0)), Error);
}

TEST_CASE("network json round trip") {
  MdnPriorNet net(3, 2, 2);
  net.init_random(4, 1.0);
  MdnPriorNet back;
  back.from_json(net.to_json());
  CHECK(back.components() == 2);
  CHECK((back.params() - net.params()).norm() == 0.0);
}
