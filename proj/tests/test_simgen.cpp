#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "nash/error.hpp"
#include "nash/simgen.hpp"

using namespace nash;
using namespace nash::sim;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double corr(const VectorXd& a, const VectorXd& b) {
  const VectorXd ac = a.array() - a.mean(), bc = b.array() - b.mean();
  return ac.dot(bc) / std::sqrt(ac.squaredNorm() * bc.squaredNorm());
}

double sample_var(const VectorXd& v) { return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1); }

}  // namespace

TEST_CASE("independent design has near-zero column correlations") {
  const int n = 10000;
  const MatrixXd X = gen_design(n, 20, 0.0, 1);
  int within = 0, pairs = 0;
  for (int a = 0; a < 20; ++a)
    for (int b = a + 1; b < 20; ++b) {
      ++pairs;
      within += std::abs(corr(X.col(a), X.col(b))) < 4.0 / std::sqrt(n);
    }
  CHECK(within >= 0.95 * pairs);
  CHECK(std::abs(sample_var(X.col(3)) - 1.0) < 0.05);
}

TEST_CASE("autoregressive design has the requested adjacent correlation") {
  const MatrixXd X = gen_design(10000, 10, 0.95, 2);
  for (int j = 0; j + 1 < 10; ++j) CHECK(std::abs(corr(X.col(j), X.col(j + 1)) - 0.95) < 0.03);
  CHECK(std::abs(sample_var(X.col(9)) - 1.0) < 0.05);
  CHECK(gen_design(50, 5, 0.0, 9) == gen_design(50, 5, 0.0, 9));
  const MatrixXd E = gen_design(10000, 6, 0.5, 4, true);
  CHECK(std::abs(corr(E.col(0), E.col(5)) - 0.5) < 0.03);
}

TEST_CASE("coefficient support") {
  CHECK(gen_coefficients(10, 0, {}, 1).isZero(0.0));
  CHECK((gen_coefficients(10, 10, {}, 1).array() != 0.0).all());
  const VectorXd b = gen_coefficients(100, 7, parse_coef_dist("laplace"), 3);
  CHECK((b.array() != 0.0).count() == 7);
  std::vector<int> freq(10, 0);
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    const VectorXd v = gen_coefficients(10, 1, {}, derive_seed(77, static_cast<std::uint64_t>(d)));
    for (int j = 0; j < 10; ++j) freq[static_cast<std::size_t>(j)] += v[j] != 0.0;
  }
  for (int f : freq) CHECK(std::abs(f / static_cast<double>(draws) - 0.1) < 0.02);
  CHECK_THROWS_AS(gen_coefficients(5, 6, {}, 1), Error);
}

TEST_CASE("response generation") {
  const int n = 10000;
  const MatrixXd X = gen_design(n, 30, 0.0, 5);
  const VectorXd b = gen_coefficients(30, 10, {}, 6);
  const Response r = gen_response(X, b, 0.5, {}, 7);
  const VectorXd signal = X * b;
  CHECK(std::abs(sample_var(signal) / sample_var(r.y) - 0.5) < 0.05);
  CHECK(std::abs(sample_var(r.y - signal) / r.sigma2 - 1.0) < 0.05);
  const Response z = gen_response(X, b, 0.0, {}, 7);
  CHECK(z.sigma2 == 1.0);
  CHECK(std::abs(sample_var(z.y) - 1.0) < 0.05);
  CHECK(std::abs(z.y.dot(signal)) / n < 0.1);
  const Response noB = gen_response(X, VectorXd::Zero(30), 0.5, {}, 7);
  CHECK(noB.sigma2 == 1.0);
}

TEST_CASE("noise laws are scaled to the target") {
  const int n = 200000;
  for (const char* name : {"uniform", "laplace", "t4", "t8"}) {
    CAPTURE(name);
    const VectorXd e = gen_noise(n, 2.0, parse_noise_dist(name), 3);
    CHECK(std::abs(sample_var(e) / 2.0 - 1.0) < (std::string(name) == "t4" ? 0.15 : 0.03));
  }
  // heavy tails: median absolute value matches the Gaussian 0.6745 sigma
  for (const char* name : {"t1", "t2"}) {
    CAPTURE(name);
    VectorXd e = gen_noise(n, 4.0, parse_noise_dist(name), 4).cwiseAbs();
    std::sort(e.data(), e.data() + e.size());
    CHECK(std::abs(e[n / 2] / (0.6745 * 2.0) - 1.0) < 0.02);
  }
  CHECK_THROWS_AS(parse_noise_dist("cauchy"), Error);
  CHECK_THROWS_AS(gen_noise(10, 1.0, {NoiseKind::T, 1.5}, 1), Error);
  CHECK(to_string(parse_noise_dist("t2")) == "t2");
  CHECK(to_string(parse_coef_dist("t3")) == "t3");
}

TEST_CASE("scaled prediction metric") {
  VectorXd y = VectorXd::LinSpaced(50, -1.0, 1.0);
  CHECK(scaled_pred_perf(y, y, 2.0) == 0.0);
  CHECK(scaled_pred_perf(y, (y.array() + 1.0).matrix(), 1.0) == doctest::Approx(1.0));
  CHECK(scaled_pred_perf(y, (y.array() + 2.0).matrix(), 4.0) == doctest::Approx(0.5));
  CHECK(scaled_pred_perf(y, (y.array() + 2.0).matrix(), 4.0, Metric::RmseOverSigma) == doctest::Approx(1.0));
  CHECK_THROWS_AS(scaled_pred_perf(y, VectorXd::Zero(3), 1.0), Error);
  // mean predictor on pure noise
  const VectorXd e = gen_noise(10000, 1.0, {}, 12);
  CHECK(std::abs(scaled_pred_perf(e, VectorXd::Constant(e.size(), e.mean()), 1.0) - 1.0) < 0.05);
}

TEST_CASE("oracle predictor approaches 1 / sigma_true") {
  SimulationConfig c;
  c.n = 100;
  c.p = 50;
  c.s = 10;
  c.pve = 0.5;
  c.testFraction = 0.99;  // ~10^4 test rows
  const Replicate r = gen_replicate(c, 3);
  REQUIRE(r.ytest.size() >= 9900);
  const double perf = scaled_pred_perf(r.ytest, r.Xtest * r.bTrue, r.sigma2);
  CHECK(std::abs(perf * std::sqrt(r.sigma2) - 1.0) < 0.05);
}

TEST_CASE("generators are pure functions of the seed") {
  SimulationConfig c;
  c.n = 40;
  c.p = 30;
  c.s = 4;
  const Replicate a = gen_replicate(c, 99), b = gen_replicate(c, 99), d = gen_replicate(c, 100);
  CHECK(a.train.X == b.train.X);
  CHECK(a.train.y == b.train.y);
  CHECK(a.ytest == b.ytest);
  CHECK(a.train.y != d.train.y);
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
}

TEST_CASE("experiment grids") {
  SimulationConfig base;
  base.p = 200;
  auto s1 = experiment_settings(1, base);
  REQUIRE(s1.size() == 5);
  CHECK(s1.front().config.s == 1);
  CHECK(s1.back().config.s == 200);
  CHECK(experiment_settings(3, base).size() == 6);
  CHECK(experiment_settings(6, base).size() == 7);
  CHECK(experiment_settings(7, base).back().config.rho == 0.99);
  auto s5 = experiment_settings(5, base);
  CHECK(s5[0].config.p == 20);
  CHECK(s5[0].config.s == 20);
  CHECK_THROWS_AS(experiment_settings(9, base), Error);
  CHECK_THROWS_AS(experiment_settings(0, base), Error);
}

TEST_CASE("experiment 1 endpoints and row bookkeeping") {
  SimulationConfig base;
  base.n = 100;
  base.p = 200;
  base.replicates = 2;
  RunOptions opt;
  opt.fit.maxSweeps = 30;
  const auto rows = run_experiment(1, base, opt);
  CHECK(rows.size() == 5 * 2 * 2);
  for (const auto& r : rows) CHECK(std::isfinite(r.scaledPerf));
  CHECK(format_results_csv(rows).rfind("experiment,setting,replicate,seed,method,scaled_perf,seconds\n", 0) == 0);
  opt.threads = 3;
  CHECK(format_results_csv(run_experiment(1, base, opt)) == format_results_csv(rows));
}
