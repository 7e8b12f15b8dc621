#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nash/engine.hpp"

namespace nash::sim {

enum class CoefKind { Gaussian, Laplace, T };
struct CoefDist {
  CoefKind kind = CoefKind::Gaussian;
  double df = 3.0;
};

enum class NoiseKind { Gaussian, Uniform, Laplace, T };
struct NoiseDist {
  NoiseKind kind = NoiseKind::Gaussian;
  double df = 4.0;  // T only; df <= 2 is scaled by matching the Gaussian MAD
};

/// "gaussian", "laplace", "t3" / "gaussian", "uniform", "laplace", "t1", "t2", ...
CoefDist parse_coef_dist(const std::string& name);
NoiseDist parse_noise_dist(const std::string& name);
std::string to_string(const CoefDist& d);
std::string to_string(const NoiseDist& d);

struct SimulationConfig {
  Eigen::Index n = 500;  // training rows
  Eigen::Index p = 1000;
  Eigen::Index s = 20;
  double rho = 0.0;
  double pve = 0.5;
  CoefDist coef;
  NoiseDist noise;
  int replicates = 20;
  std::uint64_t seed = 1;
  // held-out share of all generated rows; the test set has n * f / (1 - f) rows
  double testFraction = 0.5;
  bool equicorrelated = false;

  Eigen::Index test_rows() const;
  void validate() const;
};

/// splitmix64 mixing of a base seed with stream coordinates.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

/// rho = 0: iid N(0, 1). rho > 0: AR(1) across columns with unit marginal
/// variance, or a shared factor (equicorrelated) when requested.
Eigen::MatrixXd gen_design(Eigen::Index n, Eigen::Index p, double rho, std::uint64_t seed,
                           bool equicorrelated = false);

/// s nonzero positions uniformly without replacement, values iid from dist.
Eigen::VectorXd gen_coefficients(Eigen::Index p, Eigen::Index s, const CoefDist& dist, std::uint64_t seed);

struct Response {
  Eigen::VectorXd y;
  double sigma2 = 1.0;
};

/// y = X b + e with sigma^2 = var(X b)(1 - pve)/pve; pure unit-variance noise
/// when pve = 0 or b = 0.
Response gen_response(const Eigen::MatrixXd& X, const Eigen::VectorXd& b, double pve, const NoiseDist& noise,
                      std::uint64_t seed);

/// Zero-location noise with variance sigma2 (MAD-matched for df <= 2).
Eigen::VectorXd gen_noise(Eigen::Index n, double sigma2, const NoiseDist& noise, std::uint64_t seed);

enum class Metric { RmseOverSigma2, RmseOverSigma };

/// RMSE(yTest, yHat) / sigma^2 (or / sigma).
double scaled_pred_perf(const Eigen::VectorXd& yTest, const Eigen::VectorXd& yHat, double sigma2,
                        Metric metric = Metric::RmseOverSigma2);

struct Replicate {
  Dataset train;
  Eigen::MatrixXd Xtest;
  Eigen::VectorXd ytest;
  Eigen::VectorXd bTrue;
  double sigma2 = 1.0;
  std::uint64_t seed = 0;
};

Replicate gen_replicate(const SimulationConfig& cfg, std::uint64_t seed);

struct Setting {
  std::string label;
  SimulationConfig config;
};

/// Desk-scale grids of experiments 1..7 around `base`.
std::vector<Setting> experiment_settings(int experiment, const SimulationConfig& base);

struct SimRow {
  int experiment = 0;
  std::string setting;
  int replicate = 0;
  std::uint64_t seed = 0;
  std::string method;
  double scaledPerf = 0.0;
  double seconds = 0.0;
  double pi0 = 0.0;  // fitted null weight (nash only)
};

struct RunOptions {
  std::vector<std::string> methods{"nash", "oracle"};  // also "mean"
  Metric metric = Metric::RmseOverSigma2;
  FitConfig fit;
  int threads = 1;
  bool recordTime = false;  // seconds column stays 0 unless set, keeping results reproducible
};

std::vector<SimRow> run_experiment(int experiment, const SimulationConfig& base, const RunOptions& options = {});

void write_results_csv(const std::filesystem::path& path, const std::vector<SimRow>& rows);
std::string format_results_csv(const std::vector<SimRow>& rows);

}  // namespace nash::sim
