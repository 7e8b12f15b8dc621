#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "nash/fused.hpp"
#include "nash/message_net.hpp"

namespace nash::fused {

struct DenoiseConfig {
  int sweeps = 30;
  int learnEvery = 5;        // re-learn (s1, s2) every k sweeps; 0 keeps initScales
  FusedScales initScales;
  LearnScalesConfig learn;
  std::optional<double> sigma;  // known noise sd; otherwise estimated then learned
  Quadrature quadrature = Quadrature::Exact;
  int ghNodes = 32;
  // one factor per neighbor: the mean-center form erodes edges under repeated sweeps
  NeighborMode neighborMode = NeighborMode::Separate;
  bool freezeVariances = false;  // keep sigma^2, sigma0^2 at their initial values
  bool useNet = false;           // message network for (v1, s2) instead of neighbor means
  int netHidden = 8;
  bool perNodeS2 = false;
  nets::TrainConfig netTrain{.learningRate = 0.01, .steps = 60, .stepsAfterFirst = 20};
  int threads = 1;

  void validate() const;
};

struct DenoiseResult {
  Eigen::MatrixXd image;
  Eigen::VectorXd bBar;
  Eigen::VectorXd betaBar;
  double sigma2 = 0.0;
  double sigma02 = 0.0;
  FusedScales scales;
  std::vector<double> elboTrace;
  std::vector<double> residualTrace;  // ||y - bBar||^2 after every sweep
};

/// Noise sd from horizontal first differences: median |d| / (0.6745 sqrt 2).
double mad_sigma(const Eigen::MatrixXd& image);

/// Identity-design normal-means fit on the 4-neighbor pixel grid.
DenoiseResult denoise_image(const Eigen::MatrixXd& noisy, const DenoiseConfig& config = {});

/// Background 0 with 2-4 axis-aligned rectangles of intensity in [0.3, 1].
Eigen::MatrixXd synthetic_piecewise_image(Eigen::Index height, Eigen::Index width, std::uint64_t seed);

Eigen::MatrixXd add_gaussian_noise(const Eigen::MatrixXd& image, double sigma, std::uint64_t seed);

double rmse(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace nash::fused
