// nash: fit, predict, simulate, benchmark and denoise from the command line.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "nash/ash.hpp"
#include "nash/csv.hpp"
#include "nash/denoise.hpp"
#include "nash/engine.hpp"
#include "nash/error.hpp"
#include "nash/fused.hpp"
#include "nash/model_io.hpp"
#include "nash/net_priors.hpp"
#include "nash/parallel.hpp"
#include "nash/pgm.hpp"
#include "nash/simgen.hpp"

namespace fs = std::filesystem;
using namespace nash;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

struct FitArgs {
  std::string x, y, side, graph, out, fitted;
  std::string prior = "ash";
  std::string varianceRule = "exact-cavi";
  std::uint64_t seed = 0;
  int maxSweeps = 200;
  double tol = 1e-6;
  int gridSize = 20;
  int hidden = 0;
  int components = 3;
  int steps = 500;
  int stepsAfter = 50;
  double lr = 1e-3;
  double s1 = 0.45, s2 = 0.15;
  int learnEvery = 1;
  std::string quadrature = "exact";
  bool dropConstant = false;
};

struct PredictArgs {
  std::string model, x, out;
};

struct SimArgs {
  int experiment = 0;
  int replicates = 20;
  std::optional<long> n, p, s;
  std::optional<double> pve, rho;
  std::string coef, noise;
  std::uint64_t seed = 1;
  std::string out;
  std::string metric = "rmse-over-sigma2";
  std::vector<std::string> methods;
  bool recordTime = false;
  int maxSweeps = 200;
};

struct DenoiseArgs {
  std::string image, out, truth, noisyOut;
  std::optional<double> sigma;
  int sweeps = 30;
  int learnEvery = 5;
  std::string neighbors = "separate";
  std::string quadrature = "exact";
  bool net = false;
  bool perNodeS2 = false;
  bool binary = false;
  std::optional<std::uint64_t> synthetic;
  std::uint64_t seed = 0;
};

// Keep only the columns that survived standardization.
SideInfo restrict_side(const SideInfo& side, const std::vector<Index>& kept, Index raw) {
  if (static_cast<Index>(kept.size()) == raw) return side;
  SideInfo out = side;
  if (side.kind == SideInfoKind::Features) {
    MatrixXd D(static_cast<Index>(kept.size()), side.features.cols());
    for (std::size_t i = 0; i < kept.size(); ++i) D.row(static_cast<Index>(i)) = side.features.row(kept[i]);
    out.features = D;
  } else if (side.kind == SideInfoKind::Graph) {
    std::vector<Index> newId(static_cast<std::size_t>(raw), -1);
    for (std::size_t i = 0; i < kept.size(); ++i) newId[static_cast<std::size_t>(kept[i])] = static_cast<Index>(i);
    std::vector<std::pair<Index, Index>> edges;
    for (Index j = 0; j < raw; ++j) {
      for (Index k : side.graph.neighbors(j)) {
        if (j < k && newId[static_cast<std::size_t>(j)] >= 0 && newId[static_cast<std::size_t>(k)] >= 0) {
          edges.emplace_back(newId[static_cast<std::size_t>(j)], newId[static_cast<std::size_t>(k)]);
        }
      }
    }
    out.graph = Graph::from_edges(static_cast<Index>(kept.size()), edges);
  }
  return out;
}

fused::Quadrature parse_quadrature(const std::string& q) {
  if (q == "exact") return fused::Quadrature::Exact;
  if (q == "gh") return fused::Quadrature::GaussHermite;
  throw Error(ErrorKind::InvalidArgument, "unknown quadrature '" + q + "' (exact or gh)");
}

int cmd_fit(const FitArgs& a) {
  Dataset data = csv::load_dataset(a.x, a.y);
  const Index rawP = data.p();

  SideInfo side;
  if (a.prior == "softmax" || a.prior == "mdn") {
    if (a.side.empty()) throw Error(ErrorKind::InvalidArgument, a.prior + " prior requires side information");
    side = csv::load_side_features(a.side);
  } else if (a.prior == "fused") {
    if (a.graph.empty() || a.graph == "chain") {
      side = SideInfo::from_graph(Graph::chain(rawP));
    } else {
      side = SideInfo::from_graph(csv::load_edge_list(a.graph, rawP));
    }
  } else if (a.prior != "ash") {
    throw Error(ErrorKind::InvalidArgument, "unknown prior '" + a.prior + "' (ash, softmax, mdn, fused)");
  }
  side.validate(rawP);

  const StandardizedDesign design = standardize(data, {.dropConstant = a.dropConstant});
  side = restrict_side(side, design.keptColumns, rawP);

  FitConfig cfg;
  cfg.maxSweeps = a.maxSweeps;
  cfg.elboTol = a.tol;
  cfg.seed = a.seed;
  if (a.varianceRule == "exact-cavi") {
    cfg.varianceRule = VarianceRule::ExactCavi;
  } else if (a.varianceRule == "fixed-point") {
    cfg.varianceRule = VarianceRule::FixedPoint;
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown variance rule '" + a.varianceRule + "'");
  }
  nets::TrainConfig train;
  train.learningRate = a.lr;
  train.steps = a.steps;
  train.stepsAfterFirst = a.stepsAfter;
  train.seed = a.seed;

  std::unique_ptr<PriorModel> prior;
  nlohmann::json pc = {{"kind", a.prior}};
  if (a.prior == "ash") {
    ash::AshConfig c;
    c.gridSize = a.gridSize;
    prior = std::make_unique<ash::AshPrior>(c);
    pc["grid_size"] = a.gridSize;
  } else if (a.prior == "softmax") {
    nets::SoftmaxPriorConfig c;
    c.hidden = a.hidden;
    c.gridSize = a.gridSize;
    c.train = train;
    prior = std::make_unique<nets::SoftmaxPrior>(side.features, c);
    pc.update({{"grid_size", a.gridSize}, {"hidden", a.hidden}, {"lr", a.lr}, {"steps", a.steps},
               {"steps_after_first", a.stepsAfter}});
  } else if (a.prior == "mdn") {
    nets::MdnPriorConfig c;
    c.hidden = a.hidden;
    c.components = a.components;
    c.train = train;
    prior = std::make_unique<nets::MdnPrior>(side.features, c);
    pc.update({{"components", a.components}, {"hidden", a.hidden}, {"lr", a.lr}, {"steps", a.steps},
               {"steps_after_first", a.stepsAfter}});
  } else {
    fused::FusedPriorConfig c;
    c.initScales = {a.s1, a.s2};
    c.learnEvery = a.learnEvery;
    c.quadrature = parse_quadrature(a.quadrature);
    prior = std::make_unique<fused::FusedPrior>(side.graph, c);
    pc.update({{"s1", a.s1}, {"s2", a.s2}, {"learn_every", a.learnEvery}, {"quadrature", a.quadrature}});
  }
  cfg.priorConfig = pc;

  const FitResult fit = fit_design(design, *prior, cfg);
  const ModelFile model = ModelFile::from_fit(fit, data.columnNames);
  if (!a.out.empty()) model.save(a.out);
  if (!a.fitted.empty()) csv::write_vector(a.fitted, predict(fit, data.X), "fitted");

  const VectorXd pi0 = prior->null_weights();
  std::printf("elbo=%s sweeps=%d converged=%s\n", csv::format_double(fit.state.elboTrace.back()).c_str(), fit.sweeps,
              fit.converged ? "true" : "false");
  std::printf("pi0_mean=%s pi0_min=%s pi0_max=%s\n", csv::format_double(pi0.mean()).c_str(),
              csv::format_double(pi0.minCoeff()).c_str(), csv::format_double(pi0.maxCoeff()).c_str());
  return 0;
}

int cmd_predict(const PredictArgs& a) {
  const ModelFile model = ModelFile::load(a.model);
  const MatrixXd X = csv::load_matrix(a.x);
  VectorXd yhat(0);
  if (X.rows() > 0) yhat = model.predict(X);
  else if (X.cols() != static_cast<Index>(model.coefficients.size())) {
    throw Error(ErrorKind::DimensionMismatch, "new data has " + std::to_string(X.cols()) + " columns, model expects " +
                                                  std::to_string(model.coefficients.size()));
  }
  csv::write_vector(a.out, yhat, "prediction");
  return 0;
}

int cmd_experiment(const SimArgs& a, bool benchmark) {
  sim::SimulationConfig base;
  base.replicates = a.replicates;
  base.seed = a.seed;
  if (a.n) base.n = *a.n;
  if (a.p) {
    base.p = *a.p;
    if (!a.s) base.s = std::min<Index>(base.s, base.p);
  }
  if (a.s) base.s = *a.s;
  if (a.pve) base.pve = *a.pve;
  if (a.rho) base.rho = *a.rho;
  if (!a.coef.empty()) base.coef = sim::parse_coef_dist(a.coef);
  if (!a.noise.empty()) base.noise = sim::parse_noise_dist(a.noise);
  base.validate();

  sim::RunOptions opt;
  if (!a.methods.empty()) {
    opt.methods = a.methods;
  } else if (benchmark) {
    opt.methods = {"nash", "oracle", "mean"};
  }
  if (a.metric == "rmse-over-sigma2") {
    opt.metric = sim::Metric::RmseOverSigma2;
  } else if (a.metric == "rmse-over-sigma") {
    opt.metric = sim::Metric::RmseOverSigma;
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown metric '" + a.metric + "'");
  }
  opt.fit.maxSweeps = a.maxSweeps;
  opt.threads = default_threads();
  opt.recordTime = a.recordTime;
  const auto rows = sim::run_experiment(a.experiment, base, opt);
  if (!a.out.empty()) {
    sim::write_results_csv(a.out, rows);
  } else {
    std::cout << sim::format_results_csv(rows);
  }
  // per-setting, per-method means on stderr so stdout stays a clean CSV
  std::vector<std::string> seen;
  for (const auto& r : rows) {
    const std::string key = r.setting + " " + r.method;
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    double sum = 0.0;
    int cnt = 0;
    for (const auto& q : rows) {
      if (q.setting == r.setting && q.method == r.method) {
        sum += q.scaledPerf;
        ++cnt;
      }
    }
    std::fprintf(stderr, "%s method=%s mean_scaled_perf=%s\n", r.setting.c_str(), r.method.c_str(),
                 csv::format_double(sum / cnt).c_str());
  }
  return 0;
}

MatrixXd read_image(const std::string& path) {
  if (fs::path(path).extension() == ".csv") return csv::load_matrix(path);
  return pgm::read(path);
}

void write_image(const std::string& path, const MatrixXd& img, bool binary) {
  if (fs::path(path).extension() == ".csv") {
    csv::write_matrix(path, img);
  } else {
    pgm::write(path, img, binary);
  }
}

int cmd_denoise(const DenoiseArgs& a) {
  MatrixXd noisy, truth;
  bool haveTruth = false;
  if (a.synthetic) {
    truth = fused::synthetic_piecewise_image(28, 28, *a.synthetic);
    noisy = fused::add_gaussian_noise(truth, a.sigma.value_or(0.2), sim::derive_seed(*a.synthetic, 1));
    haveTruth = true;
    if (!a.truth.empty()) write_image(a.truth, truth, a.binary);
  } else {
    if (a.image.empty()) throw Error(ErrorKind::InvalidArgument, "--image or --synthetic is required");
    noisy = read_image(a.image);
    if (!a.truth.empty()) {
      truth = read_image(a.truth);
      haveTruth = true;
    }
  }
  if (!a.noisyOut.empty()) write_image(a.noisyOut, noisy, a.binary);

  fused::DenoiseConfig cfg;
  cfg.sweeps = a.sweeps;
  cfg.learnEvery = a.learnEvery;
  cfg.sigma = a.sigma;
  cfg.quadrature = parse_quadrature(a.quadrature);
  if (a.neighbors == "separate") {
    cfg.neighborMode = fused::NeighborMode::Separate;
  } else if (a.neighbors == "mean") {
    cfg.neighborMode = fused::NeighborMode::Mean;
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown neighbor mode '" + a.neighbors + "' (separate or mean)");
  }
  cfg.useNet = a.net;
  cfg.perNodeS2 = a.perNodeS2;
  cfg.netTrain.seed = a.seed;
  cfg.threads = default_threads();
  const auto res = fused::denoise_image(noisy, cfg);
  write_image(a.out, res.image, a.binary);
  std::printf("s1=%s s2=%s sigma2=%s sigma02=%s\n", csv::format_double(res.scales.s1).c_str(),
              csv::format_double(res.scales.s2).c_str(), csv::format_double(res.sigma2).c_str(),
              csv::format_double(res.sigma02).c_str());
  if (haveTruth) {
    std::printf("rmse_noisy=%.6f rmse_denoised=%.6f\n", fused::rmse(noisy, truth), fused::rmse(res.image, truth));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split variational empirical Bayes sparse regression"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: NASH_THREADS, else all cores)")->check(CLI::PositiveNumber);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "Fit a model and write it as JSON");
  fit->add_option("--x", fa.x, "Design matrix CSV")->required();
  fit->add_option("--y", fa.y, "Response CSV (first column)")->required();
  fit->add_option("--side", fa.side, "Side-information CSV, one row per covariate");
  fit->add_option("--graph", fa.graph, "Edge-list CSV for the fused prior, or 'chain'");
  fit->add_option("--prior", fa.prior, "ash, softmax, mdn or fused");
  fit->add_option("--out", fa.out, "Model JSON path");
  fit->add_option("--fitted", fa.fitted, "Write fitted values to this CSV");
  fit->add_option("--seed", fa.seed);
  fit->add_option("--max-sweeps", fa.maxSweeps)->check(CLI::PositiveNumber);
  fit->add_option("--tol", fa.tol, "Relative ELBO change for convergence")->check(CLI::PositiveNumber);
  fit->add_option("--variance-rule", fa.varianceRule, "exact-cavi or fixed-point");
  fit->add_option("--grid-size", fa.gridSize)->check(CLI::Range(2, 1000));
  fit->add_option("--hidden", fa.hidden, "Hidden width of network priors (0: none)")->check(CLI::NonNegativeNumber);
  fit->add_option("--components", fa.components)->check(CLI::PositiveNumber);
  fit->add_option("--steps", fa.steps, "Adam steps on the first sweep")->check(CLI::NonNegativeNumber);
  fit->add_option("--steps-after", fa.stepsAfter, "Adam steps on later sweeps")->check(CLI::NonNegativeNumber);
  fit->add_option("--lr", fa.lr)->check(CLI::PositiveNumber);
  fit->add_option("--s1", fa.s1)->check(CLI::PositiveNumber);
  fit->add_option("--s2", fa.s2)->check(CLI::PositiveNumber);
  fit->add_option("--learn-every", fa.learnEvery, "Re-learn fused scales every k sweeps (0: never)");
  fit->add_option("--quadrature", fa.quadrature, "exact or gh");
  fit->add_flag("--drop-constant", fa.dropConstant, "Drop constant columns instead of failing");

  PredictArgs pa;
  auto* pred = app.add_subcommand("predict", "Predict from a saved model");
  pred->add_option("--model", pa.model)->required();
  pred->add_option("--x", pa.x)->required();
  pred->add_option("--out", pa.out)->required();

  SimArgs sa;
  auto addSim = [&](CLI::App* c) {
    c->add_option("--experiment", sa.experiment, "Experiment id 1..7")->required();
    c->add_option("--replicates", sa.replicates)->check(CLI::PositiveNumber);
    c->add_option("--n", sa.n);
    c->add_option("--p", sa.p);
    c->add_option("--s", sa.s);
    c->add_option("--pve", sa.pve);
    c->add_option("--rho", sa.rho);
    c->add_option("--coef", sa.coef, "gaussian, laplace or tDF");
    c->add_option("--noise", sa.noise, "gaussian, uniform, laplace or tDF");
    c->add_option("--seed", sa.seed);
    c->add_option("--out", sa.out, "Results CSV (default: stdout)");
    c->add_option("--metric", sa.metric, "rmse-over-sigma2 or rmse-over-sigma");
    c->add_option("--methods", sa.methods, "nash, oracle, mean")->delimiter(',');
    c->add_option("--max-sweeps", sa.maxSweeps)->check(CLI::PositiveNumber);
    c->add_flag("--record-time", sa.recordTime, "Fill the seconds column with wall-clock time");
  };
  auto* simc = app.add_subcommand("simulate", "Run a simulation experiment (nash and oracle)");
  addSim(simc);
  auto* bench = app.add_subcommand("benchmark", "Run a simulation experiment (nash, oracle, mean)");
  addSim(bench);

  DenoiseArgs da;
  auto* den = app.add_subcommand("denoise", "Denoise a grayscale image with the fused prior");
  den->add_option("--image", da.image, "Input PGM (P2/P5) or CSV matrix");
  den->add_option("--out", da.out, "Output image")->required();
  den->add_option("--truth", da.truth, "Clean image for the RMSE report (written when --synthetic)");
  den->add_option("--noisy-out", da.noisyOut, "Also write the noisy input");
  den->add_option("--sigma", da.sigma, "Known noise sd (default: estimated)")->check(CLI::NonNegativeNumber);
  den->add_option("--sweeps", da.sweeps)->check(CLI::PositiveNumber);
  den->add_option("--learn-every", da.learnEvery)->check(CLI::NonNegativeNumber);
  den->add_option("--neighbors", da.neighbors, "separate or mean");
  den->add_option("--quadrature", da.quadrature, "exact or gh");
  den->add_flag("--net", da.net, "Use the message network for the smoothness centers");
  den->add_flag("--per-node-s2", da.perNodeS2, "Let the message network scale s2 per pixel");
  den->add_flag("--binary", da.binary, "Write P5 instead of P2");
  den->add_option("--synthetic", da.synthetic, "Generate a 28x28 piecewise test image from this seed");
  den->add_option("--seed", da.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  }
  if (threads > 0) setenv("NASH_THREADS", std::to_string(threads).c_str(), 1);

  try {
    if (*fit) return cmd_fit(fa);
    if (*pred) return cmd_predict(pa);
    if (*simc) return cmd_experiment(sa, false);
    if (*bench) return cmd_experiment(sa, true);
    if (*den) return cmd_denoise(da);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return is_numeric_failure(e.kind()) ? kExitNumeric : kExitInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  }
  return kExitInput;
}
