#include "nash/simgen.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "nash/ash.hpp"
#include "nash/csv.hpp"
#include "nash/error.hpp"
#include "nash/parallel.hpp"

namespace nash::sim {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double parse_df(const std::string& name, std::size_t from) {
  try {
    std::size_t used = 0;
    const double df = std::stod(name.substr(from), &used);
    if (used + from != name.size() || !(df > 0.0)) throw std::invalid_argument(name);
    return df;
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidArgument, "bad degrees of freedom in '" + name + "'");
  }
}

std::string df_label(double df) { return "t" + csv::format_double(df); }

}  // namespace

CoefDist parse_coef_dist(const std::string& name) {
  if (name == "gaussian") return {CoefKind::Gaussian};
  if (name == "laplace") return {CoefKind::Laplace};
  if (name.size() > 1 && name[0] == 't') return {CoefKind::T, parse_df(name, 1)};
  throw Error(ErrorKind::InvalidArgument, "unknown coefficient distribution '" + name + "'");
}

NoiseDist parse_noise_dist(const std::string& name) {
  if (name == "gaussian") return {NoiseKind::Gaussian};
  if (name == "uniform") return {NoiseKind::Uniform};
  if (name == "laplace") return {NoiseKind::Laplace};
  if (name.size() > 1 && name[0] == 't') return {NoiseKind::T, parse_df(name, 1)};
  throw Error(ErrorKind::InvalidArgument, "unknown noise distribution '" + name + "'");
}

std::string to_string(const CoefDist& d) {
  switch (d.kind) {
    case CoefKind::Gaussian: return "gaussian";
    case CoefKind::Laplace: return "laplace";
    case CoefKind::T: return df_label(d.df);
  }
  return "";
}

std::string to_string(const NoiseDist& d) {
  switch (d.kind) {
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::Uniform: return "uniform";
    case NoiseKind::Laplace: return "laplace";
    case NoiseKind::T: return df_label(d.df);
  }
  return "";
}

Index SimulationConfig::test_rows() const {
  return std::max<Index>(1, static_cast<Index>(std::llround(static_cast<double>(n) * testFraction / (1.0 - testFraction))));
}

void SimulationConfig::validate() const {
  if (n < 2 || p < 1) throw Error(ErrorKind::InvalidArgument, "simulation needs n >= 2 and p >= 1");
  if (s < 0 || s > p) throw Error(ErrorKind::InvalidArgument, "need 0 <= s <= p");
  if (!(rho >= 0.0 && rho < 1.0)) throw Error(ErrorKind::InvalidArgument, "rho must lie in [0, 1)");
  if (!(pve >= 0.0 && pve < 1.0)) throw Error(ErrorKind::InvalidArgument, "pve must lie in [0, 1)");
  if (replicates < 1) throw Error(ErrorKind::InvalidArgument, "need at least one replicate");
  if (!(testFraction > 0.0 && testFraction < 1.0)) throw Error(ErrorKind::InvalidArgument, "testFraction must lie in (0, 1)");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  std::uint64_t h = mix(base);
  h = mix(h ^ a);
  h = mix(h ^ b);
  return mix(h ^ c);
}

MatrixXd gen_design(Index n, Index p, double rho, std::uint64_t seed, bool equicorrelated) {
  if (!(rho >= 0.0 && rho < 1.0)) throw Error(ErrorKind::InvalidArgument, "rho must lie in [0, 1)");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  MatrixXd X(n, p);
  // row by row so every branch consumes the stream in the same order
  const double rest = std::sqrt(1.0 - rho * rho);
  for (Index i = 0; i < n; ++i) {
    if (rho == 0.0) {
      for (Index j = 0; j < p; ++j) X(i, j) = z(rng);
    } else if (equicorrelated) {
      const double f = z(rng);
      for (Index j = 0; j < p; ++j) X(i, j) = std::sqrt(rho) * f + std::sqrt(1.0 - rho) * z(rng);
    } else {
      X(i, 0) = z(rng);
      for (Index j = 1; j < p; ++j) X(i, j) = rho * X(i, j - 1) + rest * z(rng);
    }
  }
  return X;
}

VectorXd gen_coefficients(Index p, Index s, const CoefDist& dist, std::uint64_t seed) {
  if (s < 0 || s > p) throw Error(ErrorKind::InvalidArgument, "need 0 <= s <= p");
  std::mt19937_64 rng(seed);
  std::vector<Index> idx(static_cast<std::size_t>(p));
  std::iota(idx.begin(), idx.end(), Index{0});
  // partial Fisher-Yates: the first s entries are a uniform sample without replacement
  for (Index k = 0; k < s; ++k) {
    std::uniform_int_distribution<Index> pick(k, p - 1);
    std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  VectorXd b = VectorXd::Zero(p);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::student_t_distribution<double> t(dist.df);
  for (Index k = 0; k < s; ++k) {
    double v = 0.0;
    switch (dist.kind) {
      case CoefKind::Gaussian: v = z(rng); break;
      case CoefKind::Laplace: {
        const double w = u(rng);
        v = -(w < 0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::abs(w));
        break;
      }
      case CoefKind::T: v = t(rng); break;
    }
    b[idx[static_cast<std::size_t>(k)]] = v;
  }
  return b;
}

VectorXd gen_noise(Index n, double sigma2, const NoiseDist& noise, std::uint64_t seed) {
  if (!(sigma2 > 0.0)) throw Error(ErrorKind::NonPositiveVariance, "noise variance must be positive");
  const double sd = std::sqrt(sigma2);
  std::mt19937_64 rng(seed);
  VectorXd e(n);
  switch (noise.kind) {
    case NoiseKind::Gaussian: {
      std::normal_distribution<double> z(0.0, sd);
      for (Index i = 0; i < n; ++i) e[i] = z(rng);
      break;
    }
    case NoiseKind::Uniform: {
      const double a = sd * std::sqrt(3.0);
      std::uniform_real_distribution<double> u(-a, a);
      for (Index i = 0; i < n; ++i) e[i] = u(rng);
      break;
    }
    case NoiseKind::Laplace: {
      const double b = sd / std::numbers::sqrt2;
      std::uniform_real_distribution<double> u(-0.5, 0.5);
      for (Index i = 0; i < n; ++i) {
        const double w = u(rng);
        e[i] = -b * (w < 0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::abs(w));
      }
      break;
    }
    case NoiseKind::T: {
      std::student_t_distribution<double> t(noise.df);
      double scale;
      if (noise.df > 2.0) {
        scale = sd * std::sqrt((noise.df - 2.0) / noise.df);
      } else {
        // match the median absolute deviation 0.6745 sd of the Gaussian case
        // using the closed-form upper quartile of t(df): 1 for df = 1, sqrt(2/3) for df = 2
        double q75;
        if (noise.df == 1.0) {
          q75 = 1.0;
        } else if (noise.df == 2.0) {
          q75 = std::sqrt(2.0 / 3.0);
        } else {
          throw Error(ErrorKind::InvalidArgument, "t noise needs df in {1, 2} or df > 2");
        }
        scale = 0.6744897501960817 * sd / q75;
      }
      for (Index i = 0; i < n; ++i) e[i] = scale * t(rng);
      break;
    }
  }
  return e;
}

Response gen_response(const MatrixXd& X, const VectorXd& b, double pve, const NoiseDist& noise, std::uint64_t seed) {
  if (!(pve >= 0.0 && pve < 1.0)) throw Error(ErrorKind::InvalidArgument, "pve must lie in [0, 1)");
  if (X.cols() != b.size()) throw Error(ErrorKind::DimensionMismatch, "coefficients differ from design columns");
  Response r;
  if (pve == 0.0 || b.isZero(0.0)) {
    r.sigma2 = 1.0;
    r.y = gen_noise(X.rows(), 1.0, noise, seed);
    return r;
  }
  const VectorXd signal = X * b;
  const double mean = signal.mean();
  const double var = (signal.array() - mean).square().sum() / static_cast<double>(signal.size() - 1);
  if (!(var > 0.0)) throw Error(ErrorKind::NonPositiveVariance, "signal has zero variance");
  r.sigma2 = var * (1.0 - pve) / pve;
  r.y = signal + gen_noise(X.rows(), r.sigma2, noise, seed);
  return r;
}

double scaled_pred_perf(const VectorXd& yTest, const VectorXd& yHat, double sigma2, Metric metric) {
  if (yTest.size() != yHat.size()) throw Error(ErrorKind::LengthMismatch, "prediction length differs from test set");
  if (!(sigma2 > 0.0)) throw Error(ErrorKind::NonPositiveVariance, "sigma^2 must be positive");
  if (yTest.size() == 0) throw Error(ErrorKind::LengthMismatch, "empty test set");
  const double rmse = std::sqrt((yTest - yHat).squaredNorm() / static_cast<double>(yTest.size()));
  return metric == Metric::RmseOverSigma2 ? rmse / sigma2 : rmse / std::sqrt(sigma2);
}

Replicate gen_replicate(const SimulationConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Index nt = cfg.test_rows();
  const MatrixXd X = gen_design(cfg.n + nt, cfg.p, cfg.rho, derive_seed(seed, 1), cfg.equicorrelated);
  Replicate r;
  r.seed = seed;
  r.bTrue = gen_coefficients(cfg.p, cfg.s, cfg.coef, derive_seed(seed, 2));
  const Response resp = gen_response(X, r.bTrue, cfg.pve, cfg.noise, derive_seed(seed, 3));
  r.sigma2 = resp.sigma2;
  r.train.X = X.topRows(cfg.n);
  r.train.y = resp.y.head(cfg.n);
  r.Xtest = X.bottomRows(nt);
  r.ytest = resp.y.tail(nt);
  return r;
}

std::vector<Setting> experiment_settings(int experiment, const SimulationConfig& base) {
  std::vector<Setting> out;
  auto add = [&](std::string label, SimulationConfig c) { out.push_back({std::move(label), c}); };
  auto num = [](double v) { return csv::format_double(v); };
  switch (experiment) {
    case 1: {
      std::vector<Index> levels{1, base.p / 100, base.p / 10, base.p / 2, base.p};
      std::vector<Index> seen;
      for (Index s : levels) {
        s = std::max<Index>(1, s);
        if (std::find(seen.begin(), seen.end(), s) != seen.end()) continue;
        seen.push_back(s);
        SimulationConfig c = base;
        c.s = s;
        add("s=" + std::to_string(s), c);
      }
      break;
    }
    case 2:
      for (Index n : {200, 500, 2000}) {
        SimulationConfig c = base;
        c.n = n;
        add("n=" + std::to_string(n), c);
      }
      break;
    case 3:
      for (double v : {0.0, 0.1, 0.3, 0.5, 0.7, 0.9}) {
        SimulationConfig c = base;
        c.pve = v;
        add("pve=" + num(v), c);
      }
      break;
    case 4:
      for (const char* d : {"gaussian", "laplace", "t3"}) {
        SimulationConfig c = base;
        c.coef = parse_coef_dist(d);
        add(std::string("coef=") + d, c);
      }
      break;
    case 5:
      for (Index p : {20, 200, 2000}) {
        SimulationConfig c = base;
        c.p = p;
        c.s = std::min<Index>(20, p);
        c.n = 500;
        add("p=" + std::to_string(p), c);
      }
      break;
    case 6:
      for (const char* d : {"gaussian", "uniform", "laplace", "t1", "t2", "t4", "t8"}) {
        SimulationConfig c = base;
        c.noise = parse_noise_dist(d);
        add(std::string("noise=") + d, c);
      }
      break;
    case 7:
      for (double r : {0.0, 0.5, 0.9, 0.95, 0.99}) {
        SimulationConfig c = base;
        c.rho = r;
        add("rho=" + num(r), c);
      }
      break;
    default:
      throw Error(ErrorKind::InvalidArgument, "unknown experiment " + std::to_string(experiment) + " (expected 1..7)");
  }
  for (auto& s : out) s.config.validate();
  return out;
}

std::vector<SimRow> run_experiment(int experiment, const SimulationConfig& base, const RunOptions& options) {
  const auto settings = experiment_settings(experiment, base);
  for (const auto& m : options.methods) {
    if (m != "nash" && m != "oracle" && m != "mean") throw Error(ErrorKind::InvalidArgument, "unknown method '" + m + "'");
  }
  const std::size_t R = static_cast<std::size_t>(base.replicates);
  const std::size_t M = options.methods.size();
  std::vector<SimRow> rows(settings.size() * R * M);
  parallel_for(static_cast<long>(settings.size() * R), options.threads, [&](long task) {
    const std::size_t si = static_cast<std::size_t>(task) / R, rep = static_cast<std::size_t>(task) % R;
    const auto& st = settings[si];
    const std::uint64_t seed = derive_seed(base.seed, static_cast<std::uint64_t>(experiment), si, rep);
    const Replicate data = gen_replicate(st.config, seed);
    for (std::size_t m = 0; m < M; ++m) {
      SimRow& row = rows[(si * R + rep) * M + m];
      row.experiment = experiment;
      row.setting = st.label;
      row.replicate = static_cast<int>(rep);
      row.seed = seed;
      row.method = options.methods[m];
      const auto t0 = std::chrono::steady_clock::now();
      VectorXd yHat;
      if (row.method == "oracle") {
        yHat = data.Xtest * data.bTrue;
      } else if (row.method == "mean") {
        yHat = VectorXd::Constant(data.ytest.size(), data.train.y.mean());
      } else {
        ash::AshPrior prior;
        FitConfig fc = options.fit;
        fc.seed = seed;
        const FitResult fit = nash::fit(data.train, SideInfo::none(), prior, fc, {.dropConstant = true});
        yHat = predict(fit, data.Xtest);
        row.pi0 = prior.null_weights().size() > 0 ? prior.null_weights()[0] : 0.0;
      }
      row.scaledPerf = scaled_pred_perf(data.ytest, yHat, data.sigma2, options.metric);
      if (options.recordTime) row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  });
  return rows;
}

std::string format_results_csv(const std::vector<SimRow>& rows) {
  std::ostringstream out;
  out << "experiment,setting,replicate,seed,method,scaled_perf,seconds\n";
  for (const auto& r : rows) {
    out << r.experiment << ',' << r.setting << ',' << r.replicate << ',' << r.seed << ',' << r.method << ','
        << csv::format_double(r.scaledPerf) << ',' << csv::format_double(r.seconds) << '\n';
  }
  return out.str();
}

void write_results_csv(const std::filesystem::path& path, const std::vector<SimRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << format_results_csv(rows);
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace nash::sim
