#include "nash/model_io.hpp"

#include <fstream>
#include <sstream>

#include "nash/error.hpp"

namespace nash {

namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

nlohmann::json config_to_json(const FitConfig& c) {
  nlohmann::json j;
  j["max_sweeps"] = c.maxSweeps;
  j["elbo_tol"] = c.elboTol;
  j["variance_rule"] = c.varianceRule == VarianceRule::ExactCavi ? "exact-cavi" : "fixed-point";
  j["fix_variances"] = c.fixVariances;
  j["init"] = c.initMode == InitMode::Zero ? "zero" : "provided";
  if (c.initSigma2) j["init_sigma2"] = *c.initSigma2;
  if (c.initSigma02) j["init_sigma02"] = *c.initSigma02;
  j["prior"] = c.priorConfig;
  return j;
}

ModelFile ModelFile::from_fit(const FitResult& fit, const std::vector<std::string>& columnNames) {
  ModelFile m;
  m.priorKind = fit.priorKind;
  m.priorParameters = fit.priorParameters;
  m.columnNames = columnNames;
  m.coefficients = to_vec(fit.coefficients);
  m.latentCoefficients = to_vec(fit.latentCoefficients);
  m.intercept = fit.intercept;
  m.sigma2 = fit.state.sigma2;
  m.sigma02 = fit.state.sigma02;
  m.elboTrace = fit.state.elboTrace;
  m.sweeps = fit.sweeps;
  m.converged = fit.converged;
  m.config = config_to_json(fit.config);
  m.seed = fit.config.seed;
  return m;
}

nlohmann::json ModelFile::to_json() const {
  nlohmann::json out;
  out["format"] = "nash-model";
  out["version"] = version;
  out["prior"] = {{"kind", priorKind}, {"parameters", priorParameters}};
  out["columns"] = columnNames;
  out["coefficients"] = coefficients;
  out["latent_coefficients"] = latentCoefficients;
  out["intercept"] = intercept;
  out["sigma2"] = sigma2;
  out["sigma02"] = sigma02;
  out["elbo_trace"] = elboTrace;
  out["sweeps"] = sweeps;
  out["converged"] = converged;
  out["config"] = config;
  out["seed"] = seed;
  return out;
}

ModelFile ModelFile::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "nash-model") throw Error(ErrorKind::ParseError, "not a model file");
    ModelFile m;
    m.version = j.at("version").get<int>();
    if (m.version != kModelFormatVersion) {
      throw Error(ErrorKind::ParseError, "unsupported model format version " + std::to_string(m.version));
    }
    m.priorKind = j.at("prior").at("kind").get<std::string>();
    m.priorParameters = j.at("prior").at("parameters");
    m.columnNames = j.at("columns").get<std::vector<std::string>>();
    m.coefficients = j.at("coefficients").get<std::vector<double>>();
    m.latentCoefficients = j.at("latent_coefficients").get<std::vector<double>>();
    m.intercept = j.at("intercept").get<double>();
    m.sigma2 = j.at("sigma2").get<double>();
    m.sigma02 = j.at("sigma02").get<double>();
    m.elboTrace = j.at("elbo_trace").get<std::vector<double>>();
    m.sweeps = j.at("sweeps").get<int>();
    m.converged = j.at("converged").get<bool>();
    m.config = j.at("config");
    m.seed = j.at("seed").get<std::uint64_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("malformed model file: ") + e.what());
  }
}

std::string ModelFile::serialize() const { return to_json().dump(2) + "\n"; }

ModelFile ModelFile::parse(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("model file is not JSON: ") + e.what());
  }
  return from_json(j);
}

void ModelFile::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << serialize();
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

ModelFile ModelFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

Eigen::VectorXd ModelFile::predict(const Eigen::MatrixXd& Xnew) const {
  const auto p = static_cast<Eigen::Index>(coefficients.size());
  if (Xnew.cols() != p) {
    throw Error(ErrorKind::DimensionMismatch,
                "new data has " + std::to_string(Xnew.cols()) + " columns, model expects " + std::to_string(p));
  }
  const Eigen::Map<const Eigen::VectorXd> b(coefficients.data(), p);
  return (Xnew * b).array() + intercept;
}

}  // namespace nash
