#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "nash/engine.hpp"

namespace nash {

inline constexpr int kModelFormatVersion = 1;

/// Versioned, human-readable model document.
struct ModelFile {
  int version = kModelFormatVersion;
  std::string priorKind;
  nlohmann::json priorParameters = nlohmann::json::object();
  std::vector<std::string> columnNames;
  std::vector<double> coefficients;        // raw units
  std::vector<double> latentCoefficients;  // raw units, from the prior means
  double intercept = 0.0;
  double sigma2 = 0.0;
  double sigma02 = 0.0;
  std::vector<double> elboTrace;
  int sweeps = 0;
  bool converged = false;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;

  static ModelFile from_fit(const FitResult& fit, const std::vector<std::string>& columnNames = {});

  nlohmann::json to_json() const;
  static ModelFile from_json(const nlohmann::json& j);
  std::string serialize() const;  // 2-space indented JSON plus trailing newline
  static ModelFile parse(const std::string& text);

  void save(const std::filesystem::path& path) const;
  static ModelFile load(const std::filesystem::path& path);

  Eigen::VectorXd predict(const Eigen::MatrixXd& Xnew) const;
};

nlohmann::json config_to_json(const FitConfig& config);

}  // namespace nash
