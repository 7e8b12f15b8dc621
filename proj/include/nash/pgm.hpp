#pragma once

#include <filesystem>
#include <string>

#include <Eigen/Dense>

namespace nash::pgm {

/// P2 or P5 graymap with pixel values mapped to [0, 1] by maxval.
Eigen::MatrixXd read(const std::filesystem::path& path);
Eigen::MatrixXd parse(const std::string& bytes);

/// Values are clamped to [0, 1] and quantized at maxval 255.
void write(const std::filesystem::path& path, const Eigen::MatrixXd& image, bool binary = false);
std::string format(const Eigen::MatrixXd& image, bool binary = false);

}  // namespace nash::pgm
