#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nash/dataset.hpp"

namespace nash::csv {

enum class HeaderMode { Auto, Present, Absent };

struct Options {
  // Auto: the first row is a header when any of its fields is not a number.
  HeaderMode header = HeaderMode::Auto;
  char delimiter = ',';
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> lineNumbers;  // 1-based source line of each row
};

/// RFC-4180 reader: quoted fields, doubled quotes, CRLF tolerant.
Table read_table(const std::filesystem::path& path, const Options& options = {});
Table parse_table(const std::string& text, const Options& options = {});

/// All fields must be finite decimal numbers; throws ParseError(line, column).
Eigen::MatrixXd to_matrix(const Table& table);

Eigen::MatrixXd load_matrix(const std::filesystem::path& path, const Options& options = {});

/// X from one file; y is the first column of the response file.
Dataset load_dataset(const std::filesystem::path& xPath, const std::filesystem::path& yPath,
                     const Options& options = {});

/// Numeric columns are copied; any column holding a non-numeric field is
/// one-hot encoded with categories in lexicographic order.
SideInfo load_side_features(const std::filesystem::path& path, const Options& options = {});
SideInfo side_features_from_table(const Table& table);

/// Two integer columns (0-based node ids), one undirected edge per row.
Graph load_edge_list(const std::filesystem::path& path, Eigen::Index nodes, const Options& options = {});

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                  const std::vector<std::string>& header = {});
void write_vector(const std::filesystem::path& path, const Eigen::VectorXd& v, const std::string& name);

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double value);

}  // namespace nash::csv
