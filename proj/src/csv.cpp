#include "nash/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "nash/error.hpp"

namespace nash::csv {

using Eigen::Index;
using Eigen::MatrixXd;

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t')) --b;
  return std::string(s.substr(a, b - a));
}

// Parses the whole field; nullopt when it is not a number. Non-finite
// spellings ("nan", "inf") parse successfully so callers can reject them.
std::optional<double> parse_number(const std::string& field) {
  const std::string f = trim(field);
  if (f.empty()) return std::nullopt;
  const char* first = f.data();
  const char* last = f.data() + f.size();
  if (*first == '+') ++first;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return value;
}

[[noreturn]] void parse_error(std::size_t line, std::size_t column, const std::string& msg) {
  throw Error(ErrorKind::ParseError,
              "parse error at line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + msg);
}

}  // namespace

Table parse_table(const std::string& text, const Options& options) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::size_t> lines;

  std::vector<std::string> record;
  std::string field;
  bool inQuotes = false;
  bool fieldStarted = false;
  std::size_t line = 1;
  std::size_t recordLine = 1;

  auto end_record = [&] {
    record.push_back(field);
    field.clear();
    fieldStarted = false;
    const bool blank = record.size() == 1 && trim(record[0]).empty();
    if (!blank) {
      records.push_back(std::move(record));
      lines.push_back(recordLine);
    }
    record.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (inQuotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          inQuotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !fieldStarted) {
      inQuotes = true;
      fieldStarted = true;
    } else if (c == options.delimiter) {
      record.push_back(field);
      field.clear();
      fieldStarted = false;
    } else if (c == '\r') {
      // CRLF; the '\n' closes the record
    } else if (c == '\n') {
      end_record();
      ++line;
      recordLine = line;
    } else {
      field.push_back(c);
      fieldStarted = true;
    }
  }
  if (inQuotes) parse_error(line, record.size() + 1, "unterminated quoted field");
  if (!field.empty() || !record.empty()) end_record();

  Table table;
  if (records.empty()) return table;

  bool hasHeader = false;
  switch (options.header) {
    case HeaderMode::Present:
      hasHeader = true;
      break;
    case HeaderMode::Absent:
      hasHeader = false;
      break;
    case HeaderMode::Auto:
      hasHeader = std::any_of(records[0].begin(), records[0].end(),
                              [](const std::string& f) { return !parse_number(f).has_value(); });
      break;
  }
  std::size_t start = 0;
  if (hasHeader) {
    for (const auto& h : records[0]) table.header.push_back(trim(h));
    start = 1;
  }
  const std::size_t width = hasHeader ? table.header.size() : records[0].size();
  for (std::size_t r = start; r < records.size(); ++r) {
    if (records[r].size() != width) {
      throw Error(ErrorKind::DimensionMismatch, "line " + std::to_string(lines[r]) + " has " +
                                                    std::to_string(records[r].size()) + " fields, expected " +
                                                    std::to_string(width));
    }
    table.rows.push_back(std::move(records[r]));
    table.lineNumbers.push_back(lines[r]);
  }
  if (table.header.empty() && table.rows.empty()) return table;
  return table;
}

Table read_table(const std::filesystem::path& path, const Options& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  Table t = parse_table(text, options);
  if (t.header.empty() && t.rows.empty()) throw Error(ErrorKind::ParseError, "empty file " + path.string());
  return t;
}

MatrixXd to_matrix(const Table& table) {
  const Index rows = static_cast<Index>(table.rows.size());
  const Index cols = rows > 0 ? static_cast<Index>(table.rows[0].size()) : static_cast<Index>(table.header.size());
  MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const auto v = parse_number(table.rows[r][c]);
      if (!v) parse_error(table.lineNumbers[r], c + 1, "not a number: '" + table.rows[r][c] + "'");
      if (!std::isfinite(*v)) parse_error(table.lineNumbers[r], c + 1, "non-finite value '" + table.rows[r][c] + "'");
      m(r, c) = *v;
    }
  }
  return m;
}

MatrixXd load_matrix(const std::filesystem::path& path, const Options& options) {
  return to_matrix(read_table(path, options));
}

Dataset load_dataset(const std::filesystem::path& xPath, const std::filesystem::path& yPath,
                     const Options& options) {
  const Table xt = read_table(xPath, options);
  const Table yt = read_table(yPath, options);
  Dataset d;
  d.X = to_matrix(xt);
  const MatrixXd ym = to_matrix(yt);
  if (ym.cols() < 1) throw Error(ErrorKind::DimensionMismatch, "response file has no columns");
  d.y = ym.col(0);
  d.columnNames = xt.header;
  if (d.y.size() != d.X.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "response has " + std::to_string(d.y.size()) +
                                                  " rows but predictors have " + std::to_string(d.X.rows()));
  }
  d.validate();
  return d;
}

SideInfo side_features_from_table(const Table& table) {
  const std::size_t rows = table.rows.size();
  const std::size_t cols = rows > 0 ? table.rows[0].size() : table.header.size();
  std::vector<std::vector<double>> columns;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < cols; ++c) {
    const std::string base = c < table.header.size() ? table.header[c] : "d" + std::to_string(c);
    bool numeric = true;
    for (std::size_t r = 0; r < rows && numeric; ++r) numeric = parse_number(table.rows[r][c]).has_value();
    if (numeric) {
      std::vector<double> col(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        const double v = *parse_number(table.rows[r][c]);
        if (!std::isfinite(v)) parse_error(table.lineNumbers[r], c + 1, "non-finite value");
        col[r] = v;
      }
      columns.push_back(std::move(col));
      names.push_back(base);
      continue;
    }
    std::set<std::string> categories;
    for (std::size_t r = 0; r < rows; ++r) categories.insert(trim(table.rows[r][c]));
    for (const auto& cat : categories) {
      std::vector<double> col(rows);
      for (std::size_t r = 0; r < rows; ++r) col[r] = trim(table.rows[r][c]) == cat ? 1.0 : 0.0;
      columns.push_back(std::move(col));
      names.push_back(base + "=" + cat);
    }
  }
  MatrixXd D(static_cast<Index>(rows), static_cast<Index>(columns.size()));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (std::size_t r = 0; r < rows; ++r) D(static_cast<Index>(r), static_cast<Index>(c)) = columns[c][r];
  }
  return SideInfo::from_features(std::move(D), std::move(names));
}

SideInfo load_side_features(const std::filesystem::path& path, const Options& options) {
  return side_features_from_table(read_table(path, options));
}

Graph load_edge_list(const std::filesystem::path& path, Index nodes, const Options& options) {
  const MatrixXd m = load_matrix(path, options);
  if (m.rows() > 0 && m.cols() != 2) throw Error(ErrorKind::DimensionMismatch, "edge list must have 2 columns");
  std::vector<std::pair<Index, Index>> edges;
  for (Index r = 0; r < m.rows(); ++r) {
    const double a = m(r, 0);
    const double b = m(r, 1);
    if (a != std::floor(a) || b != std::floor(b)) {
      throw Error(ErrorKind::ParseError, "edge list row " + std::to_string(r + 1) + " is not integral");
    }
    edges.emplace_back(static_cast<Index>(a), static_cast<Index>(b));
  }
  return Graph::from_edges(nodes, edges);
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) return std::to_string(value);
  return std::string(buf, ptr);
}

void write_matrix(const std::filesystem::path& path, const MatrixXd& m, const std::vector<std::string>& header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  if (!header.empty()) out << '\n';
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
    out << '\n';
  }
}

void write_vector(const std::filesystem::path& path, const Eigen::VectorXd& v, const std::string& name) {
  write_matrix(path, MatrixXd(v), {name});
}

}  // namespace nash::csv
