#include "nash/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nash/error.hpp"

namespace nash::pgm {

using Eigen::Index;

namespace {

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}

  // header token, skipping whitespace and '#' comments
  std::string token() {
    while (pos_ < s_.size()) {
      if (std::isspace(static_cast<unsigned char>(s_[pos_]))) {
        ++pos_;
      } else if (s_[pos_] == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
    const std::size_t start = pos_;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_) throw Error(ErrorKind::ParseError, "truncated PGM");
    return s_.substr(start, pos_ - start);
  }

  long number(long lo, long hi, const char* what) {
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); }) || t.size() > 9) {
      throw Error(ErrorKind::ParseError, std::string("PGM ") + what + " is not a valid integer: " + t);
    }
    const long v = std::stol(t);
    if (v < lo || v > hi) throw Error(ErrorKind::ParseError, std::string("PGM ") + what + " out of range: " + t);
    return v;
  }

  // binary raster starts after exactly one whitespace byte
  std::size_t raster_start() {
    if (pos_ >= s_.size() || !std::isspace(static_cast<unsigned char>(s_[pos_]))) {
      throw Error(ErrorKind::ParseError, "truncated PGM");
    }
    return pos_ + 1;
  }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

Eigen::MatrixXd parse(const std::string& bytes) {
  Reader rd(bytes);
  const std::string magic = rd.token();
  if (magic != "P2" && magic != "P5") throw Error(ErrorKind::ParseError, "not a PGM file (magic " + magic + ")");
  const long w = rd.number(1, 1 << 16, "width");
  const long h = rd.number(1, 1 << 16, "height");
  const long maxval = rd.number(1, 65535, "maxval");
  Eigen::MatrixXd img(h, w);
  if (magic == "P2") {
    for (Index r = 0; r < h; ++r)
      for (Index c = 0; c < w; ++c) img(r, c) = static_cast<double>(rd.number(0, maxval, "pixel")) / maxval;
    return img;
  }
  const std::size_t start = rd.raster_start();
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (bytes.size() < start + static_cast<std::size_t>(w * h) * bpp) throw Error(ErrorKind::ParseError, "truncated PGM raster");
  std::size_t k = start;
  for (Index r = 0; r < h; ++r) {
    for (Index c = 0; c < w; ++c) {
      long v = static_cast<unsigned char>(bytes[k++]);
      if (bpp == 2) v = (v << 8) | static_cast<unsigned char>(bytes[k++]);
      if (v > maxval) throw Error(ErrorKind::ParseError, "PGM pixel exceeds maxval");
      img(r, c) = static_cast<double>(v) / maxval;
    }
  }
  return img;
}

Eigen::MatrixXd read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string format(const Eigen::MatrixXd& image, bool binary) {
  std::ostringstream out;
  out << (binary ? "P5" : "P2") << "\n" << image.cols() << " " << image.rows() << "\n255\n";
  for (Index r = 0; r < image.rows(); ++r) {
    for (Index c = 0; c < image.cols(); ++c) {
      const double v = std::isfinite(image(r, c)) ? std::clamp(image(r, c), 0.0, 1.0) : 0.0;
      const int q = static_cast<int>(std::lround(v * 255.0));
      if (binary) {
        out.put(static_cast<char>(q));
      } else {
        out << q << (c + 1 == image.cols() ? '\n' : ' ');
      }
    }
  }
  return out.str();
}

void write(const std::filesystem::path& path, const Eigen::MatrixXd& image, bool binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << format(image, binary);
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace nash::pgm
