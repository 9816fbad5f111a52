#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "goalinf/linalg.hpp"

namespace goalinf {

/// Matrix Market dense ("array") format IO. Entries are written in
/// column-major order per the format definition; symmetric files carry
/// the lower triangle only. Vectors are single-column arrays.
namespace mm {

inline void write_matrix(const std::filesystem::path& path, const Matrix& m,
                         bool symmetric = false) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.precision(17);
  out << "%%MatrixMarket matrix array real " << (symmetric ? "symmetric" : "general") << "\n";
  out << m.rows() << " " << m.cols() << "\n";
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index i = symmetric ? j : 0; i < m.rows(); ++i) {
      out << m(i, j) << "\n";
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline void write_vector(const std::filesystem::path& path, const Vector& v) {
  write_matrix(path, Matrix(v), false);
}

inline Matrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string header;
  std::getline(in, header);
  std::string lowered = header;
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lowered.rfind("%%matrixmarket", 0) != 0 || lowered.find("array") == std::string::npos ||
      lowered.find("real") == std::string::npos) {
    throw IoError("unsupported MatrixMarket header in " + path.string() + ": " + header);
  }
  const bool symmetric = lowered.find("symmetric") != std::string::npos;

  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '%') break;
  }
  std::istringstream dims(line);
  Index rows = 0, cols = 0;
  if (!(dims >> rows >> cols) || rows <= 0 || cols <= 0) {
    throw IoError("bad size line in " + path.string());
  }
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = symmetric ? j : 0; i < rows; ++i) {
      double v;
      if (!(in >> v)) throw IoError("truncated data in " + path.string());
      m(i, j) = v;
      if (symmetric) m(j, i) = v;
    }
  }
  return m;
}

inline Vector read_vector(const std::filesystem::path& path) {
  Matrix m = read_matrix(path);
  if (m.cols() != 1) throw IoError("expected a single-column array in " + path.string());
  return m.col(0);
}

}  // namespace mm
}  // namespace goalinf
