#pragma once

// ---------------------------------------------------------------------------
// Matrix file formats.
//   CSV:    one sample per line, comma-separated decimal values.
//   binary: magic "RSAM", two unsigned 32-bit little-endian dims (rows, cols),
//           then row-major 32-bit little-endian IEEE floats.
// The binary format quantizes to 32 bits at the file boundary; a value that is
// already representable in 32 bits round-trips bit-exactly.
// ---------------------------------------------------------------------------

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "resa/error.hpp"
#include "resa/matrix.hpp"

namespace resa {

enum class MatrixFormat { Csv, Binary };

inline MatrixFormat format_from_path(const std::string& path) {
  const auto dot = path.rfind('.');
  if (dot != std::string::npos) {
    const std::string ext = path.substr(dot + 1);
    if (ext == "csv" || ext == "txt") return MatrixFormat::Csv;
  }
  return MatrixFormat::Binary;
}

namespace detail {

inline void put_u32_le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32_le(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32_le(out, bits);
}

inline float get_f32_le(std::istream& in) {
  const std::uint32_t bits = get_u32_le(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

inline void save_matrix_csv(const Matrix& m, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "MalformedFile", "cannot open for writing: " + path);
  char buf[64];
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* r = m.row(i);
    for (std::size_t j = 0; j < m.cols; ++j) {
      std::snprintf(buf, sizeof(buf), "%.9g", r[j]);
      out << buf;
      if (j + 1 < m.cols) out << ',';
    }
    out << '\n';
  }
  require(out.good(), "MalformedFile", "write failed: " + path);
}

inline Matrix load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "MalformedFile", "cannot open: " + path);
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() && in.peek() == EOF) break;  // trailing newline
    std::size_t row_cols = 0;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = line.find(',', pos);
      const std::string cell = line.substr(pos, comma == std::string::npos
                                                    ? std::string::npos
                                                    : comma - pos);
      try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        while (used < cell.size() &&
               (cell[used] == ' ' || cell[used] == '\t' || cell[used] == '\r'))
          ++used;
        if (used != cell.size())
          fail("MalformedFile", path + ": bad value at line " + std::to_string(line_no));
        values.push_back(v);
      } catch (const Error&) {
        throw;
      } catch (const std::exception&) {
        fail("MalformedFile", path + ": bad value at line " + std::to_string(line_no));
      }
      ++row_cols;
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (rows == 0) {
      cols = row_cols;
    } else if (row_cols != cols) {
      fail("MalformedFile", path + ": ragged row at line " + std::to_string(line_no) +
                                " (" + std::to_string(row_cols) + " values, expected " +
                                std::to_string(cols) + ")");
    }
    ++rows;
  }
  require(rows > 0, "MalformedFile", path + ": empty file");
  Matrix m(rows, cols);
  m.data = std::move(values);
  return m;
}

inline void save_matrix_binary(const Matrix& m, const std::string& path) {
  constexpr std::uint64_t dim_limit = 0xffffffffULL;
  require(m.rows <= dim_limit && m.cols <= dim_limit, "DimensionOverflow",
          "matrix too large for 32-bit dims: " + shape_string(m));
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "MalformedFile", "cannot open for writing: " + path);
  out.write("RSAM", 4);
  detail::put_u32_le(out, static_cast<std::uint32_t>(m.rows));
  detail::put_u32_le(out, static_cast<std::uint32_t>(m.cols));
  for (double v : m.data) detail::put_f32_le(out, static_cast<float>(v));
  require(out.good(), "MalformedFile", "write failed: " + path);
}

inline Matrix load_matrix_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "MalformedFile", "cannot open: " + path);
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  require(in.good() && std::memcmp(magic, "RSAM", 4) == 0, "MalformedFile",
          path + ": bad magic (expected RSAM)");
  const std::uint32_t rows = detail::get_u32_le(in);
  const std::uint32_t cols = detail::get_u32_le(in);
  require(in.good(), "MalformedFile", path + ": truncated header");
  const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
  require(count <= (1ULL << 32), "DimensionOverflow",
          path + ": element count too large");
  Matrix m(rows, cols);
  for (std::uint64_t i = 0; i < count; ++i) {
    m.data[i] = static_cast<double>(detail::get_f32_le(in));
    if (!in.good())
      fail("MalformedFile", path + ": truncated at element " + std::to_string(i));
  }
  return m;
}

inline void save_matrix(const Matrix& m, const std::string& path,
                        MatrixFormat format) {
  if (format == MatrixFormat::Csv)
    save_matrix_csv(m, path);
  else
    save_matrix_binary(m, path);
}

inline Matrix load_matrix(const std::string& path, MatrixFormat format) {
  return format == MatrixFormat::Csv ? load_matrix_csv(path)
                                     : load_matrix_binary(path);
}

// Integer labels, one per line.
inline std::vector<int> load_labels(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "MalformedFile", "cannot open: " + path);
  std::vector<int> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      std::size_t used = 0;
      const int v = std::stoi(line, &used);
      while (used < line.size() &&
             (line[used] == ' ' || line[used] == '\t' || line[used] == '\r'))
        ++used;
      if (used != line.size())
        fail("MalformedFile", path + ": bad label at line " + std::to_string(line_no));
      labels.push_back(v);
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      fail("MalformedFile", path + ": bad label at line " + std::to_string(line_no));
    }
  }
  require(!labels.empty(), "MalformedFile", path + ": empty label file");
  return labels;
}

inline void save_labels(const std::vector<int>& labels, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "MalformedFile", "cannot open for writing: " + path);
  for (int v : labels) out << v << '\n';
  require(out.good(), "MalformedFile", "write failed: " + path);
}

}  // namespace resa
