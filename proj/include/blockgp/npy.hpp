#pragma once

// NPY version 1.0 reader/writer for little-endian float32/float64 arrays in
// C order.

#include "blockgp/types.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace blockgp::npy {

static_assert(std::endian::native == std::endian::little, "NPY IO assumes a little-endian host");

struct Array {
  std::vector<std::size_t> shape;
  bool is_f32 = false;
  std::vector<double> values;  // C order, widened

  [[nodiscard]] std::size_t count() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }
};

namespace detail {

inline constexpr char kMagic[] = "\x93NUMPY";

inline std::string header_text(const std::vector<std::size_t>& shape, bool f32) {
  std::ostringstream os;
  os << "{'descr': '" << (f32 ? "<f4" : "<f8") << "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    os << shape[i];
    if (shape.size() == 1 || i + 1 < shape.size()) os << ",";
    if (i + 1 < shape.size()) os << " ";
  }
  os << "), }";
  std::string h = os.str();
  // magic(6) + version(2) + length(2) + header, padded to 64 bytes, newline-terminated
  const std::size_t total = 10 + h.size() + 1;
  h.append((64 - total % 64) % 64, ' ');
  h.push_back('\n');
  return h;
}

inline std::string parse_field(const std::string& header, const std::string& key, const std::string& file) {
  const auto pos = header.find("'" + key + "'");
  if (pos == std::string::npos) throw FormatError(file + ": NPY header lacks '" + key + "'");
  auto colon = header.find(':', pos);
  if (colon == std::string::npos) throw FormatError(file + ": malformed NPY header");
  ++colon;
  while (colon < header.size() && header[colon] == ' ') ++colon;
  if (colon >= header.size()) throw FormatError(file + ": malformed NPY header");
  std::size_t end = colon;
  if (header[colon] == '\'') {
    end = header.find('\'', colon + 1);
    if (end == std::string::npos) throw FormatError(file + ": malformed NPY header");
    return header.substr(colon + 1, end - colon - 1);
  }
  if (header[colon] == '(') {
    end = header.find(')', colon);
    if (end == std::string::npos) throw FormatError(file + ": malformed NPY header");
    return header.substr(colon, end - colon + 1);
  }
  end = header.find_first_of(",}", colon);
  if (end == std::string::npos) throw FormatError(file + ": malformed NPY header");
  return header.substr(colon, end - colon);
}

}  // namespace detail

inline void write(const std::filesystem::path& path, const Array& arr) {
  if (arr.values.size() != arr.count()) throw ShapeError(path.string() + ": value count does not match shape");
  const std::string header = detail::header_text(arr.shape, arr.is_f32);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  out.write(detail::kMagic, 6);
  const char version[2] = {1, 0};
  out.write(version, 2);
  const auto len = static_cast<std::uint16_t>(header.size());
  out.write(reinterpret_cast<const char*>(&len), 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  if (arr.is_f32) {
    std::vector<float> buf(arr.values.begin(), arr.values.end());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  } else {
    out.write(reinterpret_cast<const char*>(arr.values.data()),
              static_cast<std::streamsize>(arr.values.size() * sizeof(double)));
  }
  if (!out) throw FormatError(path.string() + ": write failed");
}

inline Array read(const std::filesystem::path& path) {
  const std::string file = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(file + ": cannot open");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 10 || std::memcmp(bytes.data(), detail::kMagic, 6) != 0) {
    throw FormatError(file + ": not an NPY file (bad magic)");
  }
  if (bytes[6] != 1 || bytes[7] != 0) throw FormatError(file + ": unsupported NPY version");
  std::uint16_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 2);
  if (bytes.size() < 10u + len) throw FormatError(file + ": truncated NPY header");
  const std::string header = bytes.substr(10, len);

  Array arr;
  const std::string descr = detail::parse_field(header, "descr", file);
  if (descr == "<f8") {
    arr.is_f32 = false;
  } else if (descr == "<f4") {
    arr.is_f32 = true;
  } else {
    throw FormatError(file + ": unsupported dtype '" + descr + "'");
  }
  if (detail::parse_field(header, "fortran_order", file) != "False") {
    throw FormatError(file + ": Fortran-ordered arrays are not supported");
  }
  const std::string shape = detail::parse_field(header, "shape", file);
  std::string dims = shape.substr(1, shape.size() - 2);
  std::stringstream ss(dims);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto first = tok.find_first_not_of(' ');
    if (first == std::string::npos) continue;
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(tok.substr(first), &used);
      if (tok.find_first_not_of(' ', first + used) != std::string::npos) throw std::invalid_argument(tok);
      arr.shape.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw FormatError(file + ": malformed shape " + shape);
    }
  }

  const std::size_t item = arr.is_f32 ? sizeof(float) : sizeof(double);
  const std::size_t body = bytes.size() - 10u - len;
  if (body != arr.count() * item) {
    throw FormatError(file + ": payload holds " + std::to_string(body) + " bytes, shape needs " +
                      std::to_string(arr.count() * item) + " (truncated or corrupt)");
  }
  arr.values.resize(arr.count());
  const char* data = bytes.data() + 10 + len;
  if (arr.is_f32) {
    std::vector<float> buf(arr.count());
    std::memcpy(buf.data(), data, body);
    std::copy(buf.begin(), buf.end(), arr.values.begin());
  } else {
    std::memcpy(arr.values.data(), data, body);
  }
  return arr;
}

template <typename Scalar>
constexpr bool is_f32() {
  return sizeof(Scalar) == sizeof(float);
}

/// Writes an n x d matrix as a 2-D C-order array of the matching dtype.
template <typename Scalar>
void write_matrix(const std::filesystem::path& path, const Matrix<Scalar>& m) {
  Array arr;
  arr.is_f32 = is_f32<Scalar>();
  arr.shape = {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
  arr.values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) arr.values.push_back(static_cast<double>(m(i, j)));
  }
  write(path, arr);
}

template <typename Scalar>
void write_vector(const std::filesystem::path& path, const Vector<Scalar>& v) {
  Array arr;
  arr.is_f32 = is_f32<Scalar>();
  arr.shape = {static_cast<std::size_t>(v.size())};
  arr.values.assign(v.data(), v.data() + v.size());
  write(path, arr);
}

template <typename Scalar>
Matrix<Scalar> read_matrix(const std::filesystem::path& path) {
  const Array arr = read(path);
  if (arr.shape.size() != 2) throw FormatError(path.string() + ": expected a 2-D array");
  const auto rows = static_cast<Eigen::Index>(arr.shape[0]);
  const auto cols = static_cast<Eigen::Index>(arr.shape[1]);
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      m(i, j) = static_cast<Scalar>(arr.values[static_cast<std::size_t>(i * cols + j)]);
    }
  }
  return m;
}

template <typename Scalar>
Vector<Scalar> read_vector(const std::filesystem::path& path) {
  const Array arr = read(path);
  if (arr.shape.size() != 1) throw FormatError(path.string() + ": expected a 1-D array");
  Vector<Scalar> v(static_cast<Eigen::Index>(arr.shape[0]));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = static_cast<Scalar>(arr.values[static_cast<std::size_t>(i)]);
  return v;
}

}  // namespace blockgp::npy
