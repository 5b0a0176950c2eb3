#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gapmrf/forward_operator.hpp"
#include "gapmrf/types.hpp"

namespace gapmrf {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian");

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void write_bytes(std::ofstream& out, const void* data, size_t bytes) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

inline void read_bytes(std::ifstream& in, void* data, size_t bytes) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(bytes));
  if (!in) throw IoError("unexpected end of file");
}

inline void write_u64(std::ofstream& out, std::uint64_t v) {
  write_bytes(out, &v, sizeof v);
}

inline std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  read_bytes(in, &v, sizeof v);
  return v;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return in;
}

inline void expect_magic(std::ifstream& in, const char magic[8],
                         const std::string& path) {
  char got[8];
  read_bytes(in, got, 8);
  if (std::memcmp(got, magic, 8) != 0)
    throw IoError("bad file magic in " + path);
}

}  // namespace detail

// Dictionary cache: magic, D, L, P, row-major parameters, then row-major
// interleaved real/imaginary atoms. All 64-bit little-endian.
inline void write_dictionary(const std::string& path, const Dictionary& dict) {
  auto out = detail::open_out(path);
  detail::write_bytes(out, "GMRFDIC1", 8);
  detail::write_u64(out, static_cast<std::uint64_t>(dict.size()));
  detail::write_u64(out, static_cast<std::uint64_t>(dict.length()));
  detail::write_u64(out, 2);
  for (int d = 0; d < dict.size(); ++d)
    for (int p = 0; p < 2; ++p) {
      const double v = dict.params(d, p);
      detail::write_bytes(out, &v, sizeof v);
    }
  for (int d = 0; d < dict.size(); ++d)
    for (int l = 0; l < dict.length(); ++l) {
      const double re = dict.atoms(d, l).real();
      const double im = dict.atoms(d, l).imag();
      detail::write_bytes(out, &re, sizeof re);
      detail::write_bytes(out, &im, sizeof im);
    }
  if (!out) throw IoError("write failed: " + path);
}

inline Dictionary read_dictionary(const std::string& path) {
  auto in = detail::open_in(path);
  detail::expect_magic(in, "GMRFDIC1", path);
  const auto count = detail::read_u64(in);
  const auto length = detail::read_u64(in);
  const auto nparams = detail::read_u64(in);
  if (count < 1 || length < 1 || nparams != 2)
    throw IoError("bad dictionary header in " + path);
  Dictionary dict;
  dict.params.resize(count, 2);
  dict.atoms.resize(count, length);
  dict.atom_norms.resize(count);
  for (std::uint64_t d = 0; d < count; ++d)
    for (int p = 0; p < 2; ++p)
      detail::read_bytes(in, &dict.params(d, p), sizeof(double));
  for (std::uint64_t d = 0; d < count; ++d) {
    for (std::uint64_t l = 0; l < length; ++l) {
      double re, im;
      detail::read_bytes(in, &re, sizeof re);
      detail::read_bytes(in, &im, sizeof im);
      dict.atoms(d, l) = Complex(re, im);
    }
    dict.atom_norms[d] = dict.atoms.row(d).norm();
  }
  return dict;
}

// Measurement tensor: magic, Q, L, C, then interleaved complex entries in
// column order (coil-major, then frame), rows within a column contiguous.
inline void write_measurements(const std::string& path,
                               const Measurements& y) {
  auto out = detail::open_out(path);
  detail::write_bytes(out, "GMRFMEA1", 8);
  detail::write_u64(out, static_cast<std::uint64_t>(y.points));
  detail::write_u64(out, static_cast<std::uint64_t>(y.frames));
  detail::write_u64(out, static_cast<std::uint64_t>(y.coils));
  for (Eigen::Index j = 0; j < y.data.cols(); ++j)
    for (Eigen::Index i = 0; i < y.data.rows(); ++i) {
      const double re = y.data(i, j).real();
      const double im = y.data(i, j).imag();
      detail::write_bytes(out, &re, sizeof re);
      detail::write_bytes(out, &im, sizeof im);
    }
  if (!out) throw IoError("write failed: " + path);
}

inline Measurements read_measurements(const std::string& path) {
  auto in = detail::open_in(path);
  detail::expect_magic(in, "GMRFMEA1", path);
  Measurements y;
  y.points = static_cast<int>(detail::read_u64(in));
  y.frames = static_cast<int>(detail::read_u64(in));
  y.coils = static_cast<int>(detail::read_u64(in));
  if (y.points < 1 || y.frames < 1 || y.coils < 1)
    throw IoError("bad measurement header in " + path);
  y.data.resize(y.points, y.frames * y.coils);
  for (Eigen::Index j = 0; j < y.data.cols(); ++j)
    for (Eigen::Index i = 0; i < y.data.rows(); ++i) {
      double re, im;
      detail::read_bytes(in, &re, sizeof re);
      detail::read_bytes(in, &im, sizeof im);
      y.data(i, j) = Complex(re, im);
    }
  return y;
}

// Complex matrix container (magnetization dumps), same conventions.
inline void write_cmatrix(const std::string& path, const CMat& m) {
  auto out = detail::open_out(path);
  detail::write_bytes(out, "GMRFMAG1", 8);
  detail::write_u64(out, static_cast<std::uint64_t>(m.rows()));
  detail::write_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double re = m(i, j).real();
      const double im = m(i, j).imag();
      detail::write_bytes(out, &re, sizeof re);
      detail::write_bytes(out, &im, sizeof im);
    }
  if (!out) throw IoError("write failed: " + path);
}

inline CMat read_cmatrix(const std::string& path) {
  auto in = detail::open_in(path);
  detail::expect_magic(in, "GMRFMAG1", path);
  const auto rows = detail::read_u64(in);
  const auto cols = detail::read_u64(in);
  CMat m(rows, cols);
  for (std::uint64_t j = 0; j < cols; ++j)
    for (std::uint64_t i = 0; i < rows; ++i) {
      double re, im;
      detail::read_bytes(in, &re, sizeof re);
      detail::read_bytes(in, &im, sizeof im);
      m(i, j) = Complex(re, im);
    }
  return m;
}

// Fixed-format number rendering so CSV output is byte-stable.
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_csv(const std::string& path,
                      const std::vector<std::string>& header, const Mat& table) {
  auto out = detail::open_out(path);
  for (size_t i = 0; i < header.size(); ++i)
    out << header[i] << (i + 1 < header.size() ? "," : "\n");
  for (int r = 0; r < table.rows(); ++r)
    for (int c = 0; c < table.cols(); ++c)
      out << format_number(table(r, c)) << (c + 1 < table.cols() ? "," : "\n");
  if (!out) throw IoError("write failed: " + path);
}

// 8-bit binary PGM; values clipped to [0, max_value] and scaled to 255.
inline void write_pgm(const std::string& path, const Vec& values, int rows,
                      int cols, double max_value) {
  if (values.size() != static_cast<Eigen::Index>(rows) * cols)
    throw ConfigError("image size mismatch");
  auto out = detail::open_out(path);
  out << "P5\n" << cols << " " << rows << "\n255\n";
  for (int i = 0; i < values.size(); ++i) {
    const double scaled =
        max_value <= 0.0 ? 0.0 : std::clamp(values[i] / max_value, 0.0, 1.0);
    const unsigned char byte =
        static_cast<unsigned char>(std::lround(scaled * 255.0));
    out.put(static_cast<char>(byte));
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace gapmrf
