#pragma once

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "gapmrf/parallel.hpp"
#include "gapmrf/rng.hpp"
#include "gapmrf/types.hpp"

namespace gapmrf {

// Per-frame k-space selection plus coil sensitivities. Images are stored
// as N-vectors with row-major linearization (index = r * cols + c); each
// frame mask lists the Q selected k-space indices in that linearization.
struct SamplingScheme {
  int rows = 0;
  int cols = 0;
  std::vector<IVec> frame_masks;  // L entries, each Q indices, sorted
  CMat coil_maps;                 // N x C

  int num_voxels() const { return rows * cols; }
  int num_frames() const { return static_cast<int>(frame_masks.size()); }
  int num_coils() const { return static_cast<int>(coil_maps.cols()); }
  int points_per_frame() const {
    return frame_masks.empty() ? 0 : static_cast<int>(frame_masks[0].size());
  }
};

// Undersampled k-space data, Q x L x C, flattened as columns (l, c) at
// column index c * L + l.
struct Measurements {
  int points = 0;  // Q
  int frames = 0;  // L
  int coils = 0;   // C
  CMat data;       // Q x (L*C)

  CMat::ColXpr column(int l, int c) { return data.col(c * frames + l); }
  CMat::ConstColXpr column(int l, int c) const {
    return data.col(c * frames + l);
  }
  double norm() const { return data.norm(); }
};

// EPI-style scheme: every frame keeps rows/R full k-space rows, the kept
// residue class rotating by one row per frame from a seeded offset, so any
// R consecutive frames jointly cover all rows.
inline SamplingScheme make_epi_scheme(int rows, int cols, int undersampling,
                                      int frames, std::uint64_t seed) {
  if (rows < 1 || cols < 1 || frames < 1)
    throw ConfigError("scheme dimensions must be positive");
  if (undersampling < 1) throw ConfigError("undersampling must be >= 1");
  if (undersampling > rows)
    throw ConfigError("undersampling exceeds the number of k-space rows");
  if (rows % undersampling != 0)
    throw ConfigError("k-space rows must be divisible by the undersampling");
  SamplingScheme scheme;
  scheme.rows = rows;
  scheme.cols = cols;
  Rng rng(seed);
  const int offset =
      static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(undersampling)));
  const int rows_per_frame = rows / undersampling;
  scheme.frame_masks.reserve(frames);
  for (int l = 0; l < frames; ++l) {
    const int residue = (l + offset) % undersampling;
    IVec mask(rows_per_frame * cols);
    int at = 0;
    for (int r = residue; r < rows; r += undersampling)
      for (int c = 0; c < cols; ++c) mask[at++] = r * cols + c;
    scheme.frame_masks.push_back(std::move(mask));
  }
  scheme.coil_maps = CMat::Ones(rows * cols, 1);
  return scheme;
}

namespace detail {

// Unitary 2-D DFT of an N-vector viewed as a rows x cols image in
// row-major order. inverse = true applies the (conjugate) inverse.
inline void fft2_unitary(CVec& image, int rows, int cols, bool inverse) {
  thread_local Eigen::FFT<double> fft;
  CVec line(cols), out(cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) line[c] = image[r * cols + c];
    if (inverse)
      fft.inv(out, line);
    else
      fft.fwd(out, line);
    for (int c = 0; c < cols; ++c) image[r * cols + c] = out[c];
  }
  CVec col(rows), cout(rows);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) col[r] = image[r * cols + c];
    if (inverse)
      fft.inv(cout, col);
    else
      fft.fwd(cout, col);
    for (int r = 0; r < rows; ++r) image[r * cols + c] = cout[r];
  }
  // Eigen's fwd is unnormalized and inv carries 1/n per pass; rescale both
  // directions to the unitary convention.
  const double n = static_cast<double>(rows) * cols;
  image *= inverse ? std::sqrt(n) : 1.0 / std::sqrt(n);
}

}  // namespace detail

// y_{l,c} = mask_l( F (s_c .* m_l) ) with F the unitary 2-D DFT.
inline Measurements forward(const CMat& m, const SamplingScheme& scheme) {
  const int n = scheme.num_voxels();
  const int frames = scheme.num_frames();
  const int coils = scheme.num_coils();
  if (m.rows() != n || m.cols() != frames)
    throw ConfigError("magnetization dimensions do not match the scheme");
  Measurements y;
  y.points = scheme.points_per_frame();
  y.frames = frames;
  y.coils = coils;
  y.data.resize(y.points, frames * coils);
  parallel_for(frames, [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
    for (std::ptrdiff_t l = begin; l < end; ++l) {
      const IVec& mask = scheme.frame_masks[l];
      for (int c = 0; c < coils; ++c) {
        CVec image = scheme.coil_maps.col(c).cwiseProduct(m.col(l));
        detail::fft2_unitary(image, scheme.rows, scheme.cols, false);
        auto out = y.column(static_cast<int>(l), c);
        for (int q = 0; q < y.points; ++q) out[q] = image[mask[q]];
      }
    }
  });
  return y;
}

// Exact adjoint: zero-fill, inverse unitary DFT, conjugate coil weighting,
// sum over coils.
inline CMat adjoint(const Measurements& y, const SamplingScheme& scheme) {
  const int n = scheme.num_voxels();
  const int frames = scheme.num_frames();
  const int coils = scheme.num_coils();
  if (y.frames != frames || y.coils != coils ||
      y.points != scheme.points_per_frame())
    throw ConfigError("measurement dimensions do not match the scheme");
  CMat m(n, frames);
  parallel_for(frames, [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
    for (std::ptrdiff_t l = begin; l < end; ++l) {
      const IVec& mask = scheme.frame_masks[l];
      CVec accum = CVec::Zero(n);
      for (int c = 0; c < coils; ++c) {
        CVec kspace = CVec::Zero(n);
        const auto in = y.column(static_cast<int>(l), c);
        for (int q = 0; q < y.points; ++q) kspace[mask[q]] = in[q];
        detail::fft2_unitary(kspace, scheme.rows, scheme.cols, true);
        accum += scheme.coil_maps.col(c).conjugate().cwiseProduct(kspace);
      }
      m.col(l) = accum;
    }
  });
  return m;
}

// Adds circular complex Gaussian noise scaled so that
// isnr = 20 log10(||y|| / (sqrt(QLC) sigma)). Returns (noisy, sigma).
inline std::pair<Measurements, double> add_noise(const Measurements& y,
                                                 double isnr_db,
                                                 std::uint64_t seed) {
  if (!y.data.allFinite()) throw NumericalError("measurements must be finite");
  Measurements noisy = y;
  if (std::isinf(isnr_db) && isnr_db > 0) return {std::move(noisy), 0.0};
  const double total = static_cast<double>(y.points) * y.frames * y.coils;
  const double sigma =
      y.data.norm() / (std::sqrt(total) * std::pow(10.0, isnr_db / 20.0));
  const double component = sigma / std::sqrt(2.0);
  Rng rng(seed);
  for (Eigen::Index j = 0; j < noisy.data.cols(); ++j)
    for (Eigen::Index i = 0; i < noisy.data.rows(); ++i)
      noisy.data(i, j) +=
          Complex(component * rng.normal(), component * rng.normal());
  return {std::move(noisy), sigma};
}

// Residual energy ||h(m) - y||_2^2 of a candidate magnetization.
inline double residual_energy(const CMat& m, const Measurements& y,
                              const SamplingScheme& scheme) {
  return (forward(m, scheme).data - y.data).squaredNorm();
}

}  // namespace gapmrf
