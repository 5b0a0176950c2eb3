#pragma once

#include <bit>
#include <cmath>
#include <unordered_set>
#include <vector>

#include "gapmrf/parallel.hpp"
#include "gapmrf/rng.hpp"
#include "gapmrf/types.hpp"

namespace gapmrf {

inline double deg_to_rad(double deg) { return deg * M_PI / 180.0; }

// Transverse response of an inversion-recovery balanced-SSFP Bloch
// recursion with alternating excitation phase: the transverse component
// survives each repetition (decayed by t2) and the rotation mixes it back
// into the longitudinal axis, which is what makes t2 identifiable from the
// signal shape. The sample is the transverse magnetization at the echo
// time, demodulated by the excitation phase. On resonance the state stays
// in the y-z plane, so values are real; they are returned in the complex
// fingerprint type used throughout.
inline CVec simulate_fingerprint(const TissueParams& tissue,
                                 const AcquisitionParams& acq) {
  if (!std::isfinite(tissue.t1) || !std::isfinite(tissue.t2) ||
      tissue.t1 <= 0.0 || tissue.t2 <= 0.0)
    throw ConfigError("tissue parameters must be finite and positive");
  const int length = acq.length();
  CVec fingerprint(length);
  const double te_decay = std::exp(-acq.echo_time_ms / tissue.t2);
  // Inversion, then recovery over the inversion time (no transverse yet).
  double my = 0.0;
  double mz = 1.0 - 2.0 * std::exp(-acq.inversion_time_ms / tissue.t1);
  for (int l = 0; l < length; ++l) {
    if (l > 0) {
      const double tr = acq.repetition_times_ms[l - 1];
      my *= std::exp(-tr / tissue.t2);
      mz = 1.0 + (mz - 1.0) * std::exp(-tr / tissue.t1);
    }
    const double sign = l % 2 == 0 ? 1.0 : -1.0;
    const double alpha = sign * deg_to_rad(acq.flip_angles_deg[l]);
    const double my_next = my * std::cos(alpha) + mz * std::sin(alpha);
    mz = mz * std::cos(alpha) - my * std::sin(alpha);
    my = my_next;
    fingerprint[l] = Complex(sign * my * te_decay, 0.0);
  }
  return fingerprint;
}

// Builds a dictionary from raw (t1, t2) rows. Grid rows are only required
// to be positive and finite; the physical t2 <= t1 constraint applies to
// tissue specs, not to grid atoms.
inline Dictionary build_dictionary(const Mat& params,
                                   const AcquisitionParams& acq) {
  if (params.rows() < 1 || params.cols() != 2)
    throw ConfigError("dictionary parameters must be a non-empty Dx2 matrix");
  const int count = static_cast<int>(params.rows());
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(2 * count);
  for (int d = 0; d < count; ++d) {
    if (!std::isfinite(params(d, 0)) || !std::isfinite(params(d, 1)) ||
        params(d, 0) <= 0.0 || params(d, 1) <= 0.0)
      throw ConfigError("dictionary parameters must be finite and positive");
    const auto key = Rng::mix(std::bit_cast<std::uint64_t>(params(d, 0)),
                              std::bit_cast<std::uint64_t>(params(d, 1)));
    if (!seen.insert(key).second) {
      for (int e = 0; e < d; ++e)  // hash collision or true duplicate
        if (params(d, 0) == params(e, 0) && params(d, 1) == params(e, 1))
          throw ConfigError("duplicate dictionary parameters");
    }
  }
  Dictionary dict;
  dict.params = params;
  dict.atoms.resize(count, acq.length());
  dict.atom_norms.resize(count);
  parallel_for(
      count,
      [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
        for (std::ptrdiff_t d = begin; d < end; ++d) {
          dict.atoms.row(d) = simulate_fingerprint(
              TissueParams{params(d, 0), params(d, 1)}, acq).transpose();
          dict.atom_norms[d] = dict.atoms.row(d).norm();
        }
      },
      16);
  if ((dict.atom_norms.array() <= 0.0).any())
    throw NumericalError("degenerate acquisition schedule: zero-norm atom");
  return dict;
}

inline Dictionary build_dictionary(const std::vector<TissueParams>& tissues,
                                   const AcquisitionParams& acq) {
  Mat params(tissues.size(), 2);
  for (size_t d = 0; d < tissues.size(); ++d)
    params.row(d) << tissues[d].t1, tissues[d].t2;
  return build_dictionary(params, acq);
}

// All t1 x t2 combinations, equally spaced over the feasible box.
inline Mat parameter_grid(int n_t1, int n_t2, const ParameterBox& box = {}) {
  if (n_t1 < 1 || n_t2 < 1) throw ConfigError("grid sizes must be positive");
  Mat params(n_t1 * n_t2, 2);
  for (int i = 0; i < n_t1; ++i) {
    const double t1 =
        n_t1 == 1 ? box.t1_min
                  : box.t1_min + (box.t1_max - box.t1_min) * i / (n_t1 - 1);
    for (int j = 0; j < n_t2; ++j) {
      const double t2 =
          n_t2 == 1 ? box.t2_min
                    : box.t2_min + (box.t2_max - box.t2_min) * j / (n_t2 - 1);
      params.row(i * n_t2 + j) << t1, t2;
    }
  }
  return params;
}

// Dense baseline grid: log-spaced in t1, linear in t2.
inline Mat dense_parameter_grid(int n_t1, int n_t2,
                                const ParameterBox& box = {}) {
  if (n_t1 < 1 || n_t2 < 1) throw ConfigError("grid sizes must be positive");
  Mat params(n_t1 * n_t2, 2);
  const double log_lo = std::log(box.t1_min);
  const double log_hi = std::log(box.t1_max);
  for (int i = 0; i < n_t1; ++i) {
    const double t1 =
        n_t1 == 1 ? box.t1_min
                  : std::exp(log_lo + (log_hi - log_lo) * i / (n_t1 - 1));
    for (int j = 0; j < n_t2; ++j) {
      const double t2 =
          n_t2 == 1 ? box.t2_min
                    : box.t2_min + (box.t2_max - box.t2_min) * j / (n_t2 - 1);
      params.row(i * n_t2 + j) << t1, t2;
    }
  }
  return params;
}

// Random flip angles uniform on [10, 70] degrees with fixed TR = 10 ms,
// TI = 18 ms, TE = 2 ms.
inline AcquisitionParams random_flip_angle_schedule(int length,
                                                    std::uint64_t seed) {
  if (length < 1) throw ConfigError("sequence length must be positive");
  Rng rng(seed);
  Vec angles(length);
  for (int l = 0; l < length; ++l) angles[l] = rng.uniform(10.0, 70.0);
  return AcquisitionParams::make(std::move(angles),
                                 Vec::Constant(length, 10.0), 18.0, 2.0);
}

}  // namespace gapmrf
