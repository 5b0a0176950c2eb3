#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace gapmrf {

using Complex = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using IVec = Eigen::VectorXi;

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Relaxation times of one tissue, milliseconds.
struct TissueParams {
  double t1 = 0.0;
  double t2 = 0.0;

  static TissueParams make(double t1, double t2) {
    if (!std::isfinite(t1) || !std::isfinite(t2))
      throw ConfigError("tissue parameters must be finite");
    if (t1 <= 0.0 || t2 <= 0.0)
      throw ConfigError("relaxation times must be positive");
    if (t2 > t1) throw ConfigError("t2 must not exceed t1");
    return TissueParams{t1, t2};
  }
};

// Excitation schedule: per-pulse flip angles (degrees) and repetition
// times (ms), plus the inversion and echo timings shared by all pulses.
struct AcquisitionParams {
  Vec flip_angles_deg;
  Vec repetition_times_ms;
  double inversion_time_ms = 0.0;
  double echo_time_ms = 0.0;

  int length() const { return static_cast<int>(flip_angles_deg.size()); }

  static AcquisitionParams make(Vec flip_angles_deg, Vec repetition_times_ms,
                                double inversion_time_ms, double echo_time_ms) {
    if (flip_angles_deg.size() < 1)
      throw ConfigError("acquisition needs at least one excitation");
    if (repetition_times_ms.size() != flip_angles_deg.size())
      throw ConfigError("flip angle / repetition time length mismatch");
    if (!flip_angles_deg.allFinite() || !repetition_times_ms.allFinite() ||
        !std::isfinite(inversion_time_ms) || !std::isfinite(echo_time_ms))
      throw ConfigError("acquisition parameters must be finite");
    if (inversion_time_ms <= 0.0 || echo_time_ms <= 0.0)
      throw ConfigError("durations must be positive");
    if ((repetition_times_ms.array() <= 0.0).any())
      throw ConfigError("repetition times must be positive");
    if ((flip_angles_deg.array() < 0.0).any() ||
        (flip_angles_deg.array() > 180.0).any())
      throw ConfigError("flip angles must lie in [0, 180] degrees");
    if (echo_time_ms > repetition_times_ms.minCoeff())
      throw ConfigError("echo time must not exceed any repetition time");
    return AcquisitionParams{std::move(flip_angles_deg),
                             std::move(repetition_times_ms),
                             inversion_time_ms, echo_time_ms};
  }
};

// Fingerprint dictionary: one (t1, t2) row and one complex atom per entry.
struct Dictionary {
  Mat params;      // D x 2
  CMat atoms;      // D x L
  Vec atom_norms;  // D

  int size() const { return static_cast<int>(atoms.rows()); }
  int length() const { return static_cast<int>(atoms.cols()); }
};

// Feasible (t1, t2) region. Covers every Table-style tissue used in the
// simulations; dictionary grids and resampled atoms stay inside it.
struct ParameterBox {
  double t1_min = 100.0;
  double t1_max = 5100.0;
  double t2_min = 20.0;
  double t2_max = 600.0;

  bool contains(double t1, double t2) const {
    return t1 >= t1_min && t1 <= t1_max && t2 >= t2_min && t2 <= t2_max;
  }
  double clip_t1(double t1) const { return std::clamp(t1, t1_min, t1_max); }
  double clip_t2(double t2) const { return std::clamp(t2, t2_min, t2_max); }
};

// Scalar controls of the greedy projection and the outer solver.
struct GapConfig {
  int max_atoms = 10;            // K: cap on active dictionary elements
  double merge_radius = 0.05;    // upsilon: relative neighbourhood radius
  int min_pure_voxels = 20;      // kappa: pure-voxel support per kept atom
  double purity_fraction = 0.85; // gamma: dominance threshold for pure voxels
  double min_density = 8.0;      // xi: proton-density floor
  double residual_tol = 0.0;     // tau: tuning tolerance (resolved at run time)
  double covariance_decay = 0.9; // beta: per-iteration shrink of the sampler
  int samples_per_atom = 10;     // n_s
  double sample_var_t1 = 40.0;   // Sigma_11
  double sample_var_t2 = 10.0;   // Sigma_22
  double backtrack_factor = 0.99;  // zeta

  void validate() const {
    if (max_atoms < 1) throw ConfigError("max_atoms must be positive");
    if (merge_radius <= 0.0) throw ConfigError("merge_radius must be positive");
    if (min_pure_voxels < 1)
      throw ConfigError("min_pure_voxels must be positive");
    if (purity_fraction <= 0.0 || purity_fraction >= 1.0)
      throw ConfigError("purity_fraction must lie in (0,1)");
    if (min_density <= 0.0) throw ConfigError("min_density must be positive");
    if (covariance_decay <= 0.0 || covariance_decay >= 1.0)
      throw ConfigError("covariance_decay must lie in (0,1)");
    if (samples_per_atom < 0)
      throw ConfigError("samples_per_atom must be non-negative");
    if (sample_var_t1 <= 0.0 || sample_var_t2 <= 0.0)
      throw ConfigError("sample variances must be positive");
    if (backtrack_factor <= 0.0 || backtrack_factor >= 1.0)
      throw ConfigError("backtrack_factor must lie in (0,1)");
  }
};

}  // namespace gapmrf
