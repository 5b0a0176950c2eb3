#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gapmrf/bloch.hpp"
#include "gapmrf/rng.hpp"
#include "gapmrf/types.hpp"

namespace gapmrf {

// One simulated tissue: relaxation times plus the proton-density range its
// voxels are drawn from.
struct TissueSpec {
  std::string name;
  TissueParams params;
  double density_min = 80.0;
  double density_max = 400.0;

  static TissueSpec make(std::string name, TissueParams params,
                         double density_min, double density_max) {
    if (density_min > density_max)
      throw ConfigError("density range must satisfy min <= max");
    if (density_min < 80.0 || density_max > 400.0)
      throw ConfigError("densities must lie within [80, 400]");
    return TissueSpec{std::move(name), params, density_min, density_max};
  }
};

// Known mixing matrix of a simulated volume plus the voxel classification
// masks derived from it.
struct GroundTruth {
  int rows = 0;
  int cols = 0;
  Mat mixing;  // N x T, non-negative
  std::vector<TissueSpec> tissues;
  std::vector<bool> pure_mask;  // exactly one nonzero
  std::vector<bool> pv_mask;    // two or more nonzeros

  int num_voxels() const { return rows * cols; }
};

inline std::vector<TissueSpec> default_tissues() {
  return {
      TissueSpec::make("adipose", TissueParams::make(530.0, 77.0), 80, 400),
      TissueSpec::make("white_matter", TissueParams::make(811.0, 77.0), 80, 400),
      TissueSpec::make("muscle", TissueParams::make(1425.0, 41.0), 80, 400),
      TissueSpec::make("gray_matter", TissueParams::make(1545.0, 83.0), 80, 400),
      TissueSpec::make("csf", TissueParams::make(5012.0, 512.0), 80, 400),
  };
}

namespace detail {

// Tissue label at a normalized position, or -1 for background. The
// five-tissue layout is concentric: an outer adipose ring, alternating
// GM/WM/GM bands with a muscle wedge cut through them, and a CSF core.
// Other tissue counts get equal-thickness nested annuli.
inline int phantom_label(double x, double y, int num_tissues) {
  const double e = std::sqrt((x / 0.95) * (x / 0.95) + (y / 0.90) * (y / 0.90));
  if (e > 1.0) return -1;
  if (num_tissues == 5) {
    if (e <= 0.30) return 4;  // csf
    if (e > 0.80) return 0;   // adipose
    const double angle = std::atan2(y, x);
    if (std::abs(angle) <= 35.0 * M_PI / 180.0) return 2;  // muscle wedge
    if (e <= 0.47) return 3;  // gray matter
    if (e <= 0.64) return 1;  // white matter
    return 3;                 // gray matter
  }
  const int zone = std::min(static_cast<int>(e * num_tissues),
                            num_tissues - 1);
  return num_tissues - 1 - zone;  // innermost zone = last tissue
}

}  // namespace detail

// Draws a high-resolution labelled phantom, averages proton densities over
// 2x2 blocks to create partial-volume voxels, and replicates the low
// resolution mixing back to the requested dims.
inline GroundTruth make_pv_phantom(int rows, int cols,
                                   const std::vector<TissueSpec>& tissues,
                                   std::uint64_t seed) {
  if (rows < 2 || cols < 2 || rows % 2 != 0 || cols % 2 != 0)
    throw ConfigError("phantom dims must be even and at least 2x2");
  if (tissues.empty()) throw ConfigError("phantom needs at least one tissue");
  const int num_tissues = static_cast<int>(tissues.size());
  const int n = rows * cols;

  // High-resolution labels and densities, drawn in a fixed raster order.
  Rng rng(seed);
  std::vector<int> labels(n, -1);
  std::vector<double> densities(n, 0.0);
  for (int r = 0; r < rows; ++r) {
    const double y = -1.0 + 2.0 * (r + 0.5) / rows;
    for (int c = 0; c < cols; ++c) {
      const double x = -1.0 + 2.0 * (c + 0.5) / cols;
      const int label = detail::phantom_label(x, y, num_tissues);
      labels[r * cols + c] = label;
      if (label >= 0)
        densities[r * cols + c] =
            rng.uniform(tissues[label].density_min, tissues[label].density_max);
    }
  }

  // 2x2 block averaging onto the low-resolution grid, then replication.
  GroundTruth gt;
  gt.rows = rows;
  gt.cols = cols;
  gt.tissues = tissues;
  gt.mixing = Mat::Zero(n, num_tissues);
  for (int br = 0; br < rows / 2; ++br) {
    for (int bc = 0; bc < cols / 2; ++bc) {
      Vec block = Vec::Zero(num_tissues);
      for (int dr = 0; dr < 2; ++dr)
        for (int dc = 0; dc < 2; ++dc) {
          const int idx = (2 * br + dr) * cols + (2 * bc + dc);
          if (labels[idx] >= 0) block[labels[idx]] += densities[idx] / 4.0;
        }
      for (int dr = 0; dr < 2; ++dr)
        for (int dc = 0; dc < 2; ++dc)
          gt.mixing.row((2 * br + dr) * cols + (2 * bc + dc)) =
              block.transpose();
    }
  }

  gt.pure_mask.assign(n, false);
  gt.pv_mask.assign(n, false);
  for (int v = 0; v < n; ++v) {
    const int nonzeros =
        static_cast<int>((gt.mixing.row(v).array() != 0.0).count());
    gt.pure_mask[v] = nonzeros == 1;
    gt.pv_mask[v] = nonzeros >= 2;
  }
  return gt;
}

// M = U * fingerprints(tissues).
inline CMat render_magnetization(const GroundTruth& gt,
                                 const AcquisitionParams& acq) {
  CMat atoms(gt.tissues.size(), acq.length());
  for (size_t t = 0; t < gt.tissues.size(); ++t)
    atoms.row(t) = simulate_fingerprint(gt.tissues[t].params, acq).transpose();
  return gt.mixing.cast<Complex>() * atoms;
}

}  // namespace gapmrf
