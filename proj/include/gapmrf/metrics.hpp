#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "gapmrf/phantom.hpp"
#include "gapmrf/types.hpp"

namespace gapmrf {

// 10 log10(sum u^2 / sum (u - u_est)^2); +inf on an exact match.
inline double tissue_snr(const Vec& u_true, const Vec& u_est) {
  const double signal = u_true.squaredNorm();
  const double error = (u_true - u_est).squaredNorm();
  if (error == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal / error);
}

// Same ratio over complex magnetization matrices.
inline double magnetization_snr(const CMat& m_true, const CMat& m_est) {
  const double signal = m_true.squaredNorm();
  const double error = (m_true - m_est).squaredNorm();
  if (error == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal / error);
}

namespace detail {

// Perfect matching between estimated atoms and the voxel's true tissues,
// every pair within the relative window on both parameters. Sizes are at
// most a handful, so backtracking is plenty.
inline bool match_atoms(const std::vector<std::pair<double, double>>& est,
                        const std::vector<const TissueParams*>& truth,
                        std::vector<bool>& used, size_t at, double tol) {
  if (at == est.size()) return true;
  for (size_t t = 0; t < truth.size(); ++t) {
    if (used[t]) continue;
    if (std::abs(est[at].first - truth[t]->t1) <= tol * truth[t]->t1 &&
        std::abs(est[at].second - truth[t]->t2) <= tol * truth[t]->t2) {
      used[t] = true;
      if (match_atoms(est, truth, used, at + 1, tol)) return true;
      used[t] = false;
    }
  }
  return false;
}

inline bool voxel_success(const GroundTruth& gt, int v,
                          const std::vector<std::pair<double, double>>& est,
                          double tol) {
  std::vector<const TissueParams*> truth;
  for (int t = 0; t < gt.mixing.cols(); ++t)
    if (gt.mixing(v, t) != 0.0) truth.push_back(&gt.tissues[t].params);
  if (est.size() != truth.size()) return false;
  std::vector<bool> used(truth.size(), false);
  return match_atoms(est, truth, used, 0, tol);
}

template <class VoxelAtomsFn>
std::pair<double, double> success_rate_impl(const GroundTruth& gt,
                                            VoxelAtomsFn&& atoms_of,
                                            double tol) {
  long pure_total = 0, pure_hits = 0, pv_total = 0, pv_hits = 0;
  for (int v = 0; v < gt.num_voxels(); ++v) {
    if (!gt.pure_mask[v] && !gt.pv_mask[v]) continue;
    const bool ok = voxel_success(gt, v, atoms_of(v), tol);
    if (gt.pure_mask[v]) {
      ++pure_total;
      pure_hits += ok;
    } else {
      ++pv_total;
      pv_hits += ok;
    }
  }
  const double sr_pure =
      pure_total == 0 ? 1.0 : static_cast<double>(pure_hits) / pure_total;
  const double sr_pv =
      pv_total == 0 ? 1.0 : static_cast<double>(pv_hits) / pv_total;
  return {sr_pure, sr_pv};
}

}  // namespace detail

// Success rates over pure and partial-volume voxels. Estimated densities
// below the floor are discarded; a voxel succeeds when the surviving atom
// count equals the true tissue count and the parameters match distinct
// true tissues within the relative window.
inline std::pair<double, double> success_rate(const GroundTruth& gt,
                                              const Mat& mixing,
                                              const Mat& params,
                                              double density_floor = 30.0,
                                              double tol = 0.15) {
  if (mixing.rows() != gt.num_voxels())
    throw ConfigError("mixing row count does not match the ground truth");
  return detail::success_rate_impl(
      gt,
      [&](int v) {
        std::vector<std::pair<double, double>> est;
        for (int j = 0; j < mixing.cols(); ++j)
          if (mixing(v, j) >= density_floor)
            est.emplace_back(params(j, 0), params(j, 1));
        return est;
      },
      tol);
}

// One-atom-per-voxel variant (BLIP-style reconstructions).
inline std::pair<double, double> success_rate_single(
    const GroundTruth& gt, const IVec& atom_index, const Vec& density,
    const Mat& dict_params, double density_floor = 30.0, double tol = 0.15) {
  if (atom_index.size() != gt.num_voxels())
    throw ConfigError("voxel count does not match the ground truth");
  return detail::success_rate_impl(
      gt,
      [&](int v) {
        std::vector<std::pair<double, double>> est;
        if (density[v] >= density_floor)
          est.emplace_back(dict_params(atom_index[v], 0),
                           dict_params(atom_index[v], 1));
        return est;
      },
      tol);
}

// Per-voxel parameters of the highest-density atom: N x 3 columns
// (density, t1, t2). Ties break toward the lowest column index; all-zero
// rows emit zeros.
inline Mat dominant_tissue_maps(const Mat& mixing, const Mat& params) {
  Mat maps = Mat::Zero(mixing.rows(), 3);
  for (int v = 0; v < mixing.rows(); ++v) {
    int best = -1;
    double best_density = 0.0;
    for (int j = 0; j < mixing.cols(); ++j)
      if (mixing(v, j) > best_density) {
        best_density = mixing(v, j);
        best = j;
      }
    if (best >= 0)
      maps.row(v) << best_density, params(best, 0), params(best, 1);
  }
  return maps;
}

inline Mat dominant_tissue_maps_single(const IVec& atom_index,
                                       const Vec& density,
                                       const Mat& dict_params) {
  Mat maps = Mat::Zero(atom_index.size(), 3);
  for (int v = 0; v < atom_index.size(); ++v)
    if (density[v] > 0.0)
      maps.row(v) << density[v], dict_params(atom_index[v], 0),
          dict_params(atom_index[v], 1);
  return maps;
}

// Quantitative summary of one reconstruction against the ground truth.
struct EvalReport {
  std::vector<double> per_tissue_snr_db;
  double residual_map_mass = 0.0;
  double magnetization_snr_db = 0.0;
  double sr_pure = 0.0;
  double sr_pv = 0.0;
  Mat dominant;  // N x 3
};

}  // namespace gapmrf
