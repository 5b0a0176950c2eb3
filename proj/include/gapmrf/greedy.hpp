#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gapmrf/bloch.hpp"
#include "gapmrf/kmeans.hpp"
#include "gapmrf/nnls.hpp"
#include "gapmrf/parallel.hpp"
#include "gapmrf/rng.hpp"
#include "gapmrf/types.hpp"

namespace gapmrf {

// Per-voxel best single-atom fit.
struct MatchResult {
  IVec atom_index;  // d-hat
  Vec density;      // rho-hat, clamped at zero
  Mat params;       // matched (t1, t2) rows
};

// Matched filter: for each row of mrows picks the atom maximizing the
// normalized real correlation, with the non-negative scale that goes with
// it. Ties break toward the lowest atom index.
inline MatchResult project_onto_bplus(const CMat& mrows,
                                      const Dictionary& dict) {
  const int n = static_cast<int>(mrows.rows());
  MatchResult match;
  match.atom_index.resize(n);
  match.density.resize(n);
  match.params.resize(n, 2);
  if (n == 0) return match;
  if (mrows.cols() != dict.atoms.cols())
    throw ConfigError("magnetization length does not match the dictionary");
  const Vec inv_norm = dict.atom_norms.cwiseInverse();
  parallel_for(
      n,
      [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
        const Mat corr =
            (mrows.middleRows(begin, end - begin) * dict.atoms.adjoint())
                .real();
        for (std::ptrdiff_t v = begin; v < end; ++v) {
          const auto row = corr.row(v - begin);
          int best = 0;
          double best_score = row[0] * inv_norm[0];
          for (int d = 1; d < dict.size(); ++d) {
            const double score = row[d] * inv_norm[d];
            if (score > best_score) {
              best_score = score;
              best = d;
            }
          }
          match.atom_index[v] = best;
          match.density[v] =
              std::max(row[best] * inv_norm[best] * inv_norm[best], 0.0);
          match.params.row(v) = dict.params.row(best);
        }
      },
      256);
  return match;
}

// Count-weighted suppression of neighbouring parameter estimates. The
// remaining center with the largest count absorbs the counts of its
// neighbours (relative distance below merge_radius in every coordinate);
// the merged count must reach min_pure for the center to survive.
inline Mat non_maximum_suppression(const Mat& centers, const IVec& counts,
                                   double merge_radius, int min_pure) {
  if (centers.rows() != counts.size())
    throw ConfigError("centers and counts are misaligned");
  const int k = static_cast<int>(centers.rows());
  std::vector<long long> remaining(k);
  for (int c = 0; c < k; ++c) remaining[c] = counts[c];
  std::vector<int> kept;
  for (;;) {
    int pick = -1;
    long long best = 0;
    for (int c = 0; c < k; ++c)
      if (remaining[c] > best) {
        best = remaining[c];
        pick = c;
      }
    if (pick < 0) break;
    long long merged = remaining[pick];
    std::vector<int> neighbours;
    for (int c = 0; c < k; ++c) {
      if (c == pick || remaining[c] <= 0) continue;
      bool close = true;
      for (int p = 0; p < centers.cols(); ++p)
        if (std::abs(centers(c, p) - centers(pick, p)) >=
            merge_radius * centers(pick, p)) {
          close = false;
          break;
        }
      if (close) {
        merged += remaining[c];
        neighbours.push_back(c);
      }
    }
    if (merged >= min_pure) kept.push_back(pick);
    remaining[pick] = 0;
    for (int c : neighbours) remaining[c] = 0;
  }
  // Exact duplicates cannot both survive a positive merge radius, but a
  // degenerate radius of zero (used by the tuning scans) could let them
  // through; drop repeats defensively.
  Mat result(kept.size(), centers.cols());
  int out = 0;
  for (size_t i = 0; i < kept.size(); ++i) {
    bool dup = false;
    for (int j = 0; j < out; ++j)
      if ((result.row(j).array() == centers.row(kept[i]).array()).all())
        dup = true;
    if (!dup) result.row(out++) = centers.row(kept[i]);
  }
  return result.topRows(out);
}

// V = { n : ||U_n||_1 > min_density and max(U_n) >= purity * ||U_n||_1 }.
inline std::vector<int> update_pure_voxel_set(const Mat& mixing,
                                              double min_density,
                                              double purity_fraction) {
  std::vector<int> pure;
  for (int v = 0; v < mixing.rows(); ++v) {
    const double total = mixing.row(v).sum();  // entries are non-negative
    if (total > min_density &&
        mixing.row(v).maxCoeff() >= purity_fraction * total)
      pure.push_back(v);
  }
  return pure;
}

struct ResampleResult {
  Mat params;  // kept atoms plus surviving samples
  double var_t1 = 0.0;
  double var_t2 = 0.0;
};

// Draws samples_per_atom Gaussian candidates around each kept atom,
// clipped to the feasible box and de-duplicated at 1e-6 ms resolution.
// The sampling variances shrink by the decay factor.
inline ResampleResult resample_parameters(const Mat& kept, double var_t1,
                                          double var_t2, int samples_per_atom,
                                          double decay,
                                          const ParameterBox& box, Rng& rng) {
  const double sd_t1 = std::sqrt(var_t1);
  const double sd_t2 = std::sqrt(var_t2);
  std::set<std::pair<long long, long long>> seen;
  auto key = [](double t1, double t2) {
    return std::make_pair(std::llround(t1 * 1e6), std::llround(t2 * 1e6));
  };
  std::vector<std::pair<double, double>> rows;
  for (int a = 0; a < kept.rows(); ++a)
    if (seen.insert(key(kept(a, 0), kept(a, 1))).second)
      rows.emplace_back(kept(a, 0), kept(a, 1));
  for (int a = 0; a < kept.rows(); ++a) {
    for (int s = 0; s < samples_per_atom; ++s) {
      const double t1 = box.clip_t1(kept(a, 0) + sd_t1 * rng.normal());
      const double t2 = box.clip_t2(kept(a, 1) + sd_t2 * rng.normal());
      if (seen.insert(key(t1, t2)).second) rows.emplace_back(t1, t2);
    }
  }
  ResampleResult result;
  result.params.resize(rows.size(), 2);
  for (size_t i = 0; i < rows.size(); ++i)
    result.params.row(i) << rows[i].first, rows[i].second;
  result.var_t1 = decay * var_t1;
  result.var_t2 = decay * var_t2;
  return result;
}

// Phase-compensated non-negative projection: alternates row-wise NNLS on
// the de-rotated data with the closed-form unit-modulus phase update. The
// objective 1/2||Diag(phase) U delta - mbar||^2 never increases.
struct PhaseProjection {
  CVec phases;    // unit modulus per voxel
  Mat mixing;
  std::vector<double> objective;  // after every half-step
};

inline PhaseProjection phase_compensated_projection(const CMat& mbar,
                                                    const CMat& delta,
                                                    int iterations) {
  const int n = static_cast<int>(mbar.rows());
  PhaseProjection result;
  result.phases = CVec::Ones(n);
  result.mixing = Mat::Zero(n, delta.rows());
  auto objective = [&]() {
    const CMat model = result.mixing.cast<Complex>() * delta;
    double value = 0.0;
    for (int v = 0; v < n; ++v)
      value += (result.phases[v] * model.row(v) - mbar.row(v)).squaredNorm();
    return 0.5 * value;
  };
  for (int it = 0; it < iterations; ++it) {
    CMat rotated(n, mbar.cols());
    for (int v = 0; v < n; ++v)
      rotated.row(v) = std::conj(result.phases[v]) * mbar.row(v);
    result.mixing = nnls_project_rows(rotated, delta);
    result.objective.push_back(objective());
    const CMat model = result.mixing.cast<Complex>() * delta;
    for (int v = 0; v < n; ++v) {
      const Complex z = mbar.row(v).cwiseProduct(model.row(v).conjugate()).sum();
      result.phases[v] = std::abs(z) == 0.0 ? Complex(1.0, 0.0) : z / std::abs(z);
    }
    result.objective.push_back(objective());
  }
  return result;
}

// Adaptive state threaded through the projections: the refining dictionary,
// the current pure-voxel estimate and the sampler covariance.
struct AdaptiveState {
  Dictionary dict;
  std::vector<int> pure_voxels;
  double var_t1 = 40.0;
  double var_t2 = 10.0;
};

inline AdaptiveState initial_state(Dictionary dict, int num_voxels,
                                   const GapConfig& cfg) {
  AdaptiveState state;
  state.dict = std::move(dict);
  state.pure_voxels.resize(num_voxels);
  for (int v = 0; v < num_voxels; ++v) state.pure_voxels[v] = v;
  state.var_t1 = cfg.sample_var_t1;
  state.var_t2 = cfg.sample_var_t2;
  return state;
}

struct ProjectionOutcome {
  CMat m_next;
  Mat reduced_params;   // kept atoms (theta-tilde)
  CMat reduced_atoms;   // their fingerprints (delta-tilde)
  Mat mixing;           // N x T-bar
  CVec phases;          // empty unless phase compensation ran
  AdaptiveState next;
  bool empty = false;   // suppression kept nothing
  std::string diagnostic;
};

// One greedy approximate projection: matched filter on the pure-voxel
// estimate, clustering of the qualifying parameters, neighbour
// suppression, row-wise NNLS on the reduced dictionary, pure-voxel set
// update and parameter resampling.
inline ProjectionOutcome greedy_approximate_projection(
    const CMat& mbar, const AdaptiveState& state, const GapConfig& cfg,
    const AcquisitionParams& acq, const ParameterBox& box, Rng& rng,
    int phase_iterations = 0) {
  const int n = static_cast<int>(mbar.rows());
  CMat pure_rows(state.pure_voxels.size(), mbar.cols());
  for (size_t i = 0; i < state.pure_voxels.size(); ++i)
    pure_rows.row(i) = mbar.row(state.pure_voxels[i]);
  const MatchResult match = project_onto_bplus(pure_rows, state.dict);

  std::vector<int> qualifying;
  for (int i = 0; i < match.density.size(); ++i)
    if (match.density[i] > cfg.min_density) qualifying.push_back(i);
  if (qualifying.empty())
    throw NumericalError(
        "greedy projection: no voxel clears the density floor");
  Mat points(qualifying.size(), 2);
  for (size_t i = 0; i < qualifying.size(); ++i)
    points.row(i) = match.params.row(qualifying[i]);

  const KMeansResult clusters = kmeans(points, cfg.max_atoms, rng);
  const Mat kept = non_maximum_suppression(clusters.centers, clusters.counts,
                                           cfg.merge_radius,
                                           cfg.min_pure_voxels);
  ProjectionOutcome outcome;
  outcome.next = state;
  if (kept.rows() == 0) {
    outcome.empty = true;
    outcome.diagnostic = "suppression kept no atoms";
    outcome.m_next = CMat::Zero(n, mbar.cols());
    outcome.mixing = Mat::Zero(n, 0);
    return outcome;
  }

  const Dictionary reduced = build_dictionary(kept, acq);
  outcome.reduced_params = reduced.params;
  outcome.reduced_atoms = reduced.atoms;
  if (phase_iterations > 0) {
    PhaseProjection phase =
        phase_compensated_projection(mbar, reduced.atoms, phase_iterations);
    outcome.mixing = std::move(phase.mixing);
    outcome.phases = std::move(phase.phases);
    outcome.m_next = outcome.phases.asDiagonal() *
                     (outcome.mixing.cast<Complex>() * reduced.atoms);
  } else {
    outcome.mixing = nnls_project_rows(mbar, reduced.atoms);
    outcome.m_next = outcome.mixing.cast<Complex>() * reduced.atoms;
  }

  outcome.next.pure_voxels = update_pure_voxel_set(
      outcome.mixing, cfg.min_density, cfg.purity_fraction);
  ResampleResult resampled = resample_parameters(
      kept, state.var_t1, state.var_t2, cfg.samples_per_atom,
      cfg.covariance_decay, box, rng);
  outcome.next.dict = build_dictionary(resampled.params, acq);
  outcome.next.var_t1 = resampled.var_t1;
  outcome.next.var_t2 = resampled.var_t2;
  return outcome;
}

}  // namespace gapmrf
