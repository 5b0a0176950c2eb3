#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gapmrf/forward_operator.hpp"
#include "gapmrf/greedy.hpp"
#include "gapmrf/phantom.hpp"
#include "gapmrf/types.hpp"

namespace gapmrf {

struct SolveControls {
  std::uint64_t seed = 0;
  int max_outer_iterations = 120;
  double stop_rel = 1e-4;   // |E_{i+1} - E_i| < stop_rel * E_{i+1}
  int phase_iterations = 0; // > 0 switches to the phase-compensated projection
};

// Called after each accepted outer iteration with the kept parameters and
// the unsquared data residual.
using TraceFn =
    std::function<void(int iteration, const Mat& reduced_params,
                       const Mat& mixing, double residual)>;

struct GapResult {
  CMat m;
  Mat reduced_params;
  CMat reduced_atoms;
  Mat mixing;
  CVec phases;
  std::vector<double> energy;  // E_i = ||h(M_i) - Y||^2, index 0 = initial
  int iterations = 0;
  AdaptiveState state;
};

namespace detail {

struct BacktrackStep {
  CMat m_bar;      // gradient step at the accepted mu
  double mu = 0.0; // accepted step size
};

// Runs the shared gradient/backtracking loop. project(m_bar) must return
// the projected magnetization; the loop halves mu until mu <= nu with
// nu = zeta ||dM||^2 / ||h(dM)||^2 (infinite when h annihilates dM).
template <class ProjectFn>
std::pair<CMat, double> backtracked_step(
    const Measurements& y, const SamplingScheme& scheme, const CMat& m,
    double zeta, ProjectFn&& project) {
  Measurements y_model = forward(m, scheme);
  Measurements residual = y_model;
  residual.data -= y.data;
  const CMat gradient = adjoint(residual, scheme);
  const double n_over_q = static_cast<double>(scheme.num_voxels()) /
                          scheme.points_per_frame();
  double mu = 2.0 * n_over_q;
  double nu = 0.0;
  CMat m_next;
  double energy_next = 0.0;
  while (mu > nu) {
    mu /= 2.0;
    const CMat m_bar = m - mu * gradient;
    m_next = project(m_bar);
    const Measurements y_next = forward(m_next, scheme);
    const double num = (m_next - m).squaredNorm();
    const double den = (y_next.data - y_model.data).squaredNorm();
    energy_next = (y_next.data - y.data).squaredNorm();
    if (den == 0.0) break;  // h annihilates the update: accept
    nu = zeta * num / den;
  }
  return {std::move(m_next), energy_next};
}

inline bool stop_rule(double e_prev, double e_next, double stop_rel) {
  const double delta = std::abs(e_next - e_prev);
  return delta == 0.0 || delta < stop_rel * e_next;
}

}  // namespace detail

// GAP-MRF outer iterations: projected gradient descent with backtracking,
// the projection being the greedy approximate one. Runs until
// |E_{i+1} - E_i| < stop_rel * E_{i+1} or the iteration cap.
inline GapResult gap_mrf_solve(const Measurements& y,
                               const SamplingScheme& scheme,
                               const Dictionary& initial_dict,
                               const GapConfig& cfg,
                               const AcquisitionParams& acq,
                               const ParameterBox& box,
                               const SolveControls& controls,
                               const CMat* m_init = nullptr,
                               const TraceFn& trace = nullptr) {
  const int n = scheme.num_voxels();
  const int frames = scheme.num_frames();
  GapResult result;
  result.m = m_init ? *m_init : CMat::Zero(n, frames);
  result.state = initial_state(initial_dict, n, cfg);
  result.energy.push_back(residual_energy(result.m, y, scheme));
  Rng rng(controls.seed);
  for (int i = 0; i < controls.max_outer_iterations; ++i) {
    ProjectionOutcome accepted;
    auto [m_next, energy_next] = detail::backtracked_step(
        y, scheme, result.m, cfg.backtrack_factor, [&](const CMat& m_bar) {
          accepted = greedy_approximate_projection(
              m_bar, result.state, cfg, acq, box, rng,
              controls.phase_iterations);
          if (accepted.empty)
            throw NumericalError("projection failed: " + accepted.diagnostic);
          return accepted.m_next;
        });
    result.m = std::move(m_next);
    result.state = accepted.next;
    result.reduced_params = accepted.reduced_params;
    result.reduced_atoms = accepted.reduced_atoms;
    result.mixing = accepted.mixing;
    result.phases = accepted.phases;
    result.energy.push_back(energy_next);
    result.iterations = i + 1;
    if (trace)
      trace(i, result.reduced_params, result.mixing, std::sqrt(energy_next));
    if (detail::stop_rule(result.energy[result.energy.size() - 2], energy_next,
                          controls.stop_rel))
      break;
  }
  return result;
}

struct BlipResult {
  CMat m;
  IVec atom_index;
  Vec density;
  std::vector<double> energy;
  int iterations = 0;
};

// BLIP baseline: the same backtracked outer loop, with the projection
// replaced by the per-voxel matched filter on a fixed dense dictionary.
inline BlipResult blip_solve(const Measurements& y,
                             const SamplingScheme& scheme,
                             const Dictionary& dict, double zeta,
                             int max_outer_iterations = 120,
                             double stop_rel = 1e-4) {
  const int n = scheme.num_voxels();
  const int frames = scheme.num_frames();
  BlipResult result;
  result.m = CMat::Zero(n, frames);
  result.energy.push_back(residual_energy(result.m, y, scheme));
  for (int i = 0; i < max_outer_iterations; ++i) {
    MatchResult match;
    auto [m_next, energy_next] = detail::backtracked_step(
        y, scheme, result.m, zeta, [&](const CMat& m_bar) {
          match = project_onto_bplus(m_bar, dict);
          CMat projected(n, frames);
          parallel_for(
              n,
              [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
                for (std::ptrdiff_t v = begin; v < end; ++v)
                  projected.row(v) =
                      match.density[v] * dict.atoms.row(match.atom_index[v]);
              },
              256);
          return projected;
        });
    result.m = std::move(m_next);
    result.atom_index = match.atom_index;
    result.density = match.density;
    result.energy.push_back(energy_next);
    result.iterations = i + 1;
    if (detail::stop_rule(result.energy[result.energy.size() - 2], energy_next,
                          stop_rel))
      break;
  }
  return result;
}

struct TuneTolerances {
  double residual_tol = 0.0;  // tau, absolute; 0 resolves to 1% of ||Y||
  int max_atoms_step = 10;    // tau_K
  double merge_radius_step = 0.02;  // tau_upsilon
  int min_pure_step = 10;     // tau_kappa
  int max_scan_steps = 20;
};

struct ScanPoint {
  double control = 0.0;
  double residual = 0.0;
};

struct TuneResult {
  int max_atoms_star = 0;
  double merge_radius_star = 0.0;
  int min_pure_star = 0;
  double residual_tol = 0.0;
  std::vector<ScanPoint> atoms_scan, radius_scan, pure_scan;
  GapResult final;
  Mat mixing;  // concluding non-negative fit on the final dictionary
};

namespace detail {

inline Mat vstack_params(const Mat& a, const Mat& b) {
  std::set<std::pair<long long, long long>> seen;
  auto key = [](double t1, double t2) {
    return std::make_pair(std::llround(t1 * 1e6), std::llround(t2 * 1e6));
  };
  std::vector<std::pair<double, double>> rows;
  for (int i = 0; i < a.rows(); ++i)
    if (seen.insert(key(a(i, 0), a(i, 1))).second)
      rows.emplace_back(a(i, 0), a(i, 1));
  for (int i = 0; i < b.rows(); ++i)
    if (seen.insert(key(b(i, 0), b(i, 1))).second)
      rows.emplace_back(b(i, 0), b(i, 1));
  Mat out(rows.size(), 2);
  for (size_t i = 0; i < rows.size(); ++i)
    out.row(i) << rows[i].first, rows[i].second;
  return out;
}

}  // namespace detail

// Automatic choice of the atom cap, the merge radius and the pure-voxel
// support: three sequential scans, each growing its control until the
// residual drop of a warm-started run falls to the tolerance, followed by
// a full run at the backed-off values and a concluding non-negative fit.
inline TuneResult auto_tune(const Measurements& y,
                            const SamplingScheme& scheme,
                            const Dictionary& base_dict,
                            const GapConfig& base_cfg,
                            const AcquisitionParams& acq,
                            const ParameterBox& box,
                            const TuneTolerances& tolerances,
                            std::uint64_t seed,
                            int max_outer_iterations = 120) {
  TuneResult tuned;
  tuned.residual_tol = tolerances.residual_tol > 0.0
                           ? tolerances.residual_tol
                           : 0.01 * y.data.norm();
  const double tau = tuned.residual_tol;
  const int n = scheme.num_voxels();
  const int frames = scheme.num_frames();

  CMat m = CMat::Zero(n, frames);
  Mat warm_params(0, 2);
  CMat warm_atoms(0, acq.length());
  double residual_prev = y.data.norm();
  std::uint64_t run_id = 0;

  auto run = [&](const GapConfig& cfg, const Mat& dict_params) {
    SolveControls controls;
    controls.seed = Rng::mix(seed, run_id++);
    controls.max_outer_iterations = max_outer_iterations;
    const Dictionary dict = build_dictionary(dict_params, acq);
    return gap_mrf_solve(y, scheme, dict, cfg, acq, box, controls, &m);
  };
  // One scan: grows *control by step while the residual drop of each run
  // exceeds tau; the failing run is discarded. Returns the last control
  // value tested (the one whose run was discarded).
  auto scan = [&](GapConfig cfg, auto&& set_control, double start, double step,
                  bool include_grid, std::vector<ScanPoint>& history) {
    double control = start;
    for (int pass = 0; pass < tolerances.max_scan_steps; ++pass) {
      control += step;
      set_control(cfg, control);
      const Mat dict_params = include_grid
                                  ? detail::vstack_params(base_dict.params,
                                                          warm_params)
                                  : warm_params;
      GapResult result = run(cfg, dict_params);
      const double residual = std::sqrt(result.energy.back());
      history.push_back({control, residual});
      if (residual_prev - residual > tau) {
        m = std::move(result.m);
        warm_params = result.reduced_params;
        warm_atoms = result.reduced_atoms;
        residual_prev = residual;
        continue;
      }
      return control;  // discarded run; previous state stays committed
    }
    throw NumericalError("tuning scan did not terminate within the step cap");
  };

  GapConfig cfg = base_cfg;
  // Atom-cap scan starts from a blank slate and re-seeds the base grid
  // alongside the surviving atoms each pass.
  cfg.purity_fraction = 0.0;
  cfg.merge_radius = 0.0;
  cfg.min_pure_voxels = 0;
  const double atoms_final = scan(
      cfg,
      [](GapConfig& c, double v) { c.max_atoms = static_cast<int>(v); }, 0.0,
      tolerances.max_atoms_step, true, tuned.atoms_scan);
  tuned.max_atoms_star = std::max(
      tolerances.max_atoms_step,
      static_cast<int>(atoms_final) - tolerances.max_atoms_step);

  cfg = base_cfg;
  cfg.max_atoms = tuned.max_atoms_star;
  cfg.min_pure_voxels = 0;
  const double radius_final = scan(
      cfg, [](GapConfig& c, double v) { c.merge_radius = v; },
      tolerances.merge_radius_step, tolerances.merge_radius_step, false,
      tuned.radius_scan);
  tuned.merge_radius_star =
      std::max(0.0, radius_final - 2.0 * tolerances.merge_radius_step);

  cfg = base_cfg;
  cfg.max_atoms = tuned.max_atoms_star;
  cfg.merge_radius = tuned.merge_radius_star;
  const double pure_final = scan(
      cfg,
      [](GapConfig& c, double v) { c.min_pure_voxels = static_cast<int>(v); },
      static_cast<double>(tolerances.min_pure_step), tolerances.min_pure_step,
      false, tuned.pure_scan);
  tuned.min_pure_star = std::max(
      0, static_cast<int>(pure_final) - 2 * tolerances.min_pure_step);

  cfg = base_cfg;
  cfg.max_atoms = tuned.max_atoms_star;
  cfg.merge_radius = tuned.merge_radius_star;
  cfg.min_pure_voxels = tuned.min_pure_star;
  tuned.final = run(cfg, warm_params);
  tuned.mixing = nnls_project_rows(tuned.final.m, tuned.final.reduced_atoms);
  return tuned;
}

// Sums mixing columns into per-tissue density maps using the relative
// parameter windows; columns matching no tissue land in a trailing
// residual map.
inline Mat tissue_consolidate(const Mat& mixing, const Mat& params,
                              const std::vector<TissueSpec>& tissues,
                              double tolerance = 0.15) {
  const int num_tissues = static_cast<int>(tissues.size());
  Mat maps = Mat::Zero(mixing.rows(), num_tissues + 1);
  for (int j = 0; j < params.rows(); ++j) {
    bool matched = false;
    for (int t = 0; t < num_tissues; ++t) {
      const auto& p = tissues[t].params;
      if (std::abs(params(j, 0) - p.t1) <= tolerance * p.t1 &&
          std::abs(params(j, 1) - p.t2) <= tolerance * p.t2) {
        maps.col(t) += mixing.col(j);
        matched = true;
      }
    }
    if (!matched) maps.col(num_tissues) += mixing.col(j);
  }
  return maps;
}

// Same consolidation for a one-atom-per-voxel reconstruction.
inline Mat consolidate_single_atom(const IVec& atom_index, const Vec& density,
                                   const Mat& dict_params,
                                   const std::vector<TissueSpec>& tissues,
                                   double tolerance = 0.15) {
  const int num_tissues = static_cast<int>(tissues.size());
  Mat maps = Mat::Zero(atom_index.size(), num_tissues + 1);
  for (int v = 0; v < atom_index.size(); ++v) {
    const double t1 = dict_params(atom_index[v], 0);
    const double t2 = dict_params(atom_index[v], 1);
    bool matched = false;
    for (int t = 0; t < num_tissues; ++t) {
      const auto& p = tissues[t].params;
      if (std::abs(t1 - p.t1) <= tolerance * p.t1 &&
          std::abs(t2 - p.t2) <= tolerance * p.t2) {
        maps(v, t) += density[v];
        matched = true;
      }
    }
    if (!matched) maps(v, num_tissues) += density[v];
  }
  return maps;
}

}  // namespace gapmrf
