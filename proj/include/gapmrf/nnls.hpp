#pragma once

#include <Eigen/Cholesky>
#include <cmath>
#include <vector>

#include "gapmrf/parallel.hpp"
#include "gapmrf/types.hpp"

namespace gapmrf {

// Non-negative least squares, Lawson-Hanson active-set iteration posed on
// the normal equations: minimize 1/2 u'Gu - rhs'u over u >= 0, where
// G = A'A and rhs = A'b for the stacked real system. Returns u satisfying
// the KKT conditions: u >= 0, gradient >= 0 off-support, ~0 on-support.
inline Vec nnls_normal(const Mat& gram, const Vec& rhs, int max_iterations) {
  const int n = static_cast<int>(gram.rows());
  const double scale = 1.0 + rhs.cwiseAbs().maxCoeff();
  const double enter_tol = 1e-11 * scale;
  Vec u = Vec::Zero(n);
  std::vector<int> support;
  std::vector<bool> active(n, false);
  Vec gradient = -rhs;  // G u - rhs at u = 0

  auto solve_on_support = [&](Vec& z) {
    const int k = static_cast<int>(support.size());
    Mat gram_s(k, k);
    Vec rhs_s(k);
    for (int i = 0; i < k; ++i) {
      rhs_s[i] = rhs[support[i]];
      for (int j = 0; j < k; ++j) gram_s(i, j) = gram(support[i], support[j]);
    }
    z = gram_s.ldlt().solve(rhs_s);
    return z.allFinite();
  };

  for (int iteration = 0; iteration < max_iterations; ++iteration) {
    // Most negative gradient among inactive coordinates.
    int entering = -1;
    double best = -enter_tol;
    for (int j = 0; j < n; ++j)
      if (!active[j] && gradient[j] < best) {
        best = gradient[j];
        entering = j;
      }
    if (entering < 0) return u;  // KKT satisfied
    support.push_back(entering);
    active[entering] = true;

    bool first_pass = true;
    for (;;) {
      Vec z;
      const bool solved = solve_on_support(z);
      if (!solved || (first_pass && z[support.size() - 1] <= 0.0)) {
        // Numerical degeneracy (near-duplicate atom): freeze the entering
        // coordinate at zero instead of cycling on it.
        support.pop_back();
        break;
      }
      first_pass = false;
      bool feasible = true;
      for (size_t i = 0; i < support.size(); ++i)
        if (z[i] <= 0.0) feasible = false;
      if (feasible) {
        Vec next = Vec::Zero(n);
        for (size_t i = 0; i < support.size(); ++i) next[support[i]] = z[i];
        u = next;
        break;
      }
      // Step toward z until the first coordinate hits zero, then drop all
      // zeroed coordinates from the support.
      double alpha = 1.0;
      for (size_t i = 0; i < support.size(); ++i) {
        if (z[i] <= 0.0) {
          const double ui = u[support[i]];
          const double denom = ui - z[i];
          if (denom > 0.0) alpha = std::min(alpha, ui / denom);
        }
      }
      Vec next = Vec::Zero(n);
      for (size_t i = 0; i < support.size(); ++i) {
        const int j = support[i];
        next[j] = u[j] + alpha * (z[i] - u[j]);
      }
      u = next;
      std::vector<int> kept;
      for (int j : support) {
        if (u[j] > 0.0 && !(std::abs(u[j]) < 1e-14 * scale)) {
          kept.push_back(j);
        } else {
          u[j] = 0.0;
          active[j] = false;
        }
      }
      support = std::move(kept);
      if (support.empty()) break;
    }
    gradient = gram * u - rhs;
  }
  throw NumericalError("nnls did not converge within the iteration cap");
}

// Row-wise non-negative projection onto the span of a reduced dictionary:
// for each voxel n, minimize 1/2 ||u delta - mbar_n||_2^2 over u >= 0,
// treating the complex system as stacked real/imaginary parts. Rows are
// independent and solved in parallel.
inline Mat nnls_project_rows(const CMat& mbar, const CMat& delta) {
  if (delta.rows() < 1) throw ConfigError("reduced dictionary is empty");
  if (delta.cols() != mbar.cols())
    throw ConfigError("dictionary and magnetization lengths differ");
  const int n = static_cast<int>(mbar.rows());
  const int atoms = static_cast<int>(delta.rows());
  // Normal-equation pieces of the stacked real system: G = real(D D^H),
  // rhs_n = real(conj(mbar_n) D^T) = real(mbar D^H)_n.
  const Mat gram = (delta * delta.adjoint()).real();
  Mat rhs(n, atoms);
  parallel_for(
      n,
      [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
        rhs.middleRows(begin, end - begin) =
            (mbar.middleRows(begin, end - begin) * delta.adjoint()).real();
      },
      256);
  Mat mixing(n, atoms);
  const int cap = 10 * atoms;
  parallel_for(
      n,
      [&](std::ptrdiff_t begin, std::ptrdiff_t end) {
        for (std::ptrdiff_t v = begin; v < end; ++v)
          mixing.row(v) = nnls_normal(gram, rhs.row(v), cap).transpose();
      },
      64);
  return mixing;
}

// Worst KKT violation of a row solution, relative to the problem scale.
// Used by tests and the constraint certificates.
inline double nnls_kkt_residual(const Mat& gram, const Vec& rhs,
                                const Vec& u) {
  const double scale = 1.0 + rhs.cwiseAbs().maxCoeff();
  const Vec gradient = gram * u - rhs;
  double worst = 0.0;
  for (int j = 0; j < u.size(); ++j) {
    if (u[j] < 0.0) worst = std::max(worst, -u[j] / scale);
    if (u[j] > 0.0)
      worst = std::max(worst, std::abs(gradient[j]) / scale);
    else
      worst = std::max(worst, std::max(0.0, -gradient[j]) / scale);
  }
  return worst;
}

}  // namespace gapmrf
