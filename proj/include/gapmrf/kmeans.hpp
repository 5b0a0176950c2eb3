#pragma once

#include <limits>
#include <vector>

#include "gapmrf/rng.hpp"
#include "gapmrf/types.hpp"

namespace gapmrf {

struct KMeansResult {
  Mat centers;   // K' x dims, K' <= K (empty clusters dropped)
  IVec counts;   // K'
  IVec labels;   // per point, indexes into the compacted centers
};

// Lloyd's algorithm with k-means++ seeding. Runs to an assignment fixpoint
// or max_iterations; clusters that end up empty are dropped. Fully
// deterministic given the RNG state.
inline KMeansResult kmeans(const Mat& points, int k, Rng& rng,
                           int max_iterations = 100) {
  const int n = static_cast<int>(points.rows());
  const int dims = static_cast<int>(points.cols());
  if (n < 1) throw NumericalError("kmeans needs at least one point");
  if (k < 1) throw ConfigError("kmeans needs at least one cluster");

  // Seeding: first center uniform, the rest proportional to the squared
  // distance to the nearest chosen center. A zero total distance means
  // every point already coincides with a center; stop early.
  std::vector<int> seeds;
  seeds.push_back(static_cast<int>(rng.uniform_index(n)));
  Vec dist2(n);
  for (int i = 0; i < n; ++i)
    dist2[i] = (points.row(i) - points.row(seeds[0])).squaredNorm();
  while (static_cast<int>(seeds.size()) < std::min(k, n)) {
    const double total = dist2.sum();
    if (total <= 0.0) break;
    double r = rng.uniform() * total;
    int pick = n - 1;
    for (int i = 0; i < n; ++i) {
      r -= dist2[i];
      if (r <= 0.0) {
        pick = i;
        break;
      }
    }
    seeds.push_back(pick);
    for (int i = 0; i < n; ++i)
      dist2[i] =
          std::min(dist2[i], (points.row(i) - points.row(pick)).squaredNorm());
  }
  const int num_centers = static_cast<int>(seeds.size());
  Mat centers(num_centers, dims);
  for (int c = 0; c < num_centers; ++c) centers.row(c) = points.row(seeds[c]);

  std::vector<int> labels(n, -1);
  for (int iteration = 0; iteration < max_iterations; ++iteration) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < num_centers; ++c) {
        const double d = (points.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (labels[i] != best) {
        labels[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    Mat sums = Mat::Zero(num_centers, dims);
    std::vector<int> sizes(num_centers, 0);
    for (int i = 0; i < n; ++i) {
      sums.row(labels[i]) += points.row(i);
      ++sizes[labels[i]];
    }
    for (int c = 0; c < num_centers; ++c)
      if (sizes[c] > 0) centers.row(c) = sums.row(c) / sizes[c];
  }

  // Compact away empty clusters, preserving index order.
  std::vector<int> sizes(num_centers, 0);
  for (int i = 0; i < n; ++i) ++sizes[labels[i]];
  std::vector<int> remap(num_centers, -1);
  int kept = 0;
  for (int c = 0; c < num_centers; ++c)
    if (sizes[c] > 0) remap[c] = kept++;
  KMeansResult result;
  result.centers.resize(kept, dims);
  result.counts.resize(kept);
  result.labels.resize(n);
  for (int c = 0; c < num_centers; ++c)
    if (remap[c] >= 0) {
      result.centers.row(remap[c]) = centers.row(c);
      result.counts[remap[c]] = sizes[c];
    }
  for (int i = 0; i < n; ++i) result.labels[i] = remap[labels[i]];
  return result;
}

}  // namespace gapmrf
