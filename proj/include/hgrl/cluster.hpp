#pragma once

#include <limits>
#include <vector>

#include "hgrl/common.hpp"
#include "hgrl/rng.hpp"

namespace hgrl {

struct KMeansResult {
  Mat centroids;                    // k x d
  std::vector<int> assignment;     // row -> centroid
  double inertia = 0.0;            // sum of squared distances
};

namespace detail {

inline double sq_dist(const Mat& rows, Eigen::Index i, const Mat& centroids, Eigen::Index c) {
  return (rows.row(i) - centroids.row(c)).squaredNorm();
}

// One seeded k-means++ initialization followed by Lloyd iterations.
inline KMeansResult kmeans_once(const Mat& rows, int k, Rng& rng, int max_iters) {
  const Eigen::Index n = rows.rows();
  KMeansResult res;
  res.centroids.resize(k, rows.cols());

  // k-means++ seeding: first centroid uniform, later ones proportional to
  // squared distance from the nearest chosen centroid.
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Eigen::Index first = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
  res.centroids.row(0) = rows.row(first);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)], sq_dist(rows, i, res.centroids, c - 1));
      total += d2[static_cast<std::size_t>(i)];
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double r = rng.uniform() * total, acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[static_cast<std::size_t>(i)];
        if (acc >= r) { pick = i; break; }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    }
    res.centroids.row(c) = rows.row(pick);
  }

  res.assignment.assign(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < max_iters; ++it) {
    bool moved = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = sq_dist(rows, i, res.centroids, 0);
      for (int c = 1; c < k; ++c) {
        double d = sq_dist(rows, i, res.centroids, c);
        if (d < bd) { bd = d; best = c; }
      }
      if (res.assignment[static_cast<std::size_t>(i)] != best) {
        res.assignment[static_cast<std::size_t>(i)] = best;
        moved = true;
      }
    }
    Mat sums = Mat::Zero(k, rows.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(res.assignment[static_cast<std::size_t>(i)]) += rows.row(i);
      counts[static_cast<std::size_t>(res.assignment[static_cast<std::size_t>(i)])]++;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0)
        res.centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
      // empty cluster: re-seed on the row farthest from its centroid
      else {
        Eigen::Index far = 0;
        double fd = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          double d = sq_dist(rows, i, res.centroids, res.assignment[static_cast<std::size_t>(i)]);
          if (d > fd) { fd = d; far = i; }
        }
        res.centroids.row(c) = rows.row(far);
        moved = true;
      }
    }
    if (!moved && it > 0) break;
  }
  res.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    res.inertia += sq_dist(rows, i, res.centroids, res.assignment[static_cast<std::size_t>(i)]);
  return res;
}

}  // namespace detail

// Deterministic seeded k-means (k-means++ / Lloyd, best of `restarts`).
// Desk-scale clustering for vocabulary statistics; not a general-purpose
// large-data implementation.
inline KMeansResult kmeans_rows(const Mat& rows, int k, std::uint64_t seed, int restarts = 8,
                                int max_iters = 64) {
  check_contract(k >= 1, "kmeans: k must be >= 1");
  check_contract(rows.rows() >= k, "kmeans: need at least k rows");
  Rng rng(fnv1a("kmeans", seed));
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Rng fork = rng.fork(static_cast<std::uint64_t>(r));
    KMeansResult cand = detail::kmeans_once(rows, k, fork, max_iters);
    if (cand.inertia < best.inertia) best = std::move(cand);
  }
  return best;
}

}  // namespace hgrl
