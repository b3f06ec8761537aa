#pragma once

#include <algorithm>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "hgrl/common.hpp"
#include "hgrl/gavr.hpp"

namespace hgrl {

struct EvalCurve {
  std::vector<double> bias;
  std::vector<double> seen_acc;
  std::vector<double> unseen_acc;

  void validate() const {
    check_contract(bias.size() == seen_acc.size() && bias.size() == unseen_acc.size(), "curve arrays disagree");
    for (std::size_t i = 1; i < bias.size(); ++i)
      check_contract(bias[i] > bias[i - 1], "curve biases must be strictly increasing");
    for (std::size_t i = 0; i < bias.size(); ++i)
      check_contract(seen_acc[i] >= 0.0 && seen_acc[i] <= 1.0 && unseen_acc[i] >= 0.0 && unseen_acc[i] <= 1.0,
                     "accuracies must lie in [0, 1]");
  }
};

struct MetricsReport {
  double S = 0.0;
  double U = 0.0;
  double HM = 0.0;
  double AUC = 0.0;
  World world = World::closed;
};

// Calibration sweep. Adding a bias uniformly to every unseen column means the
// argmax can only switch between the best seen and best unseen column of each
// sample, so the sweep reduces to one comparison per (sample, bias). Ties
// follow full-argmax semantics: the lowest column index wins.
inline EvalCurve sweep_curve(const Mat& fused, const std::vector<int>& label_cols,
                             const std::vector<bool>& col_unseen, int grid_size = 1000) {
  const auto b = fused.rows();
  const auto c = fused.cols();
  check_contract(grid_size >= 2, "sweep_curve: grid must have at least 2 points");
  check_contract(static_cast<std::size_t>(b) == label_cols.size(), "sweep_curve: label count mismatch");
  check_contract(static_cast<std::size_t>(c) == col_unseen.size(), "sweep_curve: column mask mismatch");
  bool any_unseen_col = false;
  for (bool u : col_unseen) any_unseen_col = any_unseen_col || u;

  Eigen::Index n_seen_samples = 0, n_unseen_samples = 0;
  for (int lc : label_cols) {
    check_contract(lc >= 0 && static_cast<Eigen::Index>(lc) < c, "sweep_curve: label column out of range");
    (col_unseen[static_cast<std::size_t>(lc)] ? n_unseen_samples : n_seen_samples)++;
  }
  if (n_unseen_samples == 0) throw ValidationError("sweep_curve: no unseen-labeled samples, curve undefined");

  struct Best {
    double seen_v = -std::numeric_limits<double>::infinity();
    Eigen::Index seen_c = -1;
    double unseen_v = -std::numeric_limits<double>::infinity();
    Eigen::Index unseen_c = -1;
  };
  std::vector<Best> best(static_cast<std::size_t>(b));
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < c; ++j) {
      auto& bb = best[static_cast<std::size_t>(i)];
      if (col_unseen[static_cast<std::size_t>(j)]) {
        if (fused(i, j) > bb.unseen_v) bb.unseen_v = fused(i, j), bb.unseen_c = j;
      } else {
        if (fused(i, j) > bb.seen_v) bb.seen_v = fused(i, j), bb.seen_c = j;
      }
    }

  const double m = fused.cwiseAbs().maxCoeff();
  std::vector<double> biases;
  biases.push_back(-(2.0 * m + 1.0));  // saturating: only seen columns win
  for (int i = 0; i < grid_size; ++i)
    biases.push_back(-m + 2.0 * m * static_cast<double>(i) / (grid_size - 1));
  biases.push_back(2.0 * m + 1.0);  // saturating: only unseen columns win
  // Guard strict monotonicity for degenerate all-zero score matrices.
  for (std::size_t i = 1; i < biases.size(); ++i)
    if (biases[i] <= biases[i - 1]) biases[i] = std::nextafter(biases[i - 1], std::numeric_limits<double>::max());

  EvalCurve curve;
  for (double gamma : biases) {
    Eigen::Index seen_hits = 0, unseen_hits = 0;
    for (Eigen::Index i = 0; i < b; ++i) {
      const auto& bb = best[static_cast<std::size_t>(i)];
      Eigen::Index pred;
      if (bb.seen_c < 0) {
        pred = bb.unseen_c;
      } else if (bb.unseen_c < 0) {
        pred = bb.seen_c;
      } else {
        const double uv = bb.unseen_v + gamma;
        if (uv > bb.seen_v || (uv == bb.seen_v && bb.unseen_c < bb.seen_c))
          pred = bb.unseen_c;
        else
          pred = bb.seen_c;
      }
      if (pred == label_cols[static_cast<std::size_t>(i)])
        (col_unseen[static_cast<std::size_t>(pred)] ? unseen_hits : seen_hits)++;
    }
    curve.bias.push_back(gamma);
    curve.seen_acc.push_back(n_seen_samples ? static_cast<double>(seen_hits) / n_seen_samples : 0.0);
    curve.unseen_acc.push_back(static_cast<double>(unseen_hits) / n_unseen_samples);
  }
  (void)any_unseen_col;
  curve.validate();
  return curve;
}

// S/U/HM over the curve; AUC integrates unseen accuracy over the seen-accuracy
// axis (trapezoid after sorting by seen accuracy and keeping the best unseen
// value per distinct seen value).
inline MetricsReport compute_metrics(const EvalCurve& curve, World world = World::closed) {
  curve.validate();
  check_contract(!curve.bias.empty(), "compute_metrics: empty curve");
  MetricsReport r;
  r.world = world;
  for (std::size_t i = 0; i < curve.bias.size(); ++i) {
    const double s = curve.seen_acc[i], u = curve.unseen_acc[i];
    r.S = std::max(r.S, s);
    r.U = std::max(r.U, u);
    if (s + u > 0.0) r.HM = std::max(r.HM, 2.0 * s * u / (s + u));
  }
  std::map<double, double> best_unseen_by_seen;
  for (std::size_t i = 0; i < curve.bias.size(); ++i) {
    auto [it, fresh] = best_unseen_by_seen.emplace(curve.seen_acc[i], curve.unseen_acc[i]);
    if (!fresh) it->second = std::max(it->second, curve.unseen_acc[i]);
  }
  if (best_unseen_by_seen.size() < 2) {
    std::cerr << "warning: fewer than 2 distinct seen-accuracy values, AUC set to 0\n";
    r.AUC = 0.0;
    return r;
  }
  double auc = 0.0;
  auto prev = best_unseen_by_seen.begin();
  for (auto it = std::next(prev); it != best_unseen_by_seen.end(); ++it, ++prev)
    auc += 0.5 * (prev->second + it->second) * (it->first - prev->first);
  r.AUC = auc;
  return r;
}

// Fraction of samples whose top-1 expert agrees with the majority ground-truth
// group of that expert's members (computed per branch; callers usually gate on
// the minimum of the two branches).
inline double cluster_purity(const GateDistribution& gate, const std::vector<int>& true_groups) {
  check_contract(static_cast<std::size_t>(gate.confidences.rows()) == true_groups.size() && !true_groups.empty(),
                 "cluster_purity: size mismatch");
  const auto k = gate.confidences.cols();
  std::map<std::pair<Eigen::Index, int>, int> counts;
  for (Eigen::Index i = 0; i < gate.confidences.rows(); ++i) {
    Eigen::Index top = 0;
    gate.confidences.row(i).maxCoeff(&top);
    counts[{top, true_groups[static_cast<std::size_t>(i)]}]++;
  }
  std::map<Eigen::Index, int> best;
  for (const auto& [key, n] : counts) best[key.first] = std::max(best[key.first], n);
  int hits = 0;
  for (Eigen::Index e = 0; e < k; ++e)
    if (best.count(e)) hits += best[e];
  return static_cast<double>(hits) / static_cast<double>(true_groups.size());
}

}  // namespace hgrl
