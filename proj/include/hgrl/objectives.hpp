#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hgrl/params.hpp"

namespace hgrl {

struct LossBreakdown {
  double base = 0.0;
  double state = 0.0;
  double object = 0.0;
  double pair = 0.0;
  double total = 0.0;
  double lambda = 0.0;
  double tau = 0.0;

  void validate() const {
    check_contract(std::isfinite(total) && std::isfinite(base) && std::isfinite(state) && std::isfinite(object) &&
                       std::isfinite(pair),
                   "loss components must be finite");
    check_contract(base >= -1e-12 && state >= -1e-12 && object >= -1e-12 && pair >= -1e-12,
                   "loss components must be non-negative");
    check_contract(std::abs(total - (base + lambda * (state + object + pair))) < 1e-7,
                   "total must equal base + lambda * (state + object + pair)");
  }
};

namespace objectives {

inline void check_finite_logits(const Mat& z, const std::string& name) {
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    if (!z.row(i).allFinite())
      throw NumericError(name + ": non-finite logit at sample " + std::to_string(i));
}

// Temperature-scaled similarity matrix between batch features and a class
// bank; cosine by default (both sides unit-normalized), raw dot products
// when disabled.
inline ad::Var similarity_logits(ad::Tape& tape, ad::Var x, ad::Var reps, double tau, bool cosine,
                                 const std::string& name) {
  check_contract(tau > 0.0, name + ": temperature must be positive");
  ad::Var xn = cosine ? tape.row_l2_normalize(x) : x;
  ad::Var tn = cosine ? tape.row_l2_normalize(reps) : reps;
  ad::Var z = tape.scale(tape.matmul(xn, tape.transpose(tn)), 1.0 / tau);
  check_finite_logits(z.value(), name);
  return z;
}

}  // namespace objectives

// Soft-group InfoNCE (the state/object losses): the numerator mixes the
// label-class logits across groups with the gate confidences; the denominator
// runs over every (class, group) cell. reps rows are class-major (i*k + j).
inline ad::Var grouped_infonce_loss(ad::Tape& tape, ad::Var x, ad::Var reps, ad::Var gate,
                                    const std::vector<int>& labels, int k, double tau, bool cosine,
                                    const std::string& name) {
  const auto b = x.rows();
  check_contract(static_cast<std::size_t>(b) == labels.size(), name + ": label count mismatch");
  check_shape(gate.rows() == b && gate.cols() == k, name + ": gate shape mismatch");
  check_shape(reps.rows() % k == 0, name + ": bank rows must be a multiple of k");
  const auto n = reps.rows() / k;
  ad::Var z = objectives::similarity_logits(tape, x, reps, tau, cosine, name);
  IndexMat idx(b, k);
  for (Eigen::Index i = 0; i < b; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    check_contract(y >= 0 && y < n, name + ": label out of range at sample " + std::to_string(i));
    for (int j = 0; j < k; ++j) idx(i, j) = static_cast<Eigen::Index>(y) * k + j;
  }
  ad::Var numerator = tape.log_weighted_sumexp_rows(tape.gather_cols_per_row(z, idx), gate);
  ad::Var denominator = tape.logsumexp_rows(z);
  return tape.mean_all(tape.sub(denominator, numerator));
}

// Plain InfoNCE against a pair bank (the pair and base losses).
inline ad::Var infonce_loss(ad::Tape& tape, ad::Var x, ad::Var reps, const std::vector<int>& label_cols,
                            double tau, bool cosine, const std::string& name) {
  const auto b = x.rows();
  check_contract(static_cast<std::size_t>(b) == label_cols.size(), name + ": label count mismatch");
  ad::Var z = objectives::similarity_logits(tape, x, reps, tau, cosine, name);
  IndexMat idx(b, 1);
  for (Eigen::Index i = 0; i < b; ++i) {
    const int c = label_cols[static_cast<std::size_t>(i)];
    if (c < 0 || c >= reps.rows())
      throw ContractError(name + ": label column " + std::to_string(c) + " outside the bank at sample " +
                          std::to_string(i));
    idx(i, 0) = c;
  }
  ad::Var numerator = tape.gather_cols_per_row(z, idx);
  return tape.mean_all(tape.sub(tape.logsumexp_rows(z), numerator));
}

// total = base + lambda * (state + object + pair), with the component values
// recorded for the structured log.
inline ad::Var total_loss(ad::Tape& tape, ad::Var base, ad::Var state, ad::Var object, ad::Var pair,
                          double lambda, double tau, LossBreakdown* breakdown) {
  ad::Var total =
      tape.add(base, tape.scale(tape.add(tape.add(state, object), pair), lambda));
  if (breakdown) {
    breakdown->base = base.value()(0, 0);
    breakdown->state = state.value()(0, 0);
    breakdown->object = object.value()(0, 0);
    breakdown->pair = pair.value()(0, 0);
    breakdown->total = total.value()(0, 0);
    breakdown->lambda = lambda;
    breakdown->tau = tau;
    breakdown->validate();
  }
  return total;
}

}  // namespace hgrl
