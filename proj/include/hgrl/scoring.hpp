#pragma once

#include <string>
#include <vector>

#include "hgrl/common.hpp"
#include "hgrl/vocab.hpp"

namespace hgrl {

// Inference-time probabilities. The branch terms normalize over the full
// (class, group) grid and then sum each class's groups — the inference rule
// carries no gate weighting. fused adds the three routes per composition.
struct ScoreTensor {
  Mat p_base;    // B x |target|
  Mat p_pair;    // B x |target|
  Mat p_state;   // B x n_s
  Mat p_object;  // B x n_o
  Mat fused;     // B x |target|

  void validate() const {
    auto rows_stochastic = [](const Mat& m, const char* what) {
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        check_contract(std::abs(m.row(i).sum() - 1.0) < 1e-5, std::string(what) + " row must sum to 1");
    };
    rows_stochastic(p_base, "p_base");
    rows_stochastic(p_pair, "p_pair");
    rows_stochastic(p_state, "p_state");
    rows_stochastic(p_object, "p_object");
  }
};

namespace scoring {

inline Mat normalize_rows(Mat m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n == 0.0) throw NumericError("cannot normalize zero-norm row " + std::to_string(i));
    m.row(i) /= n;
  }
  return m;
}

inline Mat softmax_rows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) z += std::exp(logits(i, j) - mx);
    for (Eigen::Index j = 0; j < logits.cols(); ++j) out(i, j) = std::exp(logits(i, j) - mx) / z;
  }
  return out;
}

inline Mat scaled_similarity(const Mat& x, const Mat& reps, double tau, bool cosine) {
  check_contract(tau > 0.0, "scoring: temperature must be positive");
  const Mat xn = cosine ? normalize_rows(x) : x;
  const Mat tn = cosine ? normalize_rows(reps) : reps;
  return (xn * tn.transpose()) / tau;
}

// Group-summed class probability: softmax over all (class, group) cells of
// the bank, then sum the k cells of each class.
inline Mat grouped_class_probs(const Mat& x, const Mat& reps, int k, double tau, bool cosine) {
  check_shape(reps.rows() % k == 0, "grouped_class_probs: bank rows must be a multiple of k");
  const auto n = reps.rows() / k;
  const Mat grid = softmax_rows(scaled_similarity(x, reps, tau, cosine));
  Mat out = Mat::Zero(x.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) out.col(i) += grid.col(i * k + j);
  return out;
}

}  // namespace scoring

// Plain-value text bank used at inference (one build per evaluation pass).
struct TextBankValues {
  Mat state_reps;   // (n_s * k_s) x d
  Mat object_reps;  // (n_o * k_o) x d
  Mat pair_reps;    // |target| x d, ordered like `target`
};

inline ScoreTensor score_batch(const Mat& image_features, const Mat& x_s, const Mat& x_o, const Mat& x_p,
                               const TextBankValues& bank, const std::vector<PairIdx>& target, int n_s, int n_o,
                               int k_s, int k_o, double tau, bool cosine) {
  check_shape(bank.pair_reps.rows() == static_cast<Eigen::Index>(target.size()),
              "score_batch: pair bank does not cover the target space");
  for (const auto& p : target)
    if (p.first < 0 || p.first >= n_s || p.second < 0 || p.second >= n_o)
      throw ContractError("score_batch: target composition outside vocabulary");
  ScoreTensor s;
  s.p_base = scoring::softmax_rows(scoring::scaled_similarity(image_features, bank.pair_reps, tau, cosine));
  s.p_pair = scoring::softmax_rows(scoring::scaled_similarity(x_p, bank.pair_reps, tau, cosine));
  s.p_state = scoring::grouped_class_probs(x_s, bank.state_reps, k_s, tau, cosine);
  s.p_object = scoring::grouped_class_probs(x_o, bank.object_reps, k_o, tau, cosine);
  s.fused = Mat(s.p_base.rows(), s.p_base.cols());
  for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(target.size()); ++c)
    for (Eigen::Index b = 0; b < s.fused.rows(); ++b)
      s.fused(b, c) = s.p_base(b, c) + s.p_pair(b, c) +
                      s.p_state(b, target[static_cast<std::size_t>(c)].first) *
                          s.p_object(b, target[static_cast<std::size_t>(c)].second);
  s.validate();
  return s;
}

}  // namespace hgrl
