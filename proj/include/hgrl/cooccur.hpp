#pragma once

#include <string>
#include <vector>

#include "hgrl/archive.hpp"
#include "hgrl/vocab.hpp"

namespace hgrl {

enum class Branch { state, object };

inline std::string branch_name(Branch b) { return b == Branch::state ? "state" : "object"; }

// Cosine-similarity graphs over the two word lists, thresholded by zeta when
// building relation maps.
struct CompatibilityGraph {
  Mat M_s;  // n_s x n_s
  Mat M_o;  // n_o x n_o
  double zeta = 0.5;

  void validate() const {
    check_shape(M_s.rows() == M_s.cols() && M_o.rows() == M_o.cols(), "similarity matrices must be square");
    check_contract((M_s - M_s.transpose()).cwiseAbs().maxCoeff() < 1e-12, "M_s not symmetric");
    check_contract((M_o - M_o.transpose()).cwiseAbs().maxCoeff() < 1e-12, "M_o not symmetric");
    for (Eigen::Index i = 0; i < M_s.rows(); ++i)
      check_contract(std::abs(M_s(i, i) - 1.0) < 1e-9, "M_s diagonal must be 1");
    for (Eigen::Index i = 0; i < M_o.rows(); ++i)
      check_contract(std::abs(M_o(i, i) - 1.0) < 1e-9, "M_o diagonal must be 1");
    check_contract(M_s.cwiseAbs().maxCoeff() <= 1.0 + 1e-9 && M_o.cwiseAbs().maxCoeff() <= 1.0 + 1e-9,
                   "similarities must lie in [-1, 1]");
  }
};

inline Mat cosine_matrix(const Mat& rows) {
  Mat out(rows.rows(), rows.rows());
  Vec norms(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    norms(i) = rows.row(i).norm();
    if (norms(i) == 0.0) throw NumericError("cosine undefined for zero-norm vector at row " + std::to_string(i));
  }
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double c = rows.row(i).dot(rows.row(j)) / (norms(i) * norms(j));
      out(i, j) = c;
      out(j, i) = c;
    }
  }
  return out;
}

inline CompatibilityGraph build_compatibility_graph(const Mat& state_vecs, const Mat& object_vecs,
                                                    double zeta = 0.5) {
  CompatibilityGraph g;
  g.M_s = cosine_matrix(state_vecs);
  g.M_o = cosine_matrix(object_vecs);
  g.zeta = zeta;
  g.validate();
  return g;
}

// Row softmax over an admitted support; excluded entries get weight exactly
// zero (they are dropped from the support, not fed exp(0)=1).
inline Mat masked_softmax_rows(const Mat& logits, const MaskMat& mask) {
  check_shape(logits.rows() == mask.rows() && logits.cols() == mask.cols(), "masked_softmax_rows: shape mismatch");
  Mat w = Mat::Zero(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
      if (mask(i, j)) m = std::max(m, logits(i, j));
    if (!std::isfinite(m)) continue;
    double z = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
      if (mask(i, j)) z += std::exp(logits(i, j) - m);
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
      if (mask(i, j)) w(i, j) = std::exp(logits(i, j) - m) / z;
  }
  return w;
}

// Batch relation map: entry (i, j) is admitted iff the branch labels match
// and the partner-word similarity clears zeta; admitted logits are the
// similarity plus a unit diagonal, normalized by a masked row softmax.
struct RelationMap {
  Mat logits;
  MaskMat mask;
  Mat weights;

  void validate() const {
    check_shape(weights.rows() == weights.cols(), "relation map must be square");
    for (Eigen::Index i = 0; i < weights.rows(); ++i) {
      check_contract(std::abs(weights.row(i).sum() - 1.0) < 1e-6, "relation map row must sum to 1");
      check_contract(weights(i, i) > 0.0, "relation map diagonal must be positive");
      for (Eigen::Index j = 0; j < weights.cols(); ++j)
        if (!mask(i, j)) check_contract(weights(i, j) == 0.0, "masked entry must have weight exactly 0");
    }
  }
};

inline RelationMap identity_relation_map(Eigen::Index b) {
  RelationMap m;
  m.logits = Mat::Zero(b, b);
  m.mask = MaskMat::Constant(b, b, false);
  for (Eigen::Index i = 0; i < b; ++i) {
    m.mask(i, i) = true;
    m.logits(i, i) = 2.0;  // self-similarity 1 plus unit diagonal
  }
  m.weights = Mat::Identity(b, b);
  return m;
}

inline RelationMap relation_map_for_batch(const std::vector<int>& state_labels,
                                          const std::vector<int>& object_labels,
                                          const CompatibilityGraph& graph, Branch branch) {
  check_contract(state_labels.size() == object_labels.size() && !state_labels.empty(),
                 "relation_map_for_batch: empty or mismatched labels");
  const auto b = static_cast<Eigen::Index>(state_labels.size());
  const Mat& partner = branch == Branch::state ? graph.M_o : graph.M_s;
  RelationMap m;
  m.logits = Mat::Zero(b, b);
  m.mask = MaskMat::Constant(b, b, false);
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < b; ++j) {
      const auto ii = static_cast<std::size_t>(i), jj = static_cast<std::size_t>(j);
      const bool same = branch == Branch::state ? state_labels[ii] == state_labels[jj]
                                                : object_labels[ii] == object_labels[jj];
      const double sim = branch == Branch::state ? partner(object_labels[ii], object_labels[jj])
                                                 : partner(state_labels[ii], state_labels[jj]);
      if (same && sim >= graph.zeta) {
        m.mask(i, j) = true;
        m.logits(i, j) = sim + (i == j ? 1.0 : 0.0);
      }
    }
  m.weights = masked_softmax_rows(m.logits, m.mask);
  m.validate();
  return m;
}

inline Mat aggregate_features(const Mat& features, const RelationMap& map) {
  check_shape(map.weights.cols() == features.rows(), "aggregate_features: dimension mismatch");
  return map.weights * features;
}

// Cache key binding the graph to its inputs: word-vector file bytes, the
// vocabulary, and zeta.
inline std::string graph_cache_key(const std::string& wordvec_path, const Vocabulary& vocab, double zeta) {
  std::ifstream in(wordvec_path, std::ios::binary);
  if (!in) throw IoError("cannot open word-vector file " + wordvec_path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::uint64_t h = fnv1a(bytes);
  std::string words;
  for (const auto& w : vocab.states) words += w + "\x1f";
  words += "\x1e";
  for (const auto& w : vocab.objects) words += w + "\x1f";
  h = fnv1a(words, h);
  h = fnv1a(&zeta, sizeof zeta, h);
  return hex64(h);
}

inline Archive graph_to_archive(const CompatibilityGraph& g, const std::string& cache_key) {
  Archive a;
  a.put("kind", std::string("compatibility-graph"));
  a.put("M_s", g.M_s);
  a.put("M_o", g.M_o);
  a.put_scalar("zeta", g.zeta);
  a.put("cache_key", cache_key);
  return a;
}

inline CompatibilityGraph graph_from_archive(const Archive& a) {
  check_contract(a.str("kind") == "compatibility-graph", "archive is not a compatibility graph");
  CompatibilityGraph g;
  g.M_s = a.mat("M_s");
  g.M_o = a.mat("M_o");
  g.zeta = a.scalar("zeta");
  g.validate();
  return g;
}

}  // namespace hgrl
