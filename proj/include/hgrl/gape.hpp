#pragma once

#include <string>
#include <vector>

#include "hgrl/cooccur.hpp"
#include "hgrl/params.hpp"

namespace hgrl {

// Group-aware pair enhancement: samples whose gate confidences agree (and
// share the branch label) exchange features before the pair branch.
using CompatibilityMap = RelationMap;

// Adjacency from gate-confidence cosines, thresholded like the word graph
// and normalized with the same masked softmax. The map is built from forward
// values and enters the graph as a constant (no gradient through adjacency).
inline CompatibilityMap compatibility_map(const Mat& gate_confidences, const std::vector<int>& labels,
                                          double zeta) {
  check_contract(static_cast<std::size_t>(gate_confidences.rows()) == labels.size() && !labels.empty(),
                 "compatibility_map: label/batch mismatch");
  const auto b = gate_confidences.rows();
  Vec norms(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    norms(i) = gate_confidences.row(i).norm();
    check_contract(norms(i) > 0.0, "compatibility_map: zero gate row");
  }
  CompatibilityMap m;
  m.logits = Mat::Zero(b, b);
  m.mask = MaskMat::Constant(b, b, false);
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < b; ++j) {
      if (labels[static_cast<std::size_t>(i)] != labels[static_cast<std::size_t>(j)]) continue;
      const double cos = gate_confidences.row(i).dot(gate_confidences.row(j)) / (norms(i) * norms(j));
      if (i != j && cos < zeta) continue;
      m.mask(i, j) = true;
      m.logits(i, j) = cos + (i == j ? 1.0 : 0.0);
    }
  m.weights = masked_softmax_rows(m.logits, m.mask);
  m.validate();
  return m;
}

inline ad::Var enhance(ad::Tape& tape, ad::Var features, const CompatibilityMap& map) {
  check_shape(map.weights.cols() == features.rows(), "enhance: dimension mismatch");
  return tape.matmul(tape.constant(map.weights), features);
}

struct PairBranchConfig {
  int d = 32;
  int hidden = 0;  // 0 -> 2d

  int hidden_width() const { return hidden > 0 ? hidden : 2 * d; }
};

// x_p = pair_net(x̂_s ⊕ x̂_o); enhancement maps are training-only inputs.
inline ad::Var pair_forward(ad::Tape& tape, const LeafMap& leafs, ad::Var x_s, ad::Var x_o,
                            const CompatibilityMap* map_s, const CompatibilityMap* map_o, bool training,
                            const PairBranchConfig& cfg) {
  check_shape(x_s.cols() == cfg.d && x_o.cols() == cfg.d && x_s.rows() == x_o.rows(),
              "pair_forward: branch output shape mismatch");
  check_contract((map_s == nullptr) == (map_o == nullptr), "pair_forward: supply both maps or neither");
  if (map_s != nullptr && !training)
    throw ContractError("pair_forward: compatibility maps need ground-truth labels and are training-only");
  ad::Var xs = map_s != nullptr ? enhance(tape, x_s, *map_s) : x_s;
  ad::Var xo = map_o != nullptr ? enhance(tape, x_o, *map_o) : x_o;
  ad::Var cat = tape.concat_cols(xs, xo);  // state-then-object
  ad::Var h = tape.gelu(tape.add_rowvec(tape.matmul(cat, leafs.at("gape.pair.W1")), leafs.at("gape.pair.b1")));
  return tape.add_rowvec(tape.matmul(h, leafs.at("gape.pair.W2")), leafs.at("gape.pair.b2"));
}

}  // namespace hgrl
