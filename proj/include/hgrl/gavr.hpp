#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "hgrl/cooccur.hpp"
#include "hgrl/params.hpp"

namespace hgrl {

// Group-aware visual branch: decomposer, router, expert ensemble, top-K
// gating and learnable-β fusion. State and object branches are symmetric and
// differ only in their parameter scope and expert count.
struct BranchConfig {
  Branch branch = Branch::state;
  int k = 3;           // expert count
  int K = 2;           // active experts per sample
  int d = 32;          // feature width
  int expert_hidden = 0;  // 0 -> d
  double beta_init = 0.0;
  bool renorm_topk = false;       // renormalize selected confidences (off: raw sum)
  bool stop_gradient_gate = false;

  int hidden() const { return expert_hidden > 0 ? expert_hidden : d; }
  std::string scope() const { return "gavr." + branch_name(branch); }

  void validate() const {
    check_contract(k >= 1 && K >= 1 && K <= k, "branch config: need 1 <= K <= k");
    check_contract(d >= 1, "branch config: d must be positive");
  }
};

struct GateDistribution {
  Mat confidences;  // B x k, row-stochastic
  IndexMat topk;    // B x K, largest confidences, ties broken by lowest index

  void validate(int K) const {
    check_shape(topk.cols() == K, "gate: top-K width mismatch");
    for (Eigen::Index i = 0; i < confidences.rows(); ++i)
      check_contract(std::abs(confidences.row(i).sum() - 1.0) < 1e-6, "gate row must sum to 1");
  }
};

// Largest-K per row; ties resolved toward the lowest expert index so runs
// are reproducible across platforms.
inline IndexMat topk_indices(const Mat& conf, int K) {
  check_shape(K >= 1 && K <= conf.cols(), "topk_indices: K out of range");
  IndexMat out(conf.rows(), K);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(conf.cols()));
  for (Eigen::Index i = 0; i < conf.rows(); ++i) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      if (conf(i, a) != conf(i, b)) return conf(i, a) > conf(i, b);
      return a < b;
    });
    std::vector<Eigen::Index> sel(order.begin(), order.begin() + K);
    std::sort(sel.begin(), sel.end());
    for (int j = 0; j < K; ++j) out(i, j) = sel[static_cast<std::size_t>(j)];
  }
  return out;
}

struct BranchForward {
  ad::Var base;   // decomposer output
  ad::Var group;  // expert mixture
  ad::Var fused;  // base + beta * group
  ad::Var gate;   // B x k confidences on the tape (for the soft-label losses)
  GateDistribution gate_values;
};

namespace gavr {

// One-layer multi-head self-attention over a single-token sequence plus
// residual: the softmax over one key is 1, so the block reduces to
// x + (x Wv) Wo. Wq/Wk are registered for checkpoint fidelity but cannot
// influence the output at sequence length 1.
inline ad::Var decompose(ad::Tape& tape, const LeafMap& leafs, ad::Var x, const BranchConfig& cfg) {
  check_shape(x.cols() == cfg.d, "decompose: width mismatch");
  const std::string p = cfg.scope() + ".decomposer.";
  (void)leafs.at(p + "Wq");
  (void)leafs.at(p + "Wk");
  return tape.add(x, tape.matmul(tape.matmul(x, leafs.at(p + "Wv")), leafs.at(p + "Wo")));
}

inline ad::Var route_confidences(ad::Tape& tape, const LeafMap& leafs, ad::Var x, const BranchConfig& cfg) {
  const std::string p = cfg.scope() + ".router.";
  return tape.row_softmax(tape.add_rowvec(tape.matmul(x, leafs.at(p + "W")), leafs.at(p + "b")));
}

inline GateDistribution route(ad::Tape& tape, const LeafMap& leafs, ad::Var x, const BranchConfig& cfg,
                              ad::Var* conf_var = nullptr) {
  ad::Var conf = route_confidences(tape, leafs, x, cfg);
  if (conf_var) *conf_var = conf;
  GateDistribution g;
  g.confidences = conf.value();
  g.topk = topk_indices(g.confidences, cfg.K);
  g.validate(cfg.K);
  return g;
}

inline ad::Var expert_net(ad::Tape& tape, const LeafMap& leafs, ad::Var x, const BranchConfig& cfg, int j) {
  const std::string p = cfg.scope() + ".expert" + std::to_string(j) + ".";
  ad::Var h = tape.gelu(tape.add_rowvec(tape.matmul(x, leafs.at(p + "W1")), leafs.at(p + "b1")));
  return tape.add_rowvec(tape.matmul(h, leafs.at(p + "W2")), leafs.at(p + "b2"));
}

// x_g[i] = sum over selected experts of confidence * expert output. The
// selection mask is frozen from the forward confidences (piecewise-constant
// top-K); the confidences themselves keep their gradient unless the
// stop-gradient flag is set.
inline ad::Var expert_mixture(ad::Tape& tape, const LeafMap& leafs, ad::Var x, ad::Var conf,
                              const IndexMat& topk, const BranchConfig& cfg) {
  Mat sel = Mat::Zero(conf.rows(), conf.cols());
  for (Eigen::Index i = 0; i < topk.rows(); ++i)
    for (Eigen::Index j = 0; j < topk.cols(); ++j) sel(i, topk(i, j)) = 1.0;
  ad::Var gated = tape.mul_elem(cfg.stop_gradient_gate ? tape.constant(conf.value()) : conf,
                                tape.constant(sel));
  if (cfg.renorm_topk) gated = tape.row_scale(gated, tape.recip(tape.sum_cols(gated)));
  ad::Var out = tape.constant(Mat::Zero(x.rows(), cfg.d));
  for (int j = 0; j < cfg.k; ++j)
    out = tape.add(out, tape.row_scale(expert_net(tape, leafs, x, cfg, j), tape.slice_cols(gated, j, 1)));
  return out;
}

}  // namespace gavr

// Full branch pass. A relation map is a training-only input (it requires
// ground-truth labels); inference passes feed the decomposed feature straight
// into route/experts. The Eq. 3 residual always uses the un-aggregated base.
inline BranchForward branch_forward(ad::Tape& tape, const LeafMap& leafs, ad::Var features,
                                    const BranchConfig& cfg, const RelationMap* map, bool training) {
  cfg.validate();
  if (map != nullptr && !training)
    throw ContractError("branch_forward: relation maps need ground-truth labels and are training-only");
  BranchForward out;
  out.base = gavr::decompose(tape, leafs, features, cfg);
  ad::Var routed = map != nullptr ? tape.matmul(tape.constant(map->weights), out.base) : out.base;
  out.gate_values = gavr::route(tape, leafs, routed, cfg, &out.gate);
  out.group = gavr::expert_mixture(tape, leafs, routed, out.gate, out.gate_values.topk, cfg);
  out.fused = tape.add(out.base, tape.scale_var(out.group, leafs.at(cfg.scope() + ".beta")));
  return out;
}

// Ablated branch (no grouping): fused = base, uniform gate. Keeps downstream
// shapes and soft-label losses well defined.
inline BranchForward branch_forward_plain(ad::Tape& tape, const LeafMap& leafs, ad::Var features,
                                          const BranchConfig& cfg) {
  BranchForward out;
  out.base = gavr::decompose(tape, leafs, features, cfg);
  const Mat uniform = Mat::Constant(features.rows(), cfg.k, 1.0 / cfg.k);
  out.gate = tape.constant(uniform);
  out.gate_values.confidences = uniform;
  out.gate_values.topk = topk_indices(uniform, cfg.K);
  out.group = tape.constant(Mat::Zero(features.rows(), cfg.d));
  out.fused = out.base;
  return out;
}

}  // namespace hgrl
