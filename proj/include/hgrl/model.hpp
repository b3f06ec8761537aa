#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "hgrl/cluster.hpp"
#include "hgrl/dgp.hpp"
#include "hgrl/encoders.hpp"
#include "hgrl/gape.hpp"
#include "hgrl/gavr.hpp"
#include "hgrl/objectives.hpp"
#include "hgrl/optim.hpp"
#include "hgrl/scoring.hpp"

namespace hgrl {

struct ModelConfig {
  int d = 32;
  int token_dim = 32;
  int n_s = 0;
  int n_o = 0;
  int k_s = 3;
  int k_o = 3;
  int K = 2;
  int m = 3;
  double zeta = 0.5;
  double lambda = 1.0;
  double tau = 0.01;
  double beta_init = 0.0;
  double ctx_token_std = 0.02;
  // Group tokens need an init scale comparable to the unit-norm class token:
  // near-identical group prompts give the router no self-supervision signal
  // to cluster against, and the gate collapses.
  double group_token_std = 0.25;
  // "kmeans": warm-start group tokens at the k-means centroids of the class
  // word embeddings, so each group prompt starts near one vocabulary cluster
  // and the router's expert assignment begins collision-free. "gaussian":
  // random tokens at group_token_std.
  std::string group_token_init = "kmeans";
  int expert_hidden = 0;  // 0 -> d
  int pair_hidden = 0;    // 0 -> 2d
  // "mean": initialize the pair projector at the averaging operating point,
  // so x_p starts as (x_s + x_o) / 2 and training only learns corrections on
  // top of an already-sensible composition (identity-style warm start; needs
  // hidden width >= d, else falls back). "gaussian": random init.
  std::string pair_init = "mean";
  std::uint64_t seed = 1;
  bool renorm_topk = false;
  bool stop_gradient_gate = false;
  bool cosine_sim = true;
  bool freeze_class_tokens = false;
  // Component switches (full model: all true).
  bool use_gavr = true;
  bool use_tcpg = true;
  bool use_dgp_group = true;
  bool use_gape = true;

  void validate() const {
    check_contract(d >= 4 && token_dim >= 4, "model: widths must be >= 4");
    check_contract(n_s >= 1 && n_o >= 1, "model: vocabulary sizes unset");
    check_contract(k_s >= 1 && k_o >= 1 && K >= 1 && K <= std::min(k_s, k_o), "model: need 1 <= K <= min(k_s, k_o)");
    check_contract(m >= 1, "model: context length must be >= 1");
    check_contract(tau > 0.0 && lambda >= 0.0, "model: bad tau/lambda");
    check_contract(group_token_init == "kmeans" || group_token_init == "gaussian",
                   "model: group_token_init must be 'kmeans' or 'gaussian'");
    check_contract(pair_init == "mean" || pair_init == "gaussian",
                   "model: pair_init must be 'mean' or 'gaussian'");
  }

  BranchConfig branch(Branch b) const {
    BranchConfig c;
    c.branch = b;
    c.k = b == Branch::state ? k_s : k_o;
    c.K = K;
    c.d = d;
    c.expert_hidden = expert_hidden;
    c.beta_init = beta_init;
    c.renorm_topk = renorm_topk;
    c.stop_gradient_gate = stop_gradient_gate;
    return c;
  }

  PromptConfig prompts() const {
    PromptConfig p;
    p.m = m;
    p.k_s = k_s;
    p.k_o = k_o;
    p.n_s = n_s;
    p.n_o = n_o;
    p.token_dim = token_dim;
    p.use_group_token = use_dgp_group;
    return p;
  }

  PairBranchConfig pair_branch() const {
    PairBranchConfig c;
    c.d = d;
    c.hidden = pair_hidden;
    return c;
  }

  nlohmann::json to_json() const {
    return {{"d", d},
            {"token_dim", token_dim},
            {"n_s", n_s},
            {"n_o", n_o},
            {"k_s", k_s},
            {"k_o", k_o},
            {"K", K},
            {"m", m},
            {"zeta", zeta},
            {"lambda", lambda},
            {"tau", tau},
            {"beta_init", beta_init},
            {"ctx_token_std", ctx_token_std},
            {"group_token_std", group_token_std},
            {"group_token_init", group_token_init},
            {"expert_hidden", expert_hidden},
            {"pair_hidden", pair_hidden},
            {"pair_init", pair_init},
            {"seed", seed},
            {"renorm_topk", renorm_topk},
            {"stop_gradient_gate", stop_gradient_gate},
            {"cosine_sim", cosine_sim},
            {"freeze_class_tokens", freeze_class_tokens},
            {"use_gavr", use_gavr},
            {"use_tcpg", use_tcpg},
            {"use_dgp_group", use_dgp_group},
            {"use_gape", use_gape}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.d = j.value("d", c.d);
    c.token_dim = j.value("token_dim", c.token_dim);
    c.n_s = j.value("n_s", c.n_s);
    c.n_o = j.value("n_o", c.n_o);
    c.k_s = j.value("k_s", c.k_s);
    c.k_o = j.value("k_o", c.k_o);
    c.K = j.value("K", c.K);
    c.m = j.value("m", c.m);
    c.zeta = j.value("zeta", c.zeta);
    c.lambda = j.value("lambda", c.lambda);
    c.tau = j.value("tau", c.tau);
    c.beta_init = j.value("beta_init", c.beta_init);
    c.ctx_token_std = j.value("ctx_token_std", c.ctx_token_std);
    c.group_token_std = j.value("group_token_std", c.group_token_std);
    c.group_token_init = j.value("group_token_init", c.group_token_init);
    c.expert_hidden = j.value("expert_hidden", c.expert_hidden);
    c.pair_hidden = j.value("pair_hidden", c.pair_hidden);
    c.pair_init = j.value("pair_init", c.pair_init);
    c.seed = j.value("seed", c.seed);
    c.renorm_topk = j.value("renorm_topk", c.renorm_topk);
    c.stop_gradient_gate = j.value("stop_gradient_gate", c.stop_gradient_gate);
    c.cosine_sim = j.value("cosine_sim", c.cosine_sim);
    c.freeze_class_tokens = j.value("freeze_class_tokens", c.freeze_class_tokens);
    c.use_gavr = j.value("use_gavr", c.use_gavr);
    c.use_tcpg = j.value("use_tcpg", c.use_tcpg);
    c.use_dgp_group = j.value("use_dgp_group", c.use_dgp_group);
    c.use_gape = j.value("use_gape", c.use_gape);
    return c;
  }
};

// Same exact-erf GELU the tape applies, for computing init-time offsets.
inline double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

// Seeded per-tensor initialization; every draw depends only on (name, seed)
// so adding a tensor never shifts another tensor's values.
inline ParamStore init_params(const ModelConfig& cfg, const TextBackend& backend, const Vocabulary& vocab) {
  cfg.validate();
  check_contract(vocab.n_s() == cfg.n_s && vocab.n_o() == cfg.n_o, "init_params: vocabulary size mismatch");
  check_contract(backend.token_dim() == cfg.token_dim, "init_params: token width mismatch");
  ParamStore p;
  auto gaussian = [&](const std::string& name, Eigen::Index r, Eigen::Index c, double sigma) {
    Rng rng(fnv1a(name, cfg.seed));
    p.add(name, rng.gaussian_matrix(r, c, sigma));
  };
  auto zeros = [&](const std::string& name, Eigen::Index r, Eigen::Index c) { p.add(name, Mat::Zero(r, c)); };

  for (Branch b : {Branch::state, Branch::object}) {
    const BranchConfig bc = cfg.branch(b);
    const std::string s = bc.scope();
    const double sd = 1.0 / std::sqrt(static_cast<double>(cfg.d));
    gaussian(s + ".decomposer.Wq", cfg.d, cfg.d, sd);
    gaussian(s + ".decomposer.Wk", cfg.d, cfg.d, sd);
    gaussian(s + ".decomposer.Wv", cfg.d, cfg.d, sd);
    zeros(s + ".decomposer.Wo", cfg.d, cfg.d);  // residual identity at init
    gaussian(s + ".router.W", cfg.d, bc.k, sd);
    zeros(s + ".router.b", 1, bc.k);
    for (int j = 0; j < bc.k; ++j) {
      const std::string e = s + ".expert" + std::to_string(j) + ".";
      gaussian(e + "W1", cfg.d, bc.hidden(), sd);
      zeros(e + "b1", 1, bc.hidden());
      gaussian(e + "W2", bc.hidden(), cfg.d, 1.0 / std::sqrt(static_cast<double>(bc.hidden())));
      zeros(e + "b2", 1, cfg.d);
    }
    p.add(s + ".beta", Mat::Constant(1, 1, cfg.beta_init));
  }

  gaussian("dgp.ctx_state", cfg.m, cfg.token_dim, cfg.ctx_token_std);
  gaussian("dgp.ctx_object", cfg.m, cfg.token_dim, cfg.ctx_token_std);
  gaussian("dgp.ctx_pair", cfg.m, cfg.token_dim, cfg.ctx_token_std);
  Mat cls_s(cfg.n_s, cfg.token_dim), cls_o(cfg.n_o, cfg.token_dim);
  for (int i = 0; i < cfg.n_s; ++i)
    cls_s.row(i) = backend.class_word_embedding(vocab.states[static_cast<std::size_t>(i)]).transpose();
  for (int i = 0; i < cfg.n_o; ++i)
    cls_o.row(i) = backend.class_word_embedding(vocab.objects[static_cast<std::size_t>(i)]).transpose();
  // The k-means warm start derives group tokens from word-embedding clusters
  // — text-statistic group discovery, the same resource the co-occurrence
  // graph encodes — so ablating the graph also reverts it.
  if (cfg.group_token_init == "kmeans" && cfg.use_tcpg) {
    p.add("dgp.group_state", kmeans_rows(cls_s, cfg.k_s, fnv1a("group_state", cfg.seed)).centroids);
    p.add("dgp.group_object", kmeans_rows(cls_o, cfg.k_o, fnv1a("group_object", cfg.seed)).centroids);
  } else {
    gaussian("dgp.group_state", cfg.k_s, cfg.token_dim, cfg.group_token_std);
    gaussian("dgp.group_object", cfg.k_o, cfg.token_dim, cfg.group_token_std);
  }
  p.add("dgp.class_state", std::move(cls_s));
  p.add("dgp.class_object", std::move(cls_o));
  if (cfg.freeze_class_tokens) {
    p.frozen.insert("dgp.class_state");
    p.frozen.insert("dgp.class_object");
  }

  const PairBranchConfig pb = cfg.pair_branch();
  const int H = pb.hidden_width();
  if (cfg.pair_init == "mean" && H >= cfg.d) {
    // Averaging operating point: the first d hidden units compute
    // gelu((x_s_i + x_o_i) / 2 + c) ~ mean_i + c (c keeps the GELU in its
    // identity region), W2 reads them back out and b2 cancels c, so the
    // projector starts as the halves' mean. Spare hidden units get small
    // input weights and zero output weights: capacity that wakes up through
    // gradients without perturbing the initial function.
    const double c = 10.0;
    Mat W1 = Mat::Zero(2 * cfg.d, H);
    W1.block(0, 0, cfg.d, cfg.d) = 0.5 * Mat::Identity(cfg.d, cfg.d);
    W1.block(cfg.d, 0, cfg.d, cfg.d) = 0.5 * Mat::Identity(cfg.d, cfg.d);
    if (H > cfg.d)
      W1.rightCols(H - cfg.d) = Rng(fnv1a("gape.pair.W1", cfg.seed)).gaussian_matrix(2 * cfg.d, H - cfg.d, 0.02);
    Mat b1 = Mat::Zero(1, H);
    b1.leftCols(cfg.d).setConstant(c);
    Mat W2 = Mat::Zero(H, cfg.d);
    W2.block(0, 0, cfg.d, cfg.d) = Mat::Identity(cfg.d, cfg.d);
    Mat b2 = Mat::Constant(1, cfg.d, -gelu_scalar(c));
    p.add("gape.pair.W1", std::move(W1));
    p.add("gape.pair.b1", std::move(b1));
    p.add("gape.pair.W2", std::move(W2));
    p.add("gape.pair.b2", std::move(b2));
  } else {
    gaussian("gape.pair.W1", 2 * cfg.d, H, 1.0 / std::sqrt(2.0 * cfg.d));
    zeros("gape.pair.b1", 1, H);
    gaussian("gape.pair.W2", H, cfg.d, 1.0 / std::sqrt(static_cast<double>(H)));
    zeros("gape.pair.b2", 1, cfg.d);
  }
  return p;
}

struct StepBatch {
  Mat features;                  // B x d frozen encoder outputs
  std::vector<int> state_labels;
  std::vector<int> object_labels;
  std::vector<int> pair_cols;  // index into the seen-pair ordering
};

struct StepOutputs {
  ad::Var total;
  LossBreakdown losses;
  GateDistribution state_gate;
  GateDistribution object_gate;
};

// One full training forward: branches (with graph-guided aggregation),
// pair enhancement, per-step text bank, and the four losses.
inline StepOutputs train_step_forward(ad::Tape& tape, const LeafMap& leafs, const ModelConfig& cfg,
                                      const TextBackend& backend, const StepBatch& batch,
                                      const std::vector<PairIdx>& seen_pairs, const CompatibilityGraph* graph) {
  cfg.validate();
  const auto b = batch.features.rows();
  check_contract(b >= 1 && batch.state_labels.size() == static_cast<std::size_t>(b) &&
                     batch.object_labels.size() == static_cast<std::size_t>(b) &&
                     batch.pair_cols.size() == static_cast<std::size_t>(b),
                 "train_step_forward: batch arrays disagree");
  if (cfg.use_tcpg && cfg.use_gavr) check_contract(graph != nullptr, "train_step_forward: graph required");

  ad::Var img = tape.constant(batch.features);
  StepOutputs out;

  BranchForward fs, fo;
  if (cfg.use_gavr) {
    const RelationMap rm_s =
        cfg.use_tcpg ? relation_map_for_batch(batch.state_labels, batch.object_labels, *graph, Branch::state)
                     : identity_relation_map(b);
    const RelationMap rm_o =
        cfg.use_tcpg ? relation_map_for_batch(batch.state_labels, batch.object_labels, *graph, Branch::object)
                     : identity_relation_map(b);
    fs = branch_forward(tape, leafs, img, cfg.branch(Branch::state), &rm_s, true);
    fo = branch_forward(tape, leafs, img, cfg.branch(Branch::object), &rm_o, true);
  } else {
    fs = branch_forward_plain(tape, leafs, img, cfg.branch(Branch::state));
    fo = branch_forward_plain(tape, leafs, img, cfg.branch(Branch::object));
  }
  out.state_gate = fs.gate_values;
  out.object_gate = fo.gate_values;

  // Removing the pair enhancement removes the whole module — confidence
  // mixing and the projector — leaving the parameter-free mean of the two
  // fused branch features as the pair representation.
  ad::Var x_p;
  if (cfg.use_gape) {
    const CompatibilityMap cm_s = compatibility_map(fs.gate_values.confidences, batch.state_labels, cfg.zeta);
    const CompatibilityMap cm_o = compatibility_map(fo.gate_values.confidences, batch.object_labels, cfg.zeta);
    x_p = pair_forward(tape, leafs, fs.fused, fo.fused, &cm_s, &cm_o, true, cfg.pair_branch());
  } else {
    x_p = tape.scale(tape.add(fs.fused, fo.fused), 0.5);
  }
  TextBankVars bank = build_text_bank(tape, leafs, backend, cfg.prompts(), seen_pairs);
  ad::Var l_base = infonce_loss(tape, img, bank.pair_reps, batch.pair_cols, cfg.tau, cfg.cosine_sim, "base_loss");
  ad::Var l_state = grouped_infonce_loss(tape, fs.fused, bank.state_reps, fs.gate, batch.state_labels, cfg.k_s,
                                         cfg.tau, cfg.cosine_sim, "state_loss");
  ad::Var l_object = grouped_infonce_loss(tape, fo.fused, bank.object_reps, fo.gate, batch.object_labels, cfg.k_o,
                                          cfg.tau, cfg.cosine_sim, "object_loss");
  ad::Var l_pair = infonce_loss(tape, x_p, bank.pair_reps, batch.pair_cols, cfg.tau, cfg.cosine_sim, "pair_loss");
  out.total = total_loss(tape, l_base, l_state, l_object, l_pair, cfg.lambda, cfg.tau, &out.losses);
  return out;
}

struct InferenceOutputs {
  Mat x_s;
  Mat x_o;
  Mat x_p;
  GateDistribution state_gate;
  GateDistribution object_gate;
};

// Inference forward: no relation or compatibility maps (they require labels).
inline InferenceOutputs infer_forward(const ModelConfig& cfg, const ParamStore& params, const Mat& features) {
  ad::Tape tape;
  LeafMap leafs;
  for (const auto& [name, value] : params.tensors) leafs.vars.emplace(name, tape.constant(value));
  ad::Var img = tape.constant(features);
  BranchForward fs = cfg.use_gavr ? branch_forward(tape, leafs, img, cfg.branch(Branch::state), nullptr, false)
                                  : branch_forward_plain(tape, leafs, img, cfg.branch(Branch::state));
  BranchForward fo = cfg.use_gavr ? branch_forward(tape, leafs, img, cfg.branch(Branch::object), nullptr, false)
                                  : branch_forward_plain(tape, leafs, img, cfg.branch(Branch::object));
  ad::Var x_p = cfg.use_gape ? pair_forward(tape, leafs, fs.fused, fo.fused, nullptr, nullptr, false, cfg.pair_branch())
                             : tape.scale(tape.add(fs.fused, fo.fused), 0.5);
  InferenceOutputs out;
  out.x_s = fs.fused.value();
  out.x_o = fo.fused.value();
  out.x_p = x_p.value();
  out.state_gate = fs.gate_values;
  out.object_gate = fo.gate_values;
  return out;
}

// Evaluation-time text bank values over an arbitrary pair ordering.
inline TextBankValues build_text_bank_values(const ModelConfig& cfg, const ParamStore& params,
                                             const TextBackend& backend, const std::vector<PairIdx>& pairs) {
  ad::Tape tape;
  LeafMap leafs;
  for (const auto& [name, value] : params.tensors) leafs.vars.emplace(name, tape.constant(value));
  TextBankVars bank = build_text_bank(tape, leafs, backend, cfg.prompts(), pairs);
  return TextBankValues{bank.state_reps.value(), bank.object_reps.value(), bank.pair_reps.value()};
}

inline constexpr std::int64_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const ParamStore& params, const Adam& adam,
                            const nlohmann::json& config, std::int64_t epoch) {
  Archive a;
  a.put("kind", std::string("checkpoint"));
  a.put_scalar("checkpoint.version", static_cast<double>(kCheckpointVersion));
  a.put("config.json", config.dump());
  a.put_scalar("epoch", static_cast<double>(epoch));
  a.put_scalar("adam.step", static_cast<double>(adam.step));
  a.put_scalar("adam.lr", adam.lr);
  std::vector<std::int64_t> frozen_marks;
  for (const auto& name : params.names()) {
    a.put("param." + name, params.at(name));
    frozen_marks.push_back(params.trainable(name) ? 0 : 1);
    auto mi = adam.m.find(name);
    if (mi != adam.m.end()) {
      a.put("adam.m." + name, mi->second);
      a.put("adam.v." + name, adam.v.at(name));
    }
  }
  a.put("param.frozen_marks", frozen_marks);
  a.save(path);
}

struct LoadedCheckpoint {
  ParamStore params;
  Adam adam;
  nlohmann::json config;
  std::int64_t epoch = 0;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  Archive a = Archive::load(path);
  check_contract(a.str("kind") == "checkpoint", "archive is not a checkpoint");
  const auto version = static_cast<std::int64_t>(a.scalar("checkpoint.version"));
  if (version != kCheckpointVersion)
    throw ValidationError("checkpoint version " + std::to_string(version) + " does not match expected " +
                          std::to_string(kCheckpointVersion));
  LoadedCheckpoint out;
  out.config = nlohmann::json::parse(a.str("config.json"));
  out.epoch = static_cast<std::int64_t>(a.scalar("epoch"));
  out.adam.step = static_cast<std::int64_t>(a.scalar("adam.step"));
  out.adam.lr = a.scalar("adam.lr");
  std::vector<std::string> param_names;
  for (const auto& name : a.names()) {
    if (name.rfind("param.", 0) == 0 && name != "param.frozen_marks")
      param_names.push_back(name.substr(6));
  }
  for (const auto& name : param_names) {
    out.params.add(name, a.mat("param." + name));
    if (a.has("adam.m." + name)) {
      out.adam.m.emplace(name, a.mat("adam.m." + name));
      out.adam.v.emplace(name, a.mat("adam.v." + name));
    }
  }
  const auto marks = a.ints("param.frozen_marks");
  check_contract(marks.size() == param_names.size(), "checkpoint frozen marks disagree with parameters");
  for (std::size_t i = 0; i < marks.size(); ++i)
    if (marks[i]) out.params.frozen.insert(param_names[i]);
  return out;
}

}  // namespace hgrl
