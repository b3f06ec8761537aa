#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hgrl/metrics.hpp"
#include "hgrl/model.hpp"
#include "hgrl/scoring.hpp"

namespace hgrl {

// Everything an evaluation pass needs, resolved once per (split, sample set):
// cached frozen features, each sample's column in the target space, the
// unseen-column mask, and (when ground-truth groups are known, i.e. on the
// synthetic benchmark) each sample's true state/object group for purity.
struct EvalInputs {
  Mat features;
  std::vector<PairIdx> target;
  std::vector<int> label_cols;
  std::vector<bool> col_unseen;
  std::vector<int> state_true_group;   // empty when ground truth is unknown
  std::vector<int> object_true_group;  // empty when ground truth is unknown
  World world = World::closed;
  int grid_size = 1000;
};

inline EvalInputs build_eval_inputs(const std::vector<Sample>& samples, const Mat& features,
                                    const CompositionSplit& split, const Vocabulary& vocab,
                                    const std::vector<std::int64_t>* state_groups = nullptr,
                                    const std::vector<std::int64_t>* object_groups = nullptr) {
  check_contract(static_cast<std::size_t>(features.rows()) == samples.size(),
                 "eval: feature rows disagree with the sample count");
  check_contract(!samples.empty(), "eval: empty sample set");
  EvalInputs in;
  in.features = features;
  in.world = split.world;
  in.target = split.target_space(vocab.n_s(), vocab.n_o());
  std::map<PairIdx, int> col;
  for (std::size_t c = 0; c < in.target.size(); ++c) col[in.target[c]] = static_cast<int>(c);
  const std::set<PairIdx> seen(split.seen.begin(), split.seen.end());
  in.col_unseen.assign(in.target.size(), false);
  for (std::size_t c = 0; c < in.target.size(); ++c) in.col_unseen[c] = !seen.count(in.target[c]);
  for (const Sample& s : samples) {
    const auto it = col.find({s.state_idx, s.object_idx});
    if (it == col.end())
      throw ContractError("eval: sample labeled with a pair outside the target space (state " +
                          std::to_string(s.state_idx) + ", object " + std::to_string(s.object_idx) + ")");
    in.label_cols.push_back(it->second);
    if (state_groups) in.state_true_group.push_back(static_cast<int>((*state_groups)[static_cast<std::size_t>(s.state_idx)]));
    if (object_groups)
      in.object_true_group.push_back(static_cast<int>((*object_groups)[static_cast<std::size_t>(s.object_idx)]));
  }
  return in;
}

struct EvalResult {
  MetricsReport metrics;
  EvalCurve curve;
  double purity_state = -1.0;   // -1 when ground-truth groups were not supplied
  double purity_object = -1.0;
};

// One evaluation pass: inference forward, text bank over the target space,
// fused scores, calibration sweep, metrics — plus router purity when the
// benchmark knows its ground-truth groups.
inline EvalResult run_eval(const ModelConfig& cfg, const ParamStore& params, const TextBackend& text,
                           const EvalInputs& in) {
  const InferenceOutputs inf = infer_forward(cfg, params, in.features);
  const TextBankValues bank = build_text_bank_values(cfg, params, text, in.target);
  const ScoreTensor scores = score_batch(in.features, inf.x_s, inf.x_o, inf.x_p, bank, in.target, cfg.n_s, cfg.n_o,
                                         cfg.k_s, cfg.k_o, cfg.tau, cfg.cosine_sim);
  EvalResult r;
  r.curve = sweep_curve(scores.fused, in.label_cols, in.col_unseen, in.grid_size);
  r.metrics = compute_metrics(r.curve, in.world);
  if (!in.state_true_group.empty()) r.purity_state = cluster_purity(inf.state_gate, in.state_true_group);
  if (!in.object_true_group.empty()) r.purity_object = cluster_purity(inf.object_gate, in.object_true_group);
  return r;
}

namespace detail {

// All metric/curve files are written to a temp path and renamed so a failed
// run never leaves a partial file behind.
inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw IoError("cannot open '" + tmp.string() + "' for writing");
    f << content;
    if (!f) throw IoError("short write to '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

// Flat key=value metrics file; one key per line, fixed order.
inline void write_metrics_file(const std::filesystem::path& path, const EvalResult& r,
                               const std::map<std::string, std::string>& extra = {}) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "S=" << r.metrics.S << "\n"
     << "U=" << r.metrics.U << "\n"
     << "HM=" << r.metrics.HM << "\n"
     << "AUC=" << r.metrics.AUC << "\n"
     << "world=" << world_name(r.metrics.world) << "\n";
  if (r.purity_state >= 0.0) os << "purity_state=" << r.purity_state << "\n";
  if (r.purity_object >= 0.0) os << "purity_object=" << r.purity_object << "\n";
  for (const auto& [k, v] : extra) os << k << "=" << v << "\n";
  detail::write_atomically(path, os.str());
}

inline void write_curve_csv(const std::filesystem::path& path, const EvalCurve& curve) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(9);
  os << "bias,seen_acc,unseen_acc\n";
  for (std::size_t i = 0; i < curve.bias.size(); ++i)
    os << curve.bias[i] << "," << curve.seen_acc[i] << "," << curve.unseen_acc[i] << "\n";
  detail::write_atomically(path, os.str());
}

inline std::map<std::string, std::string> read_metrics_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open metrics file '" + path.string() + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("metrics file line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace hgrl
