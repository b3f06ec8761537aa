#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hgrl/adapter.hpp"
#include "hgrl/config.hpp"
#include "hgrl/cooccur.hpp"
#include "hgrl/eval.hpp"
#include "hgrl/report.hpp"
#include "hgrl/synthetic.hpp"
#include "hgrl/train.hpp"

namespace hgrl {

// A resolved data context: dataset, frozen encoder pair, per-class word
// vectors for the co-occurrence graph, and (synthetic only) the ground-truth
// groups that purity is scored against.
struct Session {
  Dataset data;
  std::shared_ptr<void> backend_holder;
  const ImageBackend* image = nullptr;
  const TextBackend* text = nullptr;
  Mat state_words;
  Mat object_words;
  std::vector<std::int64_t> state_groups;   // empty when ground truth is unknown
  std::vector<std::int64_t> object_groups;  // empty when ground truth is unknown
};

// Builds the session and completes the model config against the loaded data
// (vocabulary sizes and encoder widths are data facts, not free settings).
inline Session make_session(RunConfig& cfg) {
  Session s;
  if (cfg.profile == "synthetic") {
    SyntheticDataset ds = generate_synthetic(cfg.synthetic);
    auto backend = std::make_shared<ToyBackend>(ToyBackend::for_synthetic(ds));
    s.image = backend.get();
    s.text = backend.get();
    s.backend_holder = std::move(backend);
    s.state_words = ds.state_words;
    s.object_words = ds.object_words;
    s.state_groups = ds.state_groups;
    s.object_groups = ds.object_groups;
    s.data = std::move(ds.data);
  } else {
    s.data = load_dataset(cfg.dataset_root, cfg.world);
    auto backend = std::make_shared<FeatureArchiveBackend>(FeatureArchiveBackend::load(cfg.feature_archive));
    s.image = backend.get();
    s.text = backend.get();
    s.backend_holder = std::move(backend);
    s.state_words.resize(s.data.vocab.n_s(), s.text->token_dim());
    for (int i = 0; i < s.data.vocab.n_s(); ++i)
      s.state_words.row(i) = s.text->class_word_embedding(s.data.vocab.states[static_cast<std::size_t>(i)]).transpose();
    s.object_words.resize(s.data.vocab.n_o(), s.text->token_dim());
    for (int i = 0; i < s.data.vocab.n_o(); ++i)
      s.object_words.row(i) =
          s.text->class_word_embedding(s.data.vocab.objects[static_cast<std::size_t>(i)]).transpose();
  }
  s.data.split.world = cfg.world;
  cfg.model.n_s = s.data.vocab.n_s();
  cfg.model.n_o = s.data.vocab.n_o();
  cfg.model.d = static_cast<int>(s.image->dim());
  cfg.model.token_dim = static_cast<int>(s.text->token_dim());
  cfg.model.validate();
  return s;
}

// ---------------------------------------------------------------------------
// prepare-graph: build (or reuse) the cached co-occurrence graph. The cache
// key hashes the word vectors and zeta, so a changed vocabulary or threshold
// lands in a new file and an unchanged one is a hit.

struct GraphCacheResult {
  CompatibilityGraph graph;
  std::filesystem::path path;
  bool cache_hit = false;
};

inline std::uint64_t graph_cache_key(const Mat& state_words, const Mat& object_words, double zeta) {
  std::uint64_t h = fnv1a("graph-cache");
  h = fnv1a(state_words.data(), sizeof(double) * static_cast<std::size_t>(state_words.size()), h);
  h = fnv1a(object_words.data(), sizeof(double) * static_cast<std::size_t>(object_words.size()), h);
  h = fnv1a(&zeta, sizeof(zeta), h);
  return h;
}

inline GraphCacheResult prepare_graph(const Session& s, const RunConfig& cfg) {
  GraphCacheResult r;
  const std::uint64_t key = graph_cache_key(s.state_words, s.object_words, cfg.model.zeta);
  std::ostringstream name;
  name << "graph-" << std::hex << key << ".hgrl";
  const std::filesystem::path dir = std::filesystem::path(cfg.out_dir);
  r.path = dir / name.str();
  if (std::filesystem::exists(r.path)) {
    Archive a = Archive::load(r.path.string());
    check_contract(a.str("kind") == "graph", "graph cache holds a different artifact kind");
    r.graph.M_s = a.mat("M_s");
    r.graph.M_o = a.mat("M_o");
    r.graph.zeta = a.scalar("zeta");
    r.graph.validate();
    r.cache_hit = true;
    return r;
  }
  r.graph = build_compatibility_graph(s.state_words, s.object_words, cfg.model.zeta);
  std::filesystem::create_directories(dir);
  Archive a;
  a.put("kind", std::string("graph"));
  a.put("M_s", r.graph.M_s);
  a.put("M_o", r.graph.M_o);
  a.put_scalar("zeta", r.graph.zeta);
  const std::filesystem::path tmp = r.path.string() + ".tmp";
  a.save(tmp.string());
  std::filesystem::rename(tmp, r.path);
  return r;
}

// ---------------------------------------------------------------------------
// train: cache frozen features, train, and leave checkpoint + loss log +
// resolved-config echo in the output directory.

struct TrainRun {
  TrainOutcome outcome;
  Mat train_features;
  Mat val_features;
};

inline TrainRun run_train(RunConfig cfg, Session& s, const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  const CompatibilityGraph graph = prepare_graph(s, cfg).graph;
  TrainRun r;
  r.train_features = encode_batch(*s.image, s.data.train);
  if (!s.data.val.empty()) r.val_features = encode_batch(*s.image, s.data.val);
  TrainConfig tc = cfg.train;
  tc.out_dir = cfg.out_dir;
  write_config_echo(cfg.out_dir, cfg);
  r.outcome = fit(cfg.model, tc, *s.text, s.data, r.train_features, &graph,
                  s.data.val.empty() ? nullptr : &r.val_features, on_epoch);
  return r;
}

// ---------------------------------------------------------------------------
// evaluate: score a checkpoint on the test split under the configured world.

struct EvalRun {
  EvalResult result;
  std::filesystem::path metrics_path;
  std::filesystem::path curve_path;
};

inline EvalRun run_evaluate(const RunConfig& cfg, Session& s, const ParamStore& params,
                            std::uint64_t checkpoint_hash) {
  ModelConfig mc = cfg.model;
  EvalInputs in = build_eval_inputs(s.data.test, encode_batch(*s.image, s.data.test), s.data.split, s.data.vocab,
                                    s.state_groups.empty() ? nullptr : &s.state_groups,
                                    s.object_groups.empty() ? nullptr : &s.object_groups);
  EvalRun r;
  r.result = run_eval(mc, params, *s.text, in);
  const std::string suffix = world_name(cfg.world);
  r.metrics_path = std::filesystem::path(cfg.out_dir) / ("metrics-" + suffix + ".txt");
  r.curve_path = std::filesystem::path(cfg.out_dir) / ("curve-" + suffix + ".csv");
  std::ostringstream hash;
  hash << std::hex << checkpoint_hash;
  write_metrics_file(r.metrics_path, r.result, {{"checkpoint", hash.str()}});
  write_curve_csv(r.curve_path, r.result.curve);
  return r;
}

// ---------------------------------------------------------------------------
// sweep: grid over {k_s, k_o, lambda, K}; one train+evaluate per cell,
// results as CSV rows.

struct SweepCell {
  int k_s, k_o, K;
  double lambda;
  MetricsReport metrics;
};

inline std::vector<SweepCell> run_sweep(const RunConfig& base, const std::vector<int>& ks_grid,
                                        const std::vector<int>& ko_grid, const std::vector<double>& lambda_grid,
                                        const std::vector<int>& K_grid) {
  check_contract(!ks_grid.empty() && !ko_grid.empty() && !lambda_grid.empty() && !K_grid.empty(),
                 "sweep: every grid axis needs at least one value");
  std::vector<SweepCell> cells;
  for (int ks : ks_grid)
    for (int ko : ko_grid)
      for (double lm : lambda_grid)
        for (int K : K_grid) {
          RunConfig cfg = base;
          cfg.model.k_s = ks;
          cfg.model.k_o = ko;
          cfg.model.lambda = lm;
          cfg.model.K = std::min({K, ks, ko});
          cfg.train.out_dir.clear();  // sweep cells train in memory
          std::ostringstream cell_dir;
          cell_dir << base.out_dir << "/cell-ks" << ks << "-ko" << ko << "-lm" << lm << "-K" << cfg.model.K;
          cfg.out_dir = cell_dir.str();
          Session s = make_session(cfg);
          TrainRun tr = run_train(cfg, s);
          EvalRun ev = run_evaluate(cfg, s, tr.outcome.params, 0);
          cells.push_back({ks, ko, cfg.model.K, lm, ev.result.metrics});
        }
  return cells;
}

inline void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepCell>& cells) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "k_s,k_o,K,lambda,S,U,HM,AUC\n";
  for (const auto& c : cells)
    os << c.k_s << "," << c.k_o << "," << c.K << "," << c.lambda << "," << c.metrics.S << "," << c.metrics.U << ","
       << c.metrics.HM << "," << c.metrics.AUC << "\n";
  detail::write_atomically(path, os.str());
}

// ---------------------------------------------------------------------------
// report: turn a finished run directory into human-readable artifacts —
// an SVG of each calibration curve, an SVG of the training loss, and a
// plain-text summary naming the words nearest each learned group token.

inline std::vector<std::filesystem::path> run_report(const RunConfig& cfg, Session& s) {
  const std::filesystem::path dir(cfg.out_dir);
  std::vector<std::filesystem::path> written;

  for (const char* world : {"closed", "open"}) {
    const auto csv = dir / (std::string("curve-") + world + ".csv");
    if (!std::filesystem::exists(csv)) continue;
    const auto svg_path = dir / (std::string("curve-") + world + ".svg");
    detail::write_atomically(svg_path, render_curve_svg(read_curve_csv(csv), world));
    written.push_back(svg_path);
  }

  if (const auto log = dir / "loss_log.ndjson"; std::filesystem::exists(log)) {
    const auto svg_path = dir / "loss.svg";
    detail::write_atomically(svg_path, render_loss_svg(read_loss_log(log)));
    written.push_back(svg_path);
  }

  if (const auto ckpt = dir / "checkpoint.hgrl"; std::filesystem::exists(ckpt)) {
    LoadedCheckpoint loaded = load_checkpoint(ckpt.string());
    // Compare in token space: group tokens are token-width, and the backend
    // embedding is the token-space image of each class word for both backends.
    auto token_matrix = [&](const std::vector<std::string>& names) {
      Mat m(static_cast<Eigen::Index>(names.size()), s.text->token_dim());
      for (std::size_t i = 0; i < names.size(); ++i)
        m.row(static_cast<Eigen::Index>(i)) = s.text->class_word_embedding(names[i]).transpose();
      return m;
    };
    std::string txt = group_word_report(loaded.params.at("dgp.group_state"), token_matrix(s.data.vocab.states),
                                        s.data.vocab.states, "state");
    txt += group_word_report(loaded.params.at("dgp.group_object"), token_matrix(s.data.vocab.objects),
                             s.data.vocab.objects, "object");
    const auto txt_path = dir / "groups.txt";
    detail::write_atomically(txt_path, txt);
    written.push_back(txt_path);
  }

  check_contract(!written.empty(), "report: no run artifacts found in '" + cfg.out_dir + "'");
  return written;
}

}  // namespace hgrl
