#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "hgrl/cooccur.hpp"
#include "hgrl/eval.hpp"
#include "hgrl/metrics.hpp"
#include "hgrl/model.hpp"
#include "hgrl/optim.hpp"

namespace hgrl {

struct TrainConfig {
  int epochs = 20;
  double lr = 5e-4;
  int batch_size = 180;
  std::string lr_schedule = "cosine";  // "cosine" | "constant"
  // Early stopping on validation HM: stop after this many epochs without
  // improvement and return the best-epoch parameters. 0 disables it and the
  // final-epoch parameters are returned.
  int early_stop_patience = 0;
  // Write loss_log.ndjson and checkpoint.hgrl under out_dir; empty disables
  // all file output (library callers and tests mostly train in memory).
  std::string out_dir;
  int checkpoint_every = 1;  // epochs between checkpoint rewrites

  void validate() const {
    check_contract(epochs >= 1, "train: epochs must be >= 1");
    check_contract(lr > 0.0, "train: lr must be positive");
    check_contract(batch_size >= 2, "train: batch size must be >= 2 (contrastive losses need pairs)");
    check_contract(lr_schedule == "cosine" || lr_schedule == "constant",
                   "train: lr_schedule must be 'cosine' or 'constant'");
    check_contract(early_stop_patience >= 0, "train: patience must be >= 0");
    check_contract(checkpoint_every >= 1, "train: checkpoint_every must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"epochs", epochs},
            {"lr", lr},
            {"batch_size", batch_size},
            {"lr_schedule", lr_schedule},
            {"early_stop_patience", early_stop_patience},
            {"out_dir", out_dir},
            {"checkpoint_every", checkpoint_every}};
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_schedule = j.value("lr_schedule", c.lr_schedule);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    return c;
  }
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  LossBreakdown mean_components;
  double val_hm = -1.0;  // -1 when validation did not run this epoch
};

struct TrainOutcome {
  ParamStore params;
  Adam adam;
  int epochs_run = 0;
  bool aborted_nonfinite = false;
  int best_epoch = -1;      // epoch whose params are returned under early stopping
  double best_val_hm = -1.0;
  std::vector<EpochRecord> history;
};

namespace detail {

inline double scheduled_lr(const TrainConfig& tc, int epoch) {
  if (tc.lr_schedule == "constant") return tc.lr;
  return tc.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch - 1) /
                                       static_cast<double>(tc.epochs)));
}

}  // namespace detail

// Full training loop: seeded shuffling over cached frozen image features,
// per-step loss records, per-epoch checkpoints, optional early stopping on
// validation HM, and a non-finite abort that retains the last finite epoch's
// parameters. The shuffle stream, batch windows, schedule, and optimizer
// state are all functions of (config, seed) only, so a rerun reproduces the
// same parameters bit for bit.
inline TrainOutcome fit(const ModelConfig& cfg, const TrainConfig& tc, const TextBackend& text,
                        const Dataset& data, const Mat& train_features, const CompatibilityGraph* graph,
                        const Mat* val_features = nullptr,
                        const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  tc.validate();
  check_contract(static_cast<std::size_t>(train_features.rows()) == data.train.size(),
                 "fit: cached feature rows disagree with the training samples");
  check_contract(!data.train.empty(), "fit: empty training set");

  std::map<PairIdx, int> seen_col;
  for (std::size_t i = 0; i < data.split.seen.size(); ++i) seen_col[data.split.seen[i]] = static_cast<int>(i);

  ParamStore params = init_params(cfg, text, data.vocab);
  Adam adam;
  adam.lr = tc.lr;

  // Validation inputs for early stopping (seen + val-only pairs, closed world).
  std::optional<EvalInputs> val_inputs;
  if (tc.early_stop_patience > 0) {
    check_contract(val_features != nullptr && !data.val.empty(),
                   "fit: early stopping needs validation samples and features");
    val_inputs = build_eval_inputs(data.val, *val_features, data.val_split(), data.vocab);
  }

  const bool writing = !tc.out_dir.empty();
  std::ofstream loss_log;
  if (writing) {
    std::filesystem::create_directories(tc.out_dir);
    loss_log.open(std::filesystem::path(tc.out_dir) / "loss_log.ndjson", std::ios::trunc);
    if (!loss_log) throw IoError("cannot open loss log under '" + tc.out_dir + "'");
  }
  auto write_checkpoint = [&](std::int64_t epoch) {
    if (!writing) return;
    const auto dir = std::filesystem::path(tc.out_dir);
    const auto tmp = dir / "checkpoint.hgrl.tmp";
    save_checkpoint(tmp.string(), params, adam, cfg.to_json(), epoch);
    std::filesystem::rename(tmp, dir / "checkpoint.hgrl");
  };

  TrainOutcome out;
  Rng shuffler(fnv1a("train_shuffle", cfg.seed));
  const std::size_t n = data.train.size();
  std::vector<std::size_t> order(n);

  ParamStore last_good = params;
  Adam last_good_adam = adam;
  ParamStore best_params = params;
  Adam best_adam = adam;
  int stale_epochs = 0;

  for (int ep = 1; ep <= tc.epochs; ++ep) {
    adam.lr = detail::scheduled_lr(tc, ep);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffler.shuffle(order);

    EpochRecord rec;
    rec.epoch = ep;
    rec.lr = adam.lr;
    int steps = 0;
    bool finite = true;
    for (std::size_t off = 0; off < n && finite; off += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t b = std::min(static_cast<std::size_t>(tc.batch_size), n - off);
      if (b < 2) continue;  // contrastive losses are undefined on singletons
      StepBatch sb;
      sb.features.resize(static_cast<Eigen::Index>(b), train_features.cols());
      for (std::size_t i = 0; i < b; ++i) {
        const Sample& s = data.train[order[off + i]];
        sb.features.row(static_cast<Eigen::Index>(i)) = train_features.row(static_cast<Eigen::Index>(order[off + i]));
        sb.state_labels.push_back(s.state_idx);
        sb.object_labels.push_back(s.object_idx);
        sb.pair_cols.push_back(seen_col.at({s.state_idx, s.object_idx}));
      }
      ad::Tape tape;
      LeafMap leafs = make_leafs(tape, params);
      const StepOutputs so = train_step_forward(tape, leafs, cfg, text, sb, data.split.seen, graph);
      if (!std::isfinite(so.losses.total)) {
        finite = false;
        break;
      }
      tape.backward(so.total);
      adam.update(params, leafs);
      rec.mean_loss += so.losses.total;
      rec.mean_components.base += so.losses.base;
      rec.mean_components.state += so.losses.state;
      rec.mean_components.object += so.losses.object;
      rec.mean_components.pair += so.losses.pair;
      ++steps;
      if (writing) {
        loss_log << nlohmann::json{{"epoch", ep},       {"step", steps},
                                   {"lr", adam.lr},     {"total", so.losses.total},
                                   {"base", so.losses.base}, {"state", so.losses.state},
                                   {"object", so.losses.object}, {"pair", so.losses.pair}}
                        .dump()
                 << "\n";
      }
    }
    if (!finite) {
      params = last_good;
      adam = last_good_adam;
      out.aborted_nonfinite = true;
      break;
    }
    const double inv = 1.0 / static_cast<double>(std::max(steps, 1));
    rec.mean_loss *= inv;
    rec.mean_components.base *= inv;
    rec.mean_components.state *= inv;
    rec.mean_components.object *= inv;
    rec.mean_components.pair *= inv;
    out.epochs_run = ep;
    last_good = params;
    last_good_adam = adam;

    if (val_inputs) {
      const EvalResult vr = run_eval(cfg, params, text, *val_inputs);
      rec.val_hm = vr.metrics.HM;
      if (vr.metrics.HM > out.best_val_hm) {
        out.best_val_hm = vr.metrics.HM;
        out.best_epoch = ep;
        best_params = params;
        best_adam = adam;
        stale_epochs = 0;
      } else {
        ++stale_epochs;
      }
    }
    out.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (writing && (ep % tc.checkpoint_every == 0 || ep == tc.epochs)) write_checkpoint(ep);
    if (val_inputs && stale_epochs >= tc.early_stop_patience) break;
  }

  if (val_inputs && out.best_epoch > 0) {
    params = best_params;
    adam = best_adam;
    write_checkpoint(out.best_epoch);
  } else if (out.aborted_nonfinite) {
    write_checkpoint(out.epochs_run);
  }
  out.params = std::move(params);
  out.adam = std::move(adam);
  return out;
}

}  // namespace hgrl
