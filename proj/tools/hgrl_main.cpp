// hgrl — command-line front end for the compositional recognition library.
//
// Subcommands:
//   prepare-graph   build (or reuse from cache) the word co-occurrence graph
//   train           fit a model; writes config echo, loss log, checkpoint
//   evaluate        score a checkpoint on the test split; writes metrics+curve
//   sweep           grid over {k_s, k_o, lambda, K}; writes sweep.csv
//   report          render curve/loss SVGs and the group-word summary
//
// Option precedence everywhere: built-in defaults < profile < --config file
// < --set overrides (in order) < dedicated flags (--seed/--world/--out/
// --deterministic). evaluate and report additionally fall back to the
// resolved-config echo (<out>/config.json) when --config is omitted, so a
// finished run directory is self-describing.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hgrl/runner.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> world;
  std::optional<std::string> out;
  std::optional<bool> deterministic;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config_path, "JSON config file");
  cmd->add_option("--set", a.sets, "dotted.path=value override, repeatable; value is a JSON literal or bare string");
  cmd->add_option("--seed", a.seed, "seed for parameter init and synthetic data");
  cmd->add_option("--world", a.world, "composition target space")->check(CLI::IsMember({"closed", "open"}));
  cmd->add_option("--out", a.out, "run directory for artifacts");
  cmd->add_flag_callback(
      "--deterministic", [&a] { a.deterministic = true; }, "force single-threaded reproducible mode (default)");
  cmd->add_flag_callback(
      "--no-deterministic", [&a] { a.deterministic = false; }, "allow non-deterministic execution");
}

hgrl::RunConfig resolve(const CommonArgs& a, bool echo_fallback) {
  hgrl::FlagOverrides f;
  f.seed = a.seed;
  if (a.world) f.world = hgrl::parse_world(*a.world);
  f.out_dir = a.out;
  f.deterministic = a.deterministic;
  std::string path = a.config_path;
  if (path.empty() && echo_fallback && a.out) {
    const auto echo = std::filesystem::path(*a.out) / "config.json";
    if (std::filesystem::exists(echo)) path = echo.string();
  }
  return hgrl::resolve_config(path, a.sets, f);
}

std::uint64_t file_bytes_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw hgrl::IoError("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return hgrl::fnv1a(bytes.data(), bytes.size());
}

int cmd_prepare_graph(const CommonArgs& a) {
  hgrl::RunConfig cfg = resolve(a, /*echo_fallback=*/true);
  hgrl::Session s = hgrl::make_session(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  const hgrl::GraphCacheResult g = hgrl::prepare_graph(s, cfg);
  std::cout << (g.cache_hit ? "graph cache hit: " : "graph built: ") << g.path.string() << "\n";
  return 0;
}

int cmd_train(const CommonArgs& a) {
  hgrl::RunConfig cfg = resolve(a, /*echo_fallback=*/false);
  hgrl::Session s = hgrl::make_session(cfg);
  const hgrl::TrainRun tr = hgrl::run_train(cfg, s, [&](const hgrl::EpochRecord& er) {
    std::cout << "epoch " << er.epoch << "/" << cfg.train.epochs << "  lr=" << er.lr << "  loss=" << er.mean_loss;
    if (er.val_hm >= 0) std::cout << "  val_hm=" << er.val_hm;
    std::cout << "\n";
  });
  if (tr.outcome.aborted_nonfinite) {
    std::cerr << "error: non-finite loss; stopped after epoch " << tr.outcome.epochs_run
              << ", checkpoint holds the last finite state\n";
    return 4;
  }
  std::cout << "trained " << tr.outcome.epochs_run << " epochs";
  if (tr.outcome.best_epoch > 0)
    std::cout << "; kept epoch " << tr.outcome.best_epoch << " (val_hm=" << tr.outcome.best_val_hm << ")";
  std::cout << "\ncheckpoint: " << (std::filesystem::path(cfg.out_dir) / "checkpoint.hgrl").string() << "\n";
  return 0;
}

int cmd_evaluate(const CommonArgs& a, const std::string& checkpoint_opt) {
  hgrl::RunConfig cfg = resolve(a, /*echo_fallback=*/true);
  std::string ckpt = checkpoint_opt;
  if (ckpt.empty()) ckpt = (std::filesystem::path(cfg.out_dir) / "checkpoint.hgrl").string();
  const hgrl::LoadedCheckpoint lc = hgrl::load_checkpoint(ckpt);
  hgrl::Session s = hgrl::make_session(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  const hgrl::EvalRun ev = hgrl::run_evaluate(cfg, s, lc.params, file_bytes_hash(ckpt));
  const auto& m = ev.result.metrics;
  std::cout << "world=" << hgrl::world_name(cfg.world) << " S=" << m.S << " U=" << m.U << " HM=" << m.HM
            << " AUC=" << m.AUC;
  if (ev.result.purity_state >= 0)
    std::cout << " purity_state=" << ev.result.purity_state << " purity_object=" << ev.result.purity_object;
  std::cout << "\nmetrics: " << ev.metrics_path.string() << "\ncurve:   " << ev.curve_path.string() << "\n";
  return 0;
}

int cmd_sweep(const CommonArgs& a, std::vector<int> ks, std::vector<int> ko, std::vector<double> lambdas,
              std::vector<int> Ks) {
  hgrl::RunConfig cfg = resolve(a, /*echo_fallback=*/false);
  if (ks.empty()) ks = {cfg.model.k_s};
  if (ko.empty()) ko = {cfg.model.k_o};
  if (lambdas.empty()) lambdas = {cfg.model.lambda};
  if (Ks.empty()) Ks = {cfg.model.K};
  const auto cells = hgrl::run_sweep(cfg, ks, ko, lambdas, Ks);
  const auto csv = std::filesystem::path(cfg.out_dir) / "sweep.csv";
  hgrl::write_sweep_csv(csv, cells);
  const auto best = std::max_element(cells.begin(), cells.end(),
                                     [](const auto& x, const auto& y) { return x.metrics.AUC < y.metrics.AUC; });
  std::cout << cells.size() << " cells -> " << csv.string() << "\nbest: k_s=" << best->k_s << " k_o=" << best->k_o
            << " K=" << best->K << " lambda=" << best->lambda << " AUC=" << best->metrics.AUC << "\n";
  return 0;
}

int cmd_report(const CommonArgs& a) {
  hgrl::RunConfig cfg = resolve(a, /*echo_fallback=*/true);
  hgrl::Session s = hgrl::make_session(cfg);
  for (const auto& p : hgrl::run_report(cfg, s)) std::cout << "wrote " << p.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"compositional recognition: grouped visual experts + group prompts"};
  app.require_subcommand(1);

  CommonArgs pg_args, tr_args, ev_args, sw_args, rp_args;
  std::string checkpoint_opt;
  std::vector<int> ks_grid, ko_grid, K_grid;
  std::vector<double> lambda_grid;

  add_common(app.add_subcommand("prepare-graph", "build or reuse the cached co-occurrence graph"), pg_args);
  add_common(app.add_subcommand("train", "fit a model and write run artifacts"), tr_args);
  CLI::App* ev = app.add_subcommand("evaluate", "score a checkpoint on the test split");
  add_common(ev, ev_args);
  ev->add_option("--checkpoint", checkpoint_opt, "checkpoint archive (default <out>/checkpoint.hgrl)");
  CLI::App* sw = app.add_subcommand("sweep", "train+evaluate over a {k_s,k_o,lambda,K} grid");
  add_common(sw, sw_args);
  sw->add_option("--ks", ks_grid, "state group counts to sweep");
  sw->add_option("--ko", ko_grid, "object group counts to sweep");
  sw->add_option("--lambda", lambda_grid, "auxiliary loss weights to sweep");
  sw->add_option("--K", K_grid, "expert fan-outs to sweep (clamped to min(K,k_s,k_o))");
  add_common(app.add_subcommand("report", "render SVG curves and the group-word summary for a run"), rp_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("prepare-graph")) return cmd_prepare_graph(pg_args);
    if (app.got_subcommand("train")) return cmd_train(tr_args);
    if (app.got_subcommand("evaluate")) return cmd_evaluate(ev_args, checkpoint_opt);
    if (app.got_subcommand("sweep")) return cmd_sweep(sw_args, ks_grid, ko_grid, lambda_grid, K_grid);
    if (app.got_subcommand("report")) return cmd_report(rp_args);
  } catch (const hgrl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
