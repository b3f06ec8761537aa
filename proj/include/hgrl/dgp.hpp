#pragma once

#include <string>
#include <vector>

#include "hgrl/encoders.hpp"
#include "hgrl/params.hpp"

namespace hgrl {

enum class PromptKind { state, object, pair };

struct PromptConfig {
  int m = 3;  // learnable context tokens per branch
  int k_s = 3;
  int k_o = 3;
  int n_s = 0;
  int n_o = 0;
  int token_dim = 32;
  bool use_group_token = true;  // false: group-blind prompts (ablation)

  void validate() const {
    check_contract(m >= 1, "prompt config: m must be >= 1");
    check_contract(k_s >= 1 && k_o >= 1 && n_s >= 1 && n_o >= 1, "prompt config: counts must be positive");
  }
};

// Token sequences exactly as the prompt equations write them:
//   state/object: [ctx_1 .. ctx_m, g_j, w_i]
//   pair:         [ctx^c_1 .. ctx^c_m, w^s_i, w^o_j]   (no group token)
// For state/object kinds `class_idx` is the class and `group_idx` the group;
// for pairs `class_idx` is the state, `second_class_idx` the object, and a
// group index is a contract violation.
inline ad::Var assemble_prompt(ad::Tape& tape, const LeafMap& leafs, PromptKind kind, int class_idx,
                               int second_class_idx, int group_idx, const PromptConfig& cfg) {
  cfg.validate();
  auto row = [&](const std::string& name, int r, int count, const char* what) {
    if (r < 0 || r >= count)
      throw ValidationError(std::string("assemble_prompt: ") + what + " index " + std::to_string(r) +
                            " out of range [0, " + std::to_string(count) + ")");
    return tape.gather_rows(leafs.at(name), {static_cast<Eigen::Index>(r)});
  };
  if (kind == PromptKind::pair) {
    if (group_idx >= 0) throw ContractError("assemble_prompt: pair prompts carry no group token");
    return tape.vstack({leafs.at("dgp.ctx_pair"), row("dgp.class_state", class_idx, cfg.n_s, "state"),
                        row("dgp.class_object", second_class_idx, cfg.n_o, "object")});
  }
  const bool is_state = kind == PromptKind::state;
  const std::string ctx = is_state ? "dgp.ctx_state" : "dgp.ctx_object";
  const std::string cls = is_state ? "dgp.class_state" : "dgp.class_object";
  const int n = is_state ? cfg.n_s : cfg.n_o;
  const int k = is_state ? cfg.k_s : cfg.k_o;
  if (!cfg.use_group_token)
    return tape.vstack({leafs.at(ctx), row(cls, class_idx, n, "class")});
  if (group_idx < 0) throw ContractError("assemble_prompt: state/object prompts require a group index");
  return tape.vstack({leafs.at(ctx), row(is_state ? "dgp.group_state" : "dgp.group_object", group_idx, k, "group"),
                      row(cls, class_idx, n, "class")});
}

// Class representations for one optimization step. state_reps row (i*k_s + j)
// is class i under group j; pair_reps follow the supplied pair ordering.
struct TextBankVars {
  ad::Var state_reps;   // (n_s * k_s) x d
  ad::Var object_reps;  // (n_o * k_o) x d
  ad::Var pair_reps;    // |pairs| x d

  Eigen::Index state_row(int i, int j, int k_s) const { return static_cast<Eigen::Index>(i) * k_s + j; }
};

inline TextBankVars build_text_bank(ad::Tape& tape, const LeafMap& leafs, const TextBackend& backend,
                                    const PromptConfig& cfg, const std::vector<PairIdx>& pairs) {
  cfg.validate();
  check_contract(backend.context_length() >= cfg.m + 2, "text backend context too short for prompts");
  TextBankVars bank;
  std::vector<ad::Var> rows;
  rows.reserve(static_cast<std::size_t>(cfg.n_s) * static_cast<std::size_t>(cfg.k_s));
  for (int i = 0; i < cfg.n_s; ++i)
    for (int j = 0; j < cfg.k_s; ++j)
      rows.push_back(backend.encode_tokens(
          tape, assemble_prompt(tape, leafs, PromptKind::state, i, -1, cfg.use_group_token ? j : -1, cfg)));
  bank.state_reps = tape.vstack(rows);
  rows.clear();
  for (int i = 0; i < cfg.n_o; ++i)
    for (int j = 0; j < cfg.k_o; ++j)
      rows.push_back(backend.encode_tokens(
          tape, assemble_prompt(tape, leafs, PromptKind::object, i, -1, cfg.use_group_token ? j : -1, cfg)));
  bank.object_reps = tape.vstack(rows);
  rows.clear();
  check_contract(!pairs.empty(), "build_text_bank: empty pair list");
  for (const auto& p : pairs)
    rows.push_back(
        backend.encode_tokens(tape, assemble_prompt(tape, leafs, PromptKind::pair, p.first, p.second, -1, cfg)));
  bank.pair_reps = tape.vstack(rows);
  return bank;
}

}  // namespace hgrl
