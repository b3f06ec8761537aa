#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hgrl/common.hpp"

namespace hgrl {

using PairIdx = std::pair<int, int>;  // (state_idx, object_idx)

enum class World { closed, open };

inline std::string world_name(World w) { return w == World::closed ? "closed" : "open"; }

inline World parse_world(const std::string& s) {
  if (s == "closed") return World::closed;
  if (s == "open") return World::open;
  throw ValidationError("unknown world '" + s + "' (expected closed|open)");
}

struct Vocabulary {
  std::vector<std::string> states;
  std::vector<std::string> objects;

  int n_s() const { return static_cast<int>(states.size()); }
  int n_o() const { return static_cast<int>(objects.size()); }

  int state_index(const std::string& name) const { return index_in(states, name, "state"); }
  int object_index(const std::string& name) const { return index_in(objects, name, "object"); }

  void validate() const {
    check_contract(!states.empty() && !objects.empty(), "vocabulary must have at least one state and object");
    check_contract(std::set<std::string>(states.begin(), states.end()).size() == states.size(),
                   "duplicate state names");
    check_contract(std::set<std::string>(objects.begin(), objects.end()).size() == objects.size(),
                   "duplicate object names");
  }

 private:
  static int index_in(const std::vector<std::string>& v, const std::string& name, const char* kind) {
    auto it = std::find(v.begin(), v.end(), name);
    if (it == v.end()) throw ValidationError(std::string("unknown ") + kind + " '" + name + "'");
    return static_cast<int>(it - v.begin());
  }
};

// Seen/unseen composition sets. Target ordering is part of the contract:
// closed world lists seen pairs first then unseen, open world is row-major
// over the full state x object grid.
struct CompositionSplit {
  std::vector<PairIdx> seen;
  std::vector<PairIdx> unseen;
  World world = World::closed;

  std::vector<PairIdx> target_space(int n_s, int n_o) const {
    std::vector<PairIdx> t;
    if (world == World::closed) {
      t = seen;
      t.insert(t.end(), unseen.begin(), unseen.end());
    } else {
      t.reserve(static_cast<std::size_t>(n_s) * static_cast<std::size_t>(n_o));
      for (int s = 0; s < n_s; ++s)
        for (int o = 0; o < n_o; ++o) t.emplace_back(s, o);
    }
    return t;
  }

  void validate(int n_s, int n_o) const {
    std::set<PairIdx> seen_set(seen.begin(), seen.end());
    std::set<PairIdx> unseen_set(unseen.begin(), unseen.end());
    check_contract(seen_set.size() == seen.size(), "duplicate seen pairs");
    check_contract(unseen_set.size() == unseen.size(), "duplicate unseen pairs");
    for (const auto& p : seen)
      check_contract(!unseen_set.count(p), "pair in both seen and unseen");
    for (const auto& p : seen)
      check_contract(p.first >= 0 && p.first < n_s && p.second >= 0 && p.second < n_o, "seen pair out of range");
    for (const auto& p : unseen)
      check_contract(p.first >= 0 && p.first < n_s && p.second >= 0 && p.second < n_o, "unseen pair out of range");
  }
};

struct Sample {
  std::string image_ref;  // resolved by the encoder backend
  int state_idx = -1;
  int object_idx = -1;
};

struct Dataset {
  Vocabulary vocab;
  CompositionSplit split;           // seen = train pairs, unseen = test-only pairs
  std::vector<PairIdx> val_unseen;  // val-only pairs, used for model selection
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;

  // Target space for validation-time model selection: seen + val-only pairs.
  CompositionSplit val_split() const {
    CompositionSplit s;
    s.seen = split.seen;
    s.unseen = val_unseen;
    s.world = World::closed;
    return s;
  }
};

namespace detail {

struct RawPair {
  std::string state;
  std::string object;
  int line = 0;
};

inline std::vector<RawPair> parse_pair_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pair file " + path.string());
  std::vector<RawPair> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size() || line.find(' ', sp + 1) != std::string::npos)
      throw ParseError(path.filename().string() + ":" + std::to_string(line_no) +
                       ": expected exactly two space-separated tokens");
    out.push_back({line.substr(0, sp), line.substr(sp + 1), line_no});
  }
  if (out.empty()) throw ValidationError("empty pair file " + path.string());
  return out;
}

}  // namespace detail

// Loads the de-facto CZSL directory convention:
//   root/compositional-split-natural/{train,val,test}_pairs.txt
//   root/images/<state>_<object>/<file>
// Vocabulary comes from the train pairs; val/test pairs must not introduce
// new words. Images of pairs listed only in train go to train; images of
// val-/test-only pairs go to that split; images of pairs listed in several
// splits are assigned deterministically by a hash of the file name
// (8:1:1 train/val/test), since the pair lists carry no per-image split.
inline Dataset load_dataset(const std::filesystem::path& root, World world) {
  namespace fs = std::filesystem;
  const fs::path split_dir = root / "compositional-split-natural";
  const auto train_raw = detail::parse_pair_file(split_dir / "train_pairs.txt");
  const auto val_raw = detail::parse_pair_file(split_dir / "val_pairs.txt");
  const auto test_raw = detail::parse_pair_file(split_dir / "test_pairs.txt");

  Dataset ds;
  std::set<std::string> state_set, object_set;
  for (const auto& p : train_raw) {
    state_set.insert(p.state);
    object_set.insert(p.object);
  }
  ds.vocab.states.assign(state_set.begin(), state_set.end());
  ds.vocab.objects.assign(object_set.begin(), object_set.end());
  ds.vocab.validate();

  auto resolve = [&](const std::vector<detail::RawPair>& raw, const char* which) {
    std::vector<PairIdx> out;
    std::set<PairIdx> dedup;
    for (const auto& p : raw) {
      if (!state_set.count(p.state))
        throw ValidationError(std::string(which) + "_pairs.txt:" + std::to_string(p.line) + ": unknown state '" +
                              p.state + "'");
      if (!object_set.count(p.object))
        throw ValidationError(std::string(which) + "_pairs.txt:" + std::to_string(p.line) + ": unknown object '" +
                              p.object + "'");
      PairIdx idx{ds.vocab.state_index(p.state), ds.vocab.object_index(p.object)};
      if (dedup.insert(idx).second) out.push_back(idx);
    }
    return out;
  };

  const auto train_pairs = resolve(train_raw, "train");
  const auto val_pairs = resolve(val_raw, "val");
  const auto test_pairs = resolve(test_raw, "test");

  const std::set<PairIdx> seen_set(train_pairs.begin(), train_pairs.end());
  ds.split.seen = train_pairs;
  ds.split.world = world;
  for (const auto& p : test_pairs)
    if (!seen_set.count(p)) ds.split.unseen.push_back(p);
  for (const auto& p : val_pairs)
    if (!seen_set.count(p)) ds.val_unseen.push_back(p);
  ds.split.validate(ds.vocab.n_s(), ds.vocab.n_o());

  const std::set<PairIdx> val_set(val_pairs.begin(), val_pairs.end());
  const std::set<PairIdx> test_set(test_pairs.begin(), test_pairs.end());

  const fs::path image_root = root / "images";
  if (!fs::exists(image_root)) throw IoError("missing image directory " + image_root.string());

  // Directory names join state and object with '_', but both tokens may
  // themselves contain underscores; resolve against the known vocabulary and
  // require a unique interpretation.
  auto split_dir_name = [&](const std::string& name) -> PairIdx {
    PairIdx found{-1, -1};
    int matches = 0;
    for (std::size_t at = name.find('_'); at != std::string::npos; at = name.find('_', at + 1)) {
      const std::string s = name.substr(0, at), o = name.substr(at + 1);
      if (state_set.count(s) && object_set.count(o)) {
        found = {ds.vocab.state_index(s), ds.vocab.object_index(o)};
        ++matches;
      }
    }
    if (matches != 1)
      throw ValidationError("image directory '" + name + "' " +
                            (matches ? "is ambiguous against the vocabulary" : "matches no vocabulary pair"));
    return found;
  };

  std::vector<fs::path> pair_dirs;
  for (const auto& e : fs::directory_iterator(image_root))
    if (e.is_directory()) pair_dirs.push_back(e.path());
  std::sort(pair_dirs.begin(), pair_dirs.end());

  for (const auto& dir : pair_dirs) {
    const PairIdx pi = split_dir_name(dir.filename().string());
    const bool in_train = seen_set.count(pi) > 0;
    const bool in_val = val_set.count(pi) > 0;
    const bool in_test = test_set.count(pi) > 0;
    if (!in_train && !in_val && !in_test)
      throw ValidationError("image directory '" + dir.filename().string() + "' matches no listed pair");
    std::vector<std::string> files;
    for (const auto& f : fs::directory_iterator(dir))
      if (f.is_regular_file()) files.push_back(f.path().filename().string());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      Sample smp{dir.filename().string() + "/" + f, pi.first, pi.second};
      if (in_train && !in_val && !in_test) {
        ds.train.push_back(std::move(smp));
      } else if (!in_train) {
        if (in_val && in_test)
          (fnv1a(smp.image_ref) % 2 == 0 ? ds.val : ds.test).push_back(std::move(smp));
        else
          (in_val ? ds.val : ds.test).push_back(std::move(smp));
      } else {
        const uint64_t h = fnv1a(smp.image_ref) % 10;
        (h < 8 ? ds.train : (h == 8 ? ds.val : ds.test)).push_back(std::move(smp));
      }
    }
  }

  for (const auto& s : ds.train)
    check_contract(seen_set.count({s.state_idx, s.object_idx}) > 0, "training sample outside seen pairs");
  return ds;
}

}  // namespace hgrl
