#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hgrl/archive.hpp"
#include "hgrl/rng.hpp"
#include "hgrl/vocab.hpp"

namespace hgrl {

// Desk-scale dataset with planted latent groups, built on the premise the
// real system inherits from its pretrained encoders: image features and word
// vectors describe the same space, so classes whose words are close also
// look alike. Each feature is [state half ; object half]; each half is that
// class's group direction plus a class offset, so unseen pairs compose
// linearly and the group structure is exactly what the grouped visual
// branches are supposed to discover. On top of that, every (state-group,
// object-group) cell shifts appearance by its own fixed vector — the
// conditional dependency the groups exist to explain: the shift on an unseen
// pair is recoverable from seen pairs in the same cell, but not from
// per-class evidence alone.
struct SyntheticSpec {
  int n_s = 8;
  int n_o = 12;
  int g_s = 3;  // ground-truth group count partitioning states
  int g_o = 3;  // ground-truth group count partitioning objects
  int samples_per_pair = 20;
  double noise_scale = 0.1;
  std::uint64_t seed = 1;
  int d = 32;        // toy feature width (even: one half per branch)
  int word_dim = 16; // synthetic word-vector width; must equal d/2 (shared space)
  double holdout_frac = 0.3;
  int eval_samples_per_pair = 10;
  double group_scale = 2.0;        // per-dimension scale of group centers
  double offset_scale = 0.5;       // spread of per-class offsets within a group
  double word_noise = 0.08;        // word-vector jitter around the group direction
  double interaction_scale = 0.5;  // per-dimension scale of the (state-group x object-group) shifts
  double partner_scale = 1.2;      // per-dimension scale of per-class, partner-group-specific offsets
  double pair_scale = 0.0;         // per-dimension scale of fixed per-composition signatures

  void validate() const {
    check_contract(n_s >= 1 && n_o >= 1, "synthetic: class counts must be >= 1");
    check_contract(g_s >= 1 && g_o >= 1, "synthetic: group counts must be >= 1");
    check_contract(g_s <= n_s && g_o <= n_o, "synthetic: more groups than classes");
    check_contract(samples_per_pair >= 1 && eval_samples_per_pair >= 1, "synthetic: samples_per_pair must be >= 1");
    check_contract(noise_scale >= 0.0, "synthetic: noise_scale must be >= 0");
    check_contract(d >= 4 && d % 2 == 0, "synthetic: d must be even and >= 4");
    check_contract(word_dim == d / 2, "synthetic: word_dim must equal d/2 (words live in each feature half)");
    check_contract(g_s <= word_dim && g_o <= word_dim, "synthetic: word_dim too small for group count");
    check_contract(holdout_frac > 0.0 && holdout_frac < 1.0, "synthetic: holdout_frac must be in (0,1)");
    check_contract(interaction_scale >= 0.0, "synthetic: interaction_scale must be >= 0");
    check_contract(partner_scale >= 0.0, "synthetic: partner_scale must be >= 0");
    check_contract(pair_scale >= 0.0, "synthetic: pair_scale must be >= 0");
  }

  nlohmann::json to_json() const {
    return {{"n_s", n_s},
            {"n_o", n_o},
            {"g_s", g_s},
            {"g_o", g_o},
            {"samples_per_pair", samples_per_pair},
            {"noise_scale", noise_scale},
            {"seed", seed},
            {"d", d},
            {"word_dim", word_dim},
            {"holdout_frac", holdout_frac},
            {"eval_samples_per_pair", eval_samples_per_pair},
            {"group_scale", group_scale},
            {"offset_scale", offset_scale},
            {"word_noise", word_noise},
            {"interaction_scale", interaction_scale},
            {"partner_scale", partner_scale},
            {"pair_scale", pair_scale}};
  }

  static SyntheticSpec from_json(const nlohmann::json& j) {
    SyntheticSpec s;
    s.n_s = j.value("n_s", s.n_s);
    s.n_o = j.value("n_o", s.n_o);
    s.g_s = j.value("g_s", s.g_s);
    s.g_o = j.value("g_o", s.g_o);
    s.samples_per_pair = j.value("samples_per_pair", s.samples_per_pair);
    s.noise_scale = j.value("noise_scale", s.noise_scale);
    s.seed = j.value("seed", s.seed);
    s.d = j.value("d", s.d);
    s.word_dim = j.value("word_dim", s.word_dim);
    s.holdout_frac = j.value("holdout_frac", s.holdout_frac);
    s.eval_samples_per_pair = j.value("eval_samples_per_pair", s.eval_samples_per_pair);
    s.group_scale = j.value("group_scale", s.group_scale);
    s.offset_scale = j.value("offset_scale", s.offset_scale);
    s.word_noise = j.value("word_noise", s.word_noise);
    s.interaction_scale = j.value("interaction_scale", s.interaction_scale);
    s.partner_scale = j.value("partner_scale", s.partner_scale);
    s.pair_scale = j.value("pair_scale", s.pair_scale);
    return s;
  }
};

struct SyntheticDataset {
  SyntheticSpec spec;
  Dataset data;
  Mat features;  // one row per sample, indexed by the "syn:<row>" image_ref
  Mat state_words;
  Mat object_words;
  std::vector<std::int64_t> state_groups;   // group of each state (size n_s, values < g_s)
  std::vector<std::int64_t> object_groups;  // group of each object (size n_o, values < g_o)
};

namespace detail {

// Contiguous balanced partition: class c of n classes into g groups.
inline int group_of(int c, int n, int g) { return static_cast<int>(static_cast<long long>(c) * g / n); }

// Random directions made exactly orthonormal (Gram-Schmidt), so distinct
// groups have cosine ~0 and same-group words stay well above the threshold.
inline Mat orthonormal_directions(Rng& rng, int count, int dim) {
  Mat u = rng.gaussian_matrix(count, dim);
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < i; ++j) u.row(i) -= u.row(i).dot(u.row(j)) * u.row(j);
    const double n = u.row(i).norm();
    check_contract(n > 1e-8, "orthonormal_directions: degenerate draw");
    u.row(i) /= n;
  }
  return u;
}

}  // namespace detail

inline SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticDataset out;
  out.spec = spec;
  Rng root(spec.seed);

  for (int s = 0; s < spec.n_s; ++s) out.data.vocab.states.push_back("state" + std::to_string(s));
  for (int o = 0; o < spec.n_o; ++o) out.data.vocab.objects.push_back("object" + std::to_string(o));

  out.state_groups.resize(static_cast<std::size_t>(spec.n_s));
  out.object_groups.resize(static_cast<std::size_t>(spec.n_o));
  for (int s = 0; s < spec.n_s; ++s) out.state_groups[static_cast<std::size_t>(s)] = detail::group_of(s, spec.n_s, spec.g_s);
  for (int o = 0; o < spec.n_o; ++o) out.object_groups[static_cast<std::size_t>(o)] = detail::group_of(o, spec.n_o, spec.g_o);

  // Latent geometry. One orthonormal direction per group anchors BOTH the
  // visual group center (scaled into the class's feature half) and the word
  // vectors of the group's classes — the shared-space premise. Class offsets
  // are private per class; halves are additive so unseen compositions remain
  // linearly representable.
  const int h = spec.d / 2;
  Rng r_sd = root.fork(fnv1a("state_group_dirs"));
  Rng r_od = root.fork(fnv1a("object_group_dirs"));
  Rng r_so = root.fork(fnv1a("state_offsets"));
  Rng r_oo = root.fork(fnv1a("object_offsets"));
  const Mat state_dirs = detail::orthonormal_directions(r_sd, spec.g_s, spec.word_dim);
  const Mat object_dirs = detail::orthonormal_directions(r_od, spec.g_o, spec.word_dim);
  const double center_norm = spec.group_scale * std::sqrt(static_cast<double>(h));
  const Mat state_centers = state_dirs * center_norm;    // g_s x h
  const Mat object_centers = object_dirs * center_norm;  // g_o x h
  const Mat state_offsets = r_so.gaussian_matrix(spec.n_s, h, spec.offset_scale);
  const Mat object_offsets = r_oo.gaussian_matrix(spec.n_o, h, spec.offset_scale);

  // Conditional dependency, two grains. Cell shifts: one fixed full-width
  // shift per (state-group, object-group) cell — seen pairs in a cell reveal
  // it, an unseen pair inherits it only through its groups. Partner modes:
  // how a class renders also depends on which group its partner comes from
  // (an "old" car vs an "old" dog), so each class carries one extra offset
  // per partner group, active in that class's own half.
  Rng r_ix = root.fork(fnv1a("pair_interaction"));
  const Mat interactions = r_ix.gaussian_matrix(spec.g_s * spec.g_o, spec.d, spec.interaction_scale);
  Rng r_sp = root.fork(fnv1a("state_partner_modes"));
  Rng r_op = root.fork(fnv1a("object_partner_modes"));
  const Mat state_partner = r_sp.gaussian_matrix(spec.n_s * spec.g_o, h, spec.partner_scale);
  const Mat object_partner = r_op.gaussian_matrix(spec.n_o * spec.g_s, h, spec.partner_scale);

  // Per-composition signature: a fixed displacement shared by every draw of a
  // pair. Group-level regularities transfer to unseen pairs; a signature does
  // not, so a model that bakes seen pairs' signatures into its prototypes
  // mispredicts fresh compositions. Cross-sample aggregation during training
  // averages signatures out of what the prototypes see.
  Rng r_pd = root.fork(fnv1a("pair_signature"));
  const Mat pair_sig = r_pd.gaussian_matrix(spec.n_s * spec.n_o, spec.d, spec.pair_scale);

  // Word vectors jitter around their group's direction, so word-space cosine
  // reproduces the ground-truth grouping (what the co-occurrence graph and
  // the prompt warm start both consume).
  Rng r_wsn = root.fork(fnv1a("word_state_noise"));
  Rng r_won = root.fork(fnv1a("word_object_noise"));
  out.state_words = Mat(spec.n_s, spec.word_dim);
  for (int s = 0; s < spec.n_s; ++s) {
    Mat jitter = r_wsn.gaussian_matrix(1, spec.word_dim, spec.word_noise);
    out.state_words.row(s) = state_dirs.row(out.state_groups[static_cast<std::size_t>(s)]) + jitter.row(0);
    out.state_words.row(s) /= out.state_words.row(s).norm();
  }
  out.object_words = Mat(spec.n_o, spec.word_dim);
  for (int o = 0; o < spec.n_o; ++o) {
    Mat jitter = r_won.gaussian_matrix(1, spec.word_dim, spec.word_noise);
    out.object_words.row(o) = object_dirs.row(out.object_groups[static_cast<std::size_t>(o)]) + jitter.row(0);
    out.object_words.row(o) /= out.object_words.row(o).norm();
  }

  // Unseen holdout, stratified: unseen pairs are taken round-robin across the
  // (state-group x object-group) cells, shuffled within each cell, so every
  // seed holds out genuinely novel compositions in every cell instead of
  // leaving easy splits to luck. Every state and object keeps at least one
  // seen pair.
  std::vector<PairIdx> all_pairs;
  for (int s = 0; s < spec.n_s; ++s)
    for (int o = 0; o < spec.n_o; ++o) all_pairs.emplace_back(s, o);
  const int target_unseen = static_cast<int>(std::llround(spec.holdout_frac * static_cast<double>(all_pairs.size())));
  if (target_unseen < 1)
    throw ValidationError("synthetic holdout: fraction yields no unseen pairs");
  std::vector<std::vector<PairIdx>> cells(static_cast<std::size_t>(spec.g_s * spec.g_o));
  for (const auto& p : all_pairs) {
    const auto sg = out.state_groups[static_cast<std::size_t>(p.first)];
    const auto og = out.object_groups[static_cast<std::size_t>(p.second)];
    cells[static_cast<std::size_t>(sg * spec.g_o + og)].push_back(p);
  }
  Rng r_hold = root.fork(fnv1a("holdout"));
  for (auto& cell : cells) r_hold.shuffle(cell);
  std::vector<int> state_cover(static_cast<std::size_t>(spec.n_s), spec.n_o);
  std::vector<int> object_cover(static_cast<std::size_t>(spec.n_o), spec.n_s);
  std::set<PairIdx> unseen_set;
  std::vector<std::size_t> cursor(cells.size(), 0);
  bool progress = true;
  while (static_cast<int>(unseen_set.size()) < target_unseen && progress) {
    progress = false;
    for (std::size_t c = 0; c < cells.size() && static_cast<int>(unseen_set.size()) < target_unseen; ++c) {
      while (cursor[c] < cells[c].size()) {
        const PairIdx p = cells[c][cursor[c]++];
        auto& sc = state_cover[static_cast<std::size_t>(p.first)];
        auto& oc = object_cover[static_cast<std::size_t>(p.second)];
        if (sc <= 1 || oc <= 1) continue;
        unseen_set.insert(p);
        --sc;
        --oc;
        progress = true;
        break;
      }
    }
  }
  if (unseen_set.empty())
    throw ValidationError("synthetic holdout: unsatisfiable coverage constraint (too few states or objects)");
  for (const auto& p : all_pairs)
    (unseen_set.count(p) ? out.data.split.unseen : out.data.split.seen).push_back(p);
  out.data.split.world = World::closed;
  out.data.split.validate(spec.n_s, spec.n_o);
  out.data.val_unseen = out.data.split.unseen;  // val shares pairs, not draws

  // Sample draws: train covers seen pairs only; val/test get fresh draws over
  // the full target space (seen + unseen), as in the standard protocol.
  Rng r_noise = root.fork(fnv1a("sample_noise"));
  std::vector<Mat> rows;
  auto emit = [&](std::vector<Sample>& bucket, const PairIdx& p) {
    const int s = p.first, o = p.second;
    const int sg = static_cast<int>(out.state_groups[static_cast<std::size_t>(s)]);
    const int og = static_cast<int>(out.object_groups[static_cast<std::size_t>(o)]);
    Mat row(1, spec.d);
    row.block(0, 0, 1, h) =
        state_centers.row(sg) + state_offsets.row(s) + state_partner.row(s * spec.g_o + og);
    row.block(0, h, 1, h) =
        object_centers.row(og) + object_offsets.row(o) + object_partner.row(o * spec.g_s + sg);
    row += interactions.row(sg * spec.g_o + og);
    row += pair_sig.row(s * spec.n_o + o);
    if (spec.noise_scale > 0.0) row += r_noise.gaussian_matrix(1, spec.d, spec.noise_scale);
    else (void)0;  // zero-noise: every draw of a pair is the same point
    const auto idx = static_cast<int>(rows.size());
    rows.push_back(row);
    bucket.push_back(Sample{"syn:" + std::to_string(idx), s, o});
  };
  for (const auto& p : out.data.split.seen)
    for (int i = 0; i < spec.samples_per_pair; ++i) emit(out.data.train, p);
  for (const auto& p : all_pairs)
    for (int i = 0; i < spec.eval_samples_per_pair; ++i) emit(out.data.val, p);
  for (const auto& p : all_pairs)
    for (int i = 0; i < spec.eval_samples_per_pair; ++i) emit(out.data.test, p);

  out.features = Mat(static_cast<Eigen::Index>(rows.size()), spec.d);
  for (std::size_t i = 0; i < rows.size(); ++i) out.features.row(static_cast<Eigen::Index>(i)) = rows[i].row(0);
  return out;
}

namespace detail {

inline std::vector<std::int64_t> flatten_pairs(const std::vector<PairIdx>& ps) {
  std::vector<std::int64_t> v;
  v.reserve(ps.size() * 2);
  for (const auto& p : ps) {
    v.push_back(p.first);
    v.push_back(p.second);
  }
  return v;
}

inline std::vector<PairIdx> unflatten_pairs(const std::vector<std::int64_t>& v) {
  check_contract(v.size() % 2 == 0, "pair list must have even length");
  std::vector<PairIdx> ps;
  ps.reserve(v.size() / 2);
  for (std::size_t i = 0; i < v.size(); i += 2)
    ps.emplace_back(static_cast<int>(v[i]), static_cast<int>(v[i + 1]));
  return ps;
}

inline std::string join_lines(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) {
    s += x;
    s += '\n';
  }
  return s;
}

inline std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> v;
  std::size_t at = 0;
  while (at < s.size()) {
    const auto nl = s.find('\n', at);
    v.push_back(s.substr(at, nl - at));
    if (nl == std::string::npos) break;
    at = nl + 1;
  }
  return v;
}

inline void put_samples(Archive& a, const std::string& prefix, const std::vector<Sample>& xs) {
  std::vector<std::int64_t> st, ob, ref;
  for (const auto& s : xs) {
    st.push_back(s.state_idx);
    ob.push_back(s.object_idx);
    check_contract(s.image_ref.rfind("syn:", 0) == 0, "synthetic sample ref must be syn:<row>");
    ref.push_back(std::stoll(s.image_ref.substr(4)));
  }
  a.put(prefix + ".state", st);
  a.put(prefix + ".object", ob);
  a.put(prefix + ".row", ref);
}

inline std::vector<Sample> get_samples(const Archive& a, const std::string& prefix) {
  const auto st = a.ints(prefix + ".state");
  const auto ob = a.ints(prefix + ".object");
  const auto ref = a.ints(prefix + ".row");
  check_contract(st.size() == ob.size() && st.size() == ref.size(), "sample arrays disagree");
  std::vector<Sample> xs;
  for (std::size_t i = 0; i < st.size(); ++i)
    xs.push_back(Sample{"syn:" + std::to_string(ref[i]), static_cast<int>(st[i]), static_cast<int>(ob[i])});
  return xs;
}

}  // namespace detail

inline Archive synthetic_to_archive(const SyntheticDataset& ds) {
  Archive a;
  a.put("kind", std::string("synthetic-dataset"));
  a.put("spec.json", ds.spec.to_json().dump());
  a.put("vocab.states", detail::join_lines(ds.data.vocab.states));
  a.put("vocab.objects", detail::join_lines(ds.data.vocab.objects));
  a.put("pairs.seen", detail::flatten_pairs(ds.data.split.seen));
  a.put("pairs.unseen", detail::flatten_pairs(ds.data.split.unseen));
  a.put("features", ds.features);
  a.put("words.state", ds.state_words);
  a.put("words.object", ds.object_words);
  a.put("groups.state", ds.state_groups);
  a.put("groups.object", ds.object_groups);
  detail::put_samples(a, "train", ds.data.train);
  detail::put_samples(a, "val", ds.data.val);
  detail::put_samples(a, "test", ds.data.test);
  return a;
}

inline SyntheticDataset synthetic_from_archive(const Archive& a) {
  check_contract(a.str("kind") == "synthetic-dataset", "archive is not a synthetic dataset");
  SyntheticDataset ds;
  ds.spec = SyntheticSpec::from_json(nlohmann::json::parse(a.str("spec.json")));
  ds.data.vocab.states = detail::split_lines(a.str("vocab.states"));
  ds.data.vocab.objects = detail::split_lines(a.str("vocab.objects"));
  ds.data.split.seen = detail::unflatten_pairs(a.ints("pairs.seen"));
  ds.data.split.unseen = detail::unflatten_pairs(a.ints("pairs.unseen"));
  ds.data.split.world = World::closed;
  ds.data.val_unseen = ds.data.split.unseen;
  ds.features = a.mat("features");
  ds.state_words = a.mat("words.state");
  ds.object_words = a.mat("words.object");
  ds.state_groups = a.ints("groups.state");
  ds.object_groups = a.ints("groups.object");
  ds.data.train = detail::get_samples(a, "train");
  ds.data.val = detail::get_samples(a, "val");
  ds.data.test = detail::get_samples(a, "test");
  ds.data.vocab.validate();
  ds.data.split.validate(ds.data.vocab.n_s(), ds.data.vocab.n_o());
  return ds;
}

inline void save_synthetic(const SyntheticDataset& ds, const std::string& path) {
  synthetic_to_archive(ds).save(path);
}

inline SyntheticDataset load_synthetic(const std::string& path) {
  return synthetic_from_archive(Archive::load(path));
}

// Plain-text word vectors for the synthetic vocabulary, in the format the
// graph loader consumes ("token f1 ... fd" per line).
inline void write_word_vector_file(const SyntheticDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write word-vector file " + path);
  char buf[64];
  auto emit = [&](const std::string& word, const Mat& m, Eigen::Index row) {
    out << word;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), " %.17g", m(row, j));
      out << buf;
    }
    out << '\n';
  };
  for (int s = 0; s < ds.data.vocab.n_s(); ++s) emit(ds.data.vocab.states[static_cast<std::size_t>(s)], ds.state_words, s);
  for (int o = 0; o < ds.data.vocab.n_o(); ++o) emit(ds.data.vocab.objects[static_cast<std::size_t>(o)], ds.object_words, o);
  if (!out) throw IoError("failed writing word-vector file " + path);
}

}  // namespace hgrl
