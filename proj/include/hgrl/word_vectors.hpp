#pragma once

#include <charconv>
#include <fstream>
#include <iostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "hgrl/rng.hpp"
#include "hgrl/vocab.hpp"

namespace hgrl {

// Plain-text word vectors: "token f1 f2 ... fd" per line, dimension fixed by
// the first line. Class names may join several tokens with '.', '_' or ' ';
// such names resolve to the mean of their token vectors. Unknown tokens fall
// back to a seed-fixed random vector with a warning.
struct WordVectorTable {
  Eigen::Index dim = 0;
  std::unordered_map<std::string, Vec> vectors;
  std::uint64_t fallback_seed = 0;

  bool has(const std::string& token) const { return vectors.count(token) > 0; }

  Vec token_vector(const std::string& token, std::vector<std::string>* warnings) const {
    auto it = vectors.find(token);
    if (it != vectors.end()) return it->second;
    if (warnings) warnings->push_back("word-vector fallback for unknown token '" + token + "'");
    Rng rng(fnv1a(token, fallback_seed ^ 0x9e3779b97f4a7c15ull));
    Mat m = rng.gaussian_matrix(1, dim);
    return m.row(0).transpose();
  }

  // Mean over subtokens; every vocabulary word must yield at least one token.
  Vec resolve(const std::string& word, std::vector<std::string>* warnings) const {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : word) {
      if (c == '.' || c == '_' || c == ' ') {
        if (!cur.empty()) tokens.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) tokens.push_back(cur);
    if (tokens.empty()) throw ValidationError("unresolvable word '" + word + "' (no tokens)");
    Vec acc = Vec::Zero(dim);
    for (const auto& t : tokens) acc += token_vector(t, warnings);
    return acc / static_cast<double>(tokens.size());
  }
};

inline WordVectorTable load_word_vectors(const std::string& path, std::uint64_t fallback_seed = 0) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open word-vector file " + path);
  WordVectorTable table;
  table.fallback_seed = fallback_seed;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos || sp == 0)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected token followed by floats");
    const std::string token = line.substr(0, sp);
    std::vector<double> vals;
    const char* p = line.data() + sp;
    const char* end = line.data() + line.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p >= end) break;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc())
        throw ParseError(path + ":" + std::to_string(line_no) + ": malformed float");
      vals.push_back(v);
      p = next;
    }
    if (vals.empty()) throw ParseError(path + ":" + std::to_string(line_no) + ": no values");
    if (table.dim == 0) {
      table.dim = static_cast<Eigen::Index>(vals.size());
    } else if (static_cast<Eigen::Index>(vals.size()) != table.dim) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(table.dim) +
                       " values, got " + std::to_string(vals.size()));
    }
    Vec v(table.dim);
    for (Eigen::Index i = 0; i < table.dim; ++i) v(i) = vals[static_cast<std::size_t>(i)];
    table.vectors[token] = std::move(v);
  }
  if (table.vectors.empty()) throw ValidationError("word-vector file " + path + " holds no vectors");
  return table;
}

// Per-class vector matrices for a vocabulary (states then objects), with
// fallback warnings surfaced once to stderr.
inline std::pair<Mat, Mat> resolve_vocabulary(const WordVectorTable& table, const Vocabulary& vocab) {
  std::vector<std::string> warnings;
  Mat sv(vocab.n_s(), table.dim), ov(vocab.n_o(), table.dim);
  for (int i = 0; i < vocab.n_s(); ++i)
    sv.row(i) = table.resolve(vocab.states[static_cast<std::size_t>(i)], &warnings).transpose();
  for (int i = 0; i < vocab.n_o(); ++i)
    ov.row(i) = table.resolve(vocab.objects[static_cast<std::size_t>(i)], &warnings).transpose();
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  return {sv, ov};
}

}  // namespace hgrl
