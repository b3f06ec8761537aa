#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "hgrl/archive.hpp"
#include "hgrl/encoders.hpp"

namespace hgrl {

// Offline-exported frozen encoder outputs in the unified archive container.
// Layout:
//   kind                 "feature-archive"
//   meta.d               image feature width (scalar)
//   meta.token_dim       word embedding width (scalar)
//   meta.temperature     logit temperature the exporter recommends (scalar)
//   images.refs          newline-joined image refs (bytes), one per row of
//   images.features      N x d image features, rows aligned with refs
//   words.vocab          newline-joined words (bytes), one per row of
//   words.vectors        W x token_dim word embeddings
//   text.projection      optional d x token_dim head applied after mean
//                        pooling; identity (requires token_dim == d) if absent
//
// The exporter runs wherever the real backbone lives and is deliberately not
// part of this library: images go through the frozen image tower once, the
// vocabulary goes through the embedding table once, and the results land
// here. Training then touches only prompt vectors and the heads in this
// repository, which is the same division of labor the full-scale recipe
// uses. The mean-pool text head below is the desk-scale stand-in for the
// frozen text tower; swapping in the real tower changes this class only.
class FeatureArchiveBackend final : public ImageBackend, public TextBackend {
 public:
  static FeatureArchiveBackend load(const std::string& path) { return FeatureArchiveBackend(Archive::load(path)); }

  explicit FeatureArchiveBackend(const Archive& a) {
    check_contract(a.str("kind") == "feature-archive", "adapter: archive is not a feature archive");
    d_ = static_cast<Eigen::Index>(a.scalar("meta.d"));
    token_dim_ = static_cast<Eigen::Index>(a.scalar("meta.token_dim"));
    temperature_ = a.scalar("meta.temperature");
    check_contract(d_ >= 1 && token_dim_ >= 1, "adapter: non-positive widths");
    check_contract(temperature_ > 0.0, "adapter: temperature must be positive");

    features_ = a.mat("images.features");
    const auto refs = split_lines(a.str("images.refs"));
    check_shape(static_cast<std::size_t>(features_.rows()) == refs.size() && features_.cols() == d_,
                "adapter: image refs and feature rows disagree");
    for (std::size_t i = 0; i < refs.size(); ++i) {
      if (!row_of_.emplace(refs[i], static_cast<Eigen::Index>(i)).second)
        throw ValidationError("adapter: duplicate image ref '" + refs[i] + "'");
    }

    words_ = a.mat("words.vectors");
    const auto vocab = split_lines(a.str("words.vocab"));
    check_shape(static_cast<std::size_t>(words_.rows()) == vocab.size() && words_.cols() == token_dim_,
                "adapter: vocab and word vector rows disagree");
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      const double n = words_.row(static_cast<Eigen::Index>(i)).norm();
      if (n <= 0.0) throw NumericError("adapter: zero-norm word vector for '" + vocab[i] + "'");
      words_.row(static_cast<Eigen::Index>(i)) /= n;
      if (!word_row_.emplace(vocab[i], static_cast<Eigen::Index>(i)).second)
        throw ValidationError("adapter: duplicate word '" + vocab[i] + "'");
    }

    if (a.has("text.projection")) {
      projection_ = a.mat("text.projection");
      check_shape(projection_.rows() == d_ && projection_.cols() == token_dim_,
                  "adapter: text projection must be d x token_dim");
    } else {
      check_shape(token_dim_ == d_, "adapter: identity text head needs token_dim == d");
      projection_ = Mat::Identity(d_, d_);
    }
    checksum_ = a.content_hash();
  }

  Eigen::Index dim() const override { return d_; }
  Eigen::Index token_dim() const override { return token_dim_; }
  Eigen::Index context_length() const override { return 16; }
  bool normalized() const override { return false; }
  double temperature() const override { return temperature_; }

  Vec encode_image(const std::string& image_ref) const override {
    const auto it = row_of_.find(image_ref);
    if (it == row_of_.end()) throw ValidationError("adapter: image ref '" + image_ref + "' not in the archive");
    return features_.row(it->second).transpose();
  }

  ad::Var encode_tokens(ad::Tape& tape, ad::Var tokens) const override {
    check_shape(tokens.cols() == token_dim_, "adapter: token width mismatch");
    return tape.matmul(tape.mean_rows(tokens), tape.constant(projection_.transpose()));
  }

  Vec class_word_embedding(const std::string& word) const override {
    const auto it = word_row_.find(word);
    if (it == word_row_.end()) throw ValidationError("adapter: word '" + word + "' not in the archive");
    return words_.row(it->second).transpose();
  }

  std::uint64_t frozen_checksum() const override { return checksum_; }

 private:
  static std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto nl = text.find('\n', start);
      if (nl == std::string::npos) {
        if (start < text.size()) out.push_back(text.substr(start));
        break;
      }
      out.push_back(text.substr(start, nl - start));
      start = nl + 1;
    }
    return out;
  }

  Eigen::Index d_ = 0, token_dim_ = 0;
  double temperature_ = 0.01;
  Mat features_, words_, projection_;
  std::unordered_map<std::string, Eigen::Index> row_of_, word_row_;
  std::uint64_t checksum_ = 0;
};

// Writer for the same layout, used by tests and by exporter scripts that
// already hold features in memory.
inline void write_feature_archive(const std::string& path, const std::vector<std::string>& image_refs,
                                  const Mat& features, const std::vector<std::string>& words, const Mat& vectors,
                                  double temperature = 0.01, const Mat* text_projection = nullptr) {
  check_shape(static_cast<std::size_t>(features.rows()) == image_refs.size(), "exporter: refs/features mismatch");
  check_shape(static_cast<std::size_t>(vectors.rows()) == words.size(), "exporter: words/vectors mismatch");
  Archive a;
  a.put("kind", std::string("feature-archive"));
  a.put_scalar("meta.d", static_cast<double>(features.cols()));
  a.put_scalar("meta.token_dim", static_cast<double>(vectors.cols()));
  a.put_scalar("meta.temperature", temperature);
  std::string refs, vocab;
  for (const auto& r : image_refs) refs += r + "\n";
  for (const auto& w : words) vocab += w + "\n";
  if (!refs.empty()) refs.pop_back();
  if (!vocab.empty()) vocab.pop_back();
  a.put("images.refs", refs);
  a.put("images.features", features);
  a.put("words.vocab", vocab);
  a.put("words.vectors", vectors);
  if (text_projection) a.put("text.projection", *text_projection);
  a.save(path);
}

}  // namespace hgrl
