#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "hgrl/ad.hpp"
#include "hgrl/rng.hpp"
#include "hgrl/synthetic.hpp"
#include "hgrl/vocab.hpp"

namespace hgrl {

// Frozen image featurizer. Deterministic; the toy backend serves stored
// synthetic vectors, the pretrained adapter serves precomputed features.
class ImageBackend {
 public:
  virtual ~ImageBackend() = default;
  virtual Eigen::Index dim() const = 0;
  virtual bool normalized() const = 0;
  virtual Vec encode_image(const std::string& image_ref) const = 0;
  virtual std::uint64_t frozen_checksum() const = 0;
};

// Frozen text encoder over token-embedding sequences. encode_tokens is
// differentiable with respect to the input rows (learnable prompt tokens);
// the encoder weights themselves never receive gradients.
class TextBackend {
 public:
  virtual ~TextBackend() = default;
  virtual Eigen::Index dim() const = 0;
  virtual Eigen::Index token_dim() const = 0;
  virtual Eigen::Index context_length() const = 0;
  virtual bool normalized() const = 0;
  virtual double temperature() const = 0;
  virtual ad::Var encode_tokens(ad::Tape& tape, ad::Var tokens) const = 0;
  virtual Vec class_word_embedding(const std::string& word) const = 0;
  virtual std::uint64_t frozen_checksum() const = 0;

 protected:
  void check_length(Eigen::Index rows) const {
    if (rows > context_length())
      throw ValidationError("prompt length " + std::to_string(rows) + " exceeds context length " +
                            std::to_string(context_length()));
  }
};

// Batched image encoding; per-sample failures are aggregated into one error.
inline Mat encode_batch(const ImageBackend& backend, const std::vector<Sample>& samples) {
  check_contract(!samples.empty(), "encode_batch: empty batch");
  Mat out(static_cast<Eigen::Index>(samples.size()), backend.dim());
  std::string failures;
  int failed = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    try {
      out.row(static_cast<Eigen::Index>(i)) = backend.encode_image(samples[i].image_ref).transpose();
    } catch (const Error& e) {
      ++failed;
      if (failed <= 8) failures += "\n  " + samples[i].image_ref + ": " + e.what();
    }
  }
  if (failed > 0)
    throw ValidationError("encode_batch: " + std::to_string(failed) + " of " + std::to_string(samples.size()) +
                          " samples failed" + failures);
  return out;
}

struct ToyBackendSpec {
  int d = 32;
  std::uint64_t seed = 1;

  void validate() const { check_contract(d >= 4, "toy backend: d must be >= 4"); }
};

// Deterministic desk-scale backend. Images resolve "syn:<row>" references
// into a stored feature table; text is mean-of-token-embeddings followed by
// a frozen random projection, so every downstream value has a closed form.
class ToyBackend final : public ImageBackend, public TextBackend {
 public:
  ToyBackend(const ToyBackendSpec& spec, Mat stored_features)
      : spec_(spec), features_(std::move(stored_features)) {
    spec_.validate();
    check_shape(features_.cols() == spec_.d || features_.rows() == 0,
                "toy backend: stored feature width must equal d");
    Rng rng(fnv1a("toy_projection", spec_.seed));
    // Near-identity frozen projection (identity plus a small seeded Gaussian).
    // A scrambling projection would sever the correspondence between token
    // space and feature space that word registration establishes; a real
    // pretrained encoder pair ships with that correspondence built in.
    projection_ = Mat::Identity(spec_.d, token_dim()) +
                  rng.gaussian_matrix(spec_.d, token_dim(), 0.02);
  }

  static ToyBackend for_synthetic(const SyntheticDataset& ds) {
    ToyBackendSpec spec;
    spec.d = ds.spec.d;
    spec.seed = ds.spec.seed;
    ToyBackend backend(spec, ds.features);
    // Class tokens mirror the real backend, where word embeddings live in the
    // same space as the image features they describe. The generator composes
    // features as [state half ; object half] and derives its word vectors
    // from the same group directions, so place state words over the state
    // half and object words over the object half instead of falling back to
    // per-word hash noise.
    const Eigen::Index half = spec.d / 2;
    for (std::size_t i = 0; i < ds.data.vocab.states.size(); ++i)
      backend.register_word(ds.data.vocab.states[i], ds.state_words.row(static_cast<Eigen::Index>(i)), 0);
    for (std::size_t i = 0; i < ds.data.vocab.objects.size(); ++i)
      backend.register_word(ds.data.vocab.objects[i], ds.object_words.row(static_cast<Eigen::Index>(i)), half);
    return backend;
  }

  // Pins a word to a fixed vector placed at a column offset (padded or
  // truncated to fit, then unit-normalized); unregistered words keep the
  // seeded-hash fallback. The offset lets disjoint vocabularies occupy
  // disjoint token subspaces, the way a real embedding table keeps unrelated
  // word families apart.
  void register_word(const std::string& word, const Eigen::RowVectorXd& vector, Eigen::Index offset = 0) {
    check_contract(vector.size() > 0, "toy backend: empty word vector");
    check_contract(offset >= 0 && offset < token_dim(), "toy backend: word offset out of range");
    Vec v = Vec::Zero(token_dim());
    const Eigen::Index n = std::min<Eigen::Index>(vector.size(), token_dim() - offset);
    v.segment(offset, n) = vector.head(n).transpose();
    const double norm = v.norm();
    if (norm <= 0.0) throw NumericError("toy backend: zero-norm word vector for '" + word + "'");
    word_table_[word] = v / norm;
  }

  Eigen::Index dim() const override { return spec_.d; }
  Eigen::Index token_dim() const override { return spec_.d; }
  Eigen::Index context_length() const override { return 16; }
  bool normalized() const override { return false; }
  double temperature() const override { return 0.01; }

  Vec encode_image(const std::string& image_ref) const override {
    if (image_ref.rfind("syn:", 0) != 0)
      throw ValidationError("toy backend: unknown image ref '" + image_ref + "'");
    const long row = std::stol(image_ref.substr(4));
    if (row < 0 || row >= features_.rows())
      throw ValidationError("toy backend: image ref out of range '" + image_ref + "'");
    return features_.row(row).transpose();
  }

  ad::Var encode_tokens(ad::Tape& tape, ad::Var tokens) const override {
    check_length(tokens.rows());
    check_shape(tokens.cols() == token_dim(), "toy backend: token width mismatch");
    return tape.matmul(tape.mean_rows(tokens), tape.constant(projection_.transpose()));
  }

  // Closed form of encode_tokens for oracle tests: mean of rows times P^T.
  Mat encode_tokens_closed_form(const Mat& tokens) const {
    Mat mean = tokens.colwise().sum() / static_cast<double>(tokens.rows());
    return mean * projection_.transpose();
  }

  Vec class_word_embedding(const std::string& word) const override {
    auto it = word_table_.find(word);
    if (it != word_table_.end()) return it->second;
    Rng rng(fnv1a(word, fnv1a("toy_words", spec_.seed)));
    Mat m = rng.gaussian_matrix(1, token_dim());
    m /= m.norm();
    return m.row(0).transpose();
  }

  std::uint64_t frozen_checksum() const override {
    return fnv1a(projection_.data(), sizeof(double) * static_cast<std::size_t>(projection_.size()),
                 fnv1a("toy", spec_.seed));
  }

  const Mat& projection() const { return projection_; }

 private:
  ToyBackendSpec spec_;
  Mat features_;
  Mat projection_;  // d x token_dim, frozen
  std::unordered_map<std::string, Vec> word_table_;
};

}  // namespace hgrl
