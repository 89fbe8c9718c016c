#pragma once

#include "csclog/parser.hpp"
#include "csclog/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace csclog {

/// Lowercased letter runs of a template, minus wildcards and prepositions.
/// "Connection from <*> closed" -> {"connection", "closed"}.
std::vector<std::string> extract_keywords(std::string_view template_text);

/// The built-in preposition stoplist.
const std::vector<std::string>& preposition_stoplist();

/// Stable word -> vector mapping.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual int dimension() const = 0;
  virtual Eigen::RowVectorXd embed(const std::string& word) const = 0;
  /// Short description recorded in manifests.
  virtual std::string describe() const = 0;
};

/// Unit-norm Gaussian vector seeded by a hash of the word.
class HashEmbedding final : public EmbeddingProvider {
 public:
  explicit HashEmbedding(int dimension = 768, std::uint64_t seed = 0);
  int dimension() const override { return dimension_; }
  Eigen::RowVectorXd embed(const std::string& word) const override;
  std::string describe() const override;

 private:
  int dimension_;
  std::uint64_t seed_;
};

/// Precomputed table read from "word<TAB>v1,...,vD" lines; unknown words fall
/// back to a HashEmbedding of the same dimension.
class FileEmbedding final : public EmbeddingProvider {
 public:
  static FileEmbedding load(const std::filesystem::path& path, int dimension, std::uint64_t fallback_seed = 0);

  int dimension() const override { return fallback_.dimension(); }
  Eigen::RowVectorXd embed(const std::string& word) const override;
  std::string describe() const override;
  std::size_t size() const { return table_.size(); }

 private:
  FileEmbedding(std::string source, int dimension, std::uint64_t seed) : source_(std::move(source)), fallback_(dimension, seed) {}

  std::string source_;
  HashEmbedding fallback_;
  std::unordered_map<std::string, Eigen::RowVectorXd> table_;
};

/// Smoothed TF-IDF over keyword documents:
///   tf(w, doc) = count(w) / |doc|
///   idf(w)     = ln((1 + num_documents) / (1 + df(w))) + 1
class TfidfTable {
 public:
  TfidfTable() = default;
  explicit TfidfTable(const std::vector<std::vector<std::string>>& documents);

  double idf(const std::string& word) const;
  /// One weight per keyword occurrence of `document`, in order.
  std::vector<double> weights(const std::vector<std::string>& document) const;

  std::size_t num_documents() const { return num_documents_; }
  std::size_t document_frequency(const std::string& word) const;

 private:
  std::size_t num_documents_ = 0;
  std::map<std::string, std::size_t> df_;
};

/// (1/N_e) * sum_i w_i v_i over the keywords; zero when there are none.
Eigen::RowVectorXd semantic_vector(const std::vector<std::string>& keywords, const TfidfTable& tfidf,
                                   const EmbeddingProvider& embedder);

/// Semantic vector of every template in a store, one row per template id.
/// The TF-IDF corpus is the store's own templates (one document each).
struct SemanticTable {
  Tensor vectors;  // N_event x dimension

  int dimension() const { return static_cast<int>(vectors.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(vectors.rows()); }
};

SemanticTable build_semantic_table(const TemplateStore& store, const EmbeddingProvider& embedder);

/// t_i - t_1; empty for empty input.
std::vector<double> temporal_features(const std::vector<std::int64_t>& timestamps);

/// Per-row features of a sequence or subsequence.
struct FeatureBundle {
  Tensor semantic;  // N x dimension
  Tensor temporal;  // N x 1, first entry 0, non-decreasing

  Eigen::Index length() const { return semantic.rows(); }
};

/// Builds a bundle from template ids and timestamps. Rows for ids outside the
/// table (UNSEEN, PAD) are zero.
FeatureBundle build_bundle(const std::vector<int>& template_ids, const std::vector<std::int64_t>& timestamps,
                           const SemanticTable& table);

}  // namespace csclog
