#include "csclog/features.hpp"

#include "csclog/errors.hpp"
#include "csclog/rng.hpp"
#include "csclog/stoplist.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace csclog {

const std::vector<std::string>& preposition_stoplist() {
  static const std::vector<std::string> list = [] {
    std::vector<std::string> out;
    std::istringstream in(detail::kPrepositionList);
    std::string word;
    while (in >> word) out.push_back(word);
    return out;
  }();
  return list;
}

std::vector<std::string> extract_keywords(std::string_view template_text) {
  static const std::set<std::string> stop(preposition_stoplist().begin(), preposition_stoplist().end());
  std::vector<std::string> out;
  for (const auto& token : tokenize(template_text)) {
    if (token == kWildcard) continue;
    std::string word;
    auto flush = [&] {
      if (!word.empty() && !stop.count(word)) out.push_back(word);
      word.clear();
    };
    for (char c : token) {
      if (std::isalpha(static_cast<unsigned char>(c))) {
        word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      } else {
        flush();
      }
    }
    flush();
  }
  return out;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

HashEmbedding::HashEmbedding(int dimension, std::uint64_t seed) : dimension_(dimension), seed_(seed) {
  if (dimension <= 0) throw ConfigError("embedding dimension must be positive");
}

Eigen::RowVectorXd HashEmbedding::embed(const std::string& word) const {
  Rng rng(fnv1a(word) ^ (seed_ * 0x9E3779B97F4A7C15ULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::RowVectorXd v(dimension_);
  for (int i = 0; i < dimension_; ++i) v(i) = normal(rng);
  return v / v.norm();
}

std::string HashEmbedding::describe() const {
  return "hash(dim=" + std::to_string(dimension_) + ",seed=" + std::to_string(seed_) + ")";
}

FileEmbedding FileEmbedding::load(const std::filesystem::path& path, int dimension, std::uint64_t fallback_seed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  FileEmbedding out(path.string(), dimension, fallback_seed);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(path.string() + ":" + std::to_string(number) + ": missing tab");
    Eigen::RowVectorXd v(dimension);
    std::istringstream values(line.substr(tab + 1));
    std::string cell;
    int i = 0;
    while (std::getline(values, cell, ',')) {
      if (i >= dimension) break;
      try {
        v(i++) = std::stod(cell);
      } catch (const std::exception&) {
        throw DataError(path.string() + ":" + std::to_string(number) + ": bad number '" + cell + "'");
      }
    }
    if (i != dimension || std::getline(values, cell, ',')) {
      throw DataError(path.string() + ":" + std::to_string(number) + ": expected " + std::to_string(dimension) +
                      " values");
    }
    out.table_[line.substr(0, tab)] = std::move(v);
  }
  return out;
}

Eigen::RowVectorXd FileEmbedding::embed(const std::string& word) const {
  if (auto it = table_.find(word); it != table_.end()) return it->second;
  return fallback_.embed(word);
}

std::string FileEmbedding::describe() const { return "file(" + source_ + ")+" + fallback_.describe(); }

TfidfTable::TfidfTable(const std::vector<std::vector<std::string>>& documents) : num_documents_(documents.size()) {
  for (const auto& doc : documents) {
    for (const auto& w : std::set<std::string>(doc.begin(), doc.end())) ++df_[w];
  }
}

std::size_t TfidfTable::document_frequency(const std::string& word) const {
  auto it = df_.find(word);
  return it == df_.end() ? 0 : it->second;
}

double TfidfTable::idf(const std::string& word) const {
  return std::log((1.0 + static_cast<double>(num_documents_)) / (1.0 + static_cast<double>(document_frequency(word)))) +
         1.0;
}

std::vector<double> TfidfTable::weights(const std::vector<std::string>& document) const {
  std::map<std::string, std::size_t> counts;
  for (const auto& w : document) ++counts[w];
  std::vector<double> out;
  out.reserve(document.size());
  for (const auto& w : document) {
    const double tf = static_cast<double>(counts[w]) / static_cast<double>(document.size());
    out.push_back(tf * idf(w));
  }
  return out;
}

Eigen::RowVectorXd semantic_vector(const std::vector<std::string>& keywords, const TfidfTable& tfidf,
                                   const EmbeddingProvider& embedder) {
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(embedder.dimension());
  if (keywords.empty()) return v;
  const auto w = tfidf.weights(keywords);
  for (std::size_t i = 0; i < keywords.size(); ++i) v += w[i] * embedder.embed(keywords[i]);
  return v / static_cast<double>(keywords.size());
}

SemanticTable build_semantic_table(const TemplateStore& store, const EmbeddingProvider& embedder) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(store.size());
  for (const auto& t : store.templates()) docs.push_back(extract_keywords(t.text()));
  const TfidfTable tfidf(docs);
  SemanticTable table;
  table.vectors = Tensor::Zero(static_cast<Eigen::Index>(store.size()), embedder.dimension());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    table.vectors.row(static_cast<Eigen::Index>(i)) = semantic_vector(docs[i], tfidf, embedder);
  }
  return table;
}

std::vector<double> temporal_features(const std::vector<std::int64_t>& timestamps) {
  std::vector<double> out;
  out.reserve(timestamps.size());
  for (auto t : timestamps) out.push_back(static_cast<double>(t - timestamps.front()));
  return out;
}

FeatureBundle build_bundle(const std::vector<int>& template_ids, const std::vector<std::int64_t>& timestamps,
                           const SemanticTable& table) {
  if (template_ids.size() != timestamps.size()) throw ShapeError("build_bundle: ids and timestamps differ in length");
  const auto n = static_cast<Eigen::Index>(template_ids.size());
  FeatureBundle b;
  b.semantic = Tensor::Zero(n, table.dimension());
  b.temporal = Tensor::Zero(n, 1);
  const auto rel = temporal_features(timestamps);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int id = template_ids[static_cast<std::size_t>(i)];
    if (id >= 0 && static_cast<std::size_t>(id) < table.size()) b.semantic.row(i) = table.vectors.row(id);
    b.temporal(i, 0) = rel[static_cast<std::size_t>(i)];
  }
  return b;
}

}  // namespace csclog
