#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace csclog {

/// Returned by a frozen store for content that matches no mined template.
inline constexpr int kUnseenTemplate = -1;
/// Left-padding placeholder used for windows longer than their session.
inline constexpr int kPadTemplate = -2;

inline constexpr std::string_view kWildcard = "<*>";

struct LogTemplate {
  int id = 0;
  std::vector<std::string> tokens;

  std::string text() const;
};

struct ParseResult {
  int template_id = kUnseenTemplate;
  /// Original tokens at the template's wildcard positions, left to right.
  std::vector<std::string> parameters;
};

/// Splits on ASCII whitespace.
std::vector<std::string> tokenize(std::string_view content);
/// True for tokens such as "42", "-3.5", "1e9".
bool is_numeric_token(std::string_view token);

/// Drain-style template miner.
///
/// Messages descend a fixed-depth prefix tree: first by token count, then by
/// their leading (depth - 2) tokens. Tokens containing a digit route to a
/// shared wildcard branch. Within the reached leaf the most similar template
/// (share of positions holding an identical non-wildcard token) is chosen;
/// ties prefer the template with more wildcards, then the lower id.
class TemplateStore {
 public:
  struct Options {
    int depth = 4;
    double similarity_threshold = 0.5;
  };

  TemplateStore();
  explicit TemplateStore(Options options);
  TemplateStore(TemplateStore&&) noexcept;
  TemplateStore& operator=(TemplateStore&&) noexcept;
  ~TemplateStore();

  /// Matches `content`, creating or generalizing a template unless frozen.
  /// On a frozen store this is `match`.
  ParseResult parse(std::string_view content);
  /// Read-only lookup; kUnseenTemplate when no candidate clears the threshold.
  ParseResult match(std::string_view content) const;

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  const Options& options() const { return options_; }
  const std::vector<LogTemplate>& templates() const { return templates_; }
  std::size_t size() const { return templates_.size(); }
  const LogTemplate& at(int id) const;

  /// Line-delimited JSON: a header record then one {id, text} per template.
  void save(std::ostream& out) const;
  static TemplateStore load(std::istream& in);

 private:
  struct Node;

  std::vector<std::string> mask(const std::vector<std::string>& raw) const;
  const Node* find_leaf(const std::vector<std::string>& tokens) const;
  Node& insert_leaf(const std::vector<std::string>& tokens);
  int best_match(const Node* leaf, const std::vector<std::string>& tokens) const;
  ParseResult result_for(int id, const std::vector<std::string>& raw) const;

  Options options_;
  bool frozen_ = false;
  std::vector<LogTemplate> templates_;
  std::unique_ptr<Node> root_;
};

/// Returns a frozen copy-by-move of `store`.
TemplateStore freeze(TemplateStore store);

}  // namespace csclog
