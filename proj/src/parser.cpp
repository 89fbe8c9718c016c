#include "csclog/parser.hpp"

#include "csclog/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace csclog {

namespace {

constexpr int kStoreFormatVersion = 1;

bool has_digit(std::string_view token) {
  return std::any_of(token.begin(), token.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
}

// Key used for one tree level.
std::string route_key(const std::string& token) {
  if (token == kWildcard || has_digit(token)) return std::string(kWildcard);
  return token;
}

}  // namespace

struct TemplateStore::Node {
  std::map<std::string, std::unique_ptr<Node>> children;
  std::vector<int> group;
};

std::string LogTemplate::text() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view content) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < content.size()) {
    while (i < content.size() && std::isspace(static_cast<unsigned char>(content[i]))) ++i;
    const std::size_t start = i;
    while (i < content.size() && !std::isspace(static_cast<unsigned char>(content[i]))) ++i;
    if (i > start) out.emplace_back(content.substr(start, i - start));
  }
  return out;
}

bool is_numeric_token(std::string_view t) {
  std::size_t i = 0;
  if (i < t.size() && (t[i] == '+' || t[i] == '-')) ++i;
  std::size_t digits = 0;
  while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i, ++digits;
  if (i < t.size() && t[i] == '.') {
    ++i;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i, ++digits;
  }
  if (digits == 0) return false;
  if (i < t.size() && (t[i] == 'e' || t[i] == 'E')) {
    ++i;
    if (i < t.size() && (t[i] == '+' || t[i] == '-')) ++i;
    std::size_t exp_digits = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i, ++exp_digits;
    if (exp_digits == 0) return false;
  }
  return i == t.size();
}

TemplateStore::TemplateStore() : TemplateStore(Options{}) {}

TemplateStore::TemplateStore(Options options) : options_(options), root_(std::make_unique<Node>()) {
  if (options_.depth < 2) throw std::invalid_argument("template tree depth must be >= 2");
  if (!(options_.similarity_threshold > 0.0 && options_.similarity_threshold <= 1.0)) {
    throw std::invalid_argument("similarity threshold must be in (0, 1]");
  }
}

TemplateStore::TemplateStore(TemplateStore&&) noexcept = default;
TemplateStore& TemplateStore::operator=(TemplateStore&&) noexcept = default;
TemplateStore::~TemplateStore() = default;

const LogTemplate& TemplateStore::at(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= templates_.size()) {
    throw std::out_of_range("template id " + std::to_string(id) + " not in store");
  }
  return templates_[static_cast<std::size_t>(id)];
}

std::vector<std::string> TemplateStore::mask(const std::vector<std::string>& raw) const {
  std::vector<std::string> out = raw;
  for (auto& t : out) {
    if (is_numeric_token(t)) t = std::string(kWildcard);
  }
  return out;
}

const TemplateStore::Node* TemplateStore::find_leaf(const std::vector<std::string>& tokens) const {
  auto it = root_->children.find(std::to_string(tokens.size()));
  if (it == root_->children.end()) return nullptr;
  const Node* node = it->second.get();
  const std::size_t levels = std::min<std::size_t>(static_cast<std::size_t>(options_.depth - 2), tokens.size());
  const std::string wildcard(kWildcard);
  for (std::size_t i = 0; i < levels; ++i) {
    const std::string key = route_key(tokens[i]);
    auto child = node->children.find(key);
    if (child == node->children.end()) child = node->children.find(wildcard);
    if (child == node->children.end()) return nullptr;
    node = child->second.get();
  }
  return node;
}

TemplateStore::Node& TemplateStore::insert_leaf(const std::vector<std::string>& tokens) {
  auto& slot = root_->children[std::to_string(tokens.size())];
  if (!slot) slot = std::make_unique<Node>();
  Node* node = slot.get();
  const std::size_t levels = std::min<std::size_t>(static_cast<std::size_t>(options_.depth - 2), tokens.size());
  for (std::size_t i = 0; i < levels; ++i) {
    auto& child = node->children[route_key(tokens[i])];
    if (!child) child = std::make_unique<Node>();
    node = child.get();
  }
  return *node;
}

int TemplateStore::best_match(const Node* leaf, const std::vector<std::string>& tokens) const {
  if (leaf == nullptr) return kUnseenTemplate;
  int best = kUnseenTemplate;
  double best_sim = -1.0;
  int best_wild = -1;
  for (int id : leaf->group) {
    const auto& tt = templates_[static_cast<std::size_t>(id)].tokens;
    if (tt.size() != tokens.size()) continue;
    int same = 0;
    int wild = 0;
    for (std::size_t i = 0; i < tt.size(); ++i) {
      if (tt[i] == kWildcard) {
        ++wild;
      } else if (tt[i] == tokens[i]) {
        ++same;
      }
    }
    const double sim = static_cast<double>(same) / static_cast<double>(tt.size());
    if (sim > best_sim || (sim == best_sim && wild > best_wild)) {
      best = id;
      best_sim = sim;
      best_wild = wild;
    }
  }
  if (best_sim >= options_.similarity_threshold) return best;
  return kUnseenTemplate;
}

ParseResult TemplateStore::result_for(int id, const std::vector<std::string>& raw) const {
  ParseResult r;
  r.template_id = id;
  if (id < 0) return r;
  const auto& tt = templates_[static_cast<std::size_t>(id)].tokens;
  for (std::size_t i = 0; i < tt.size(); ++i) {
    if (tt[i] == kWildcard) r.parameters.push_back(raw[i]);
  }
  return r;
}

ParseResult TemplateStore::match(std::string_view content) const {
  const auto raw = tokenize(content);
  if (raw.empty()) throw std::invalid_argument("cannot parse empty log content");
  const auto masked = mask(raw);
  return result_for(best_match(find_leaf(masked), masked), raw);
}

ParseResult TemplateStore::parse(std::string_view content) {
  if (frozen_) return match(content);
  const auto raw = tokenize(content);
  if (raw.empty()) throw std::invalid_argument("cannot parse empty log content");
  const auto masked = mask(raw);
  int id = best_match(find_leaf(masked), masked);
  if (id >= 0) {
    auto& tt = templates_[static_cast<std::size_t>(id)].tokens;
    for (std::size_t i = 0; i < tt.size(); ++i) {
      if (tt[i] != masked[i]) tt[i] = std::string(kWildcard);
    }
  } else {
    id = static_cast<int>(templates_.size());
    templates_.push_back(LogTemplate{id, masked});
    insert_leaf(masked).group.push_back(id);
  }
  return result_for(id, raw);
}

void TemplateStore::save(std::ostream& out) const {
  nlohmann::ordered_json header = {{"version", kStoreFormatVersion},
                           {"kind", "template_store"},
                           {"depth", options_.depth},
                           {"threshold", options_.similarity_threshold},
                           {"frozen", frozen_},
                           {"count", templates_.size()}};
  out << header.dump() << '\n';
  for (const auto& t : templates_) {
    out << nlohmann::ordered_json{{"id", t.id}, {"text", t.text()}}.dump() << '\n';
  }
}

TemplateStore TemplateStore::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("template store: missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("template store: bad header: ") + e.what());
  }
  if (header.value("kind", "") != "template_store") throw DataError("template store: wrong file kind");
  if (header.value("version", 0) != kStoreFormatVersion) {
    throw DataError("template store: unsupported version " + header.value("version", nlohmann::json(0)).dump());
  }
  TemplateStore store(Options{header.at("depth").get<int>(), header.at("threshold").get<double>()});
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    const int id = rec.at("id").get<int>();
    if (id != static_cast<int>(store.templates_.size())) throw DataError("template store: ids not dense");
    auto tokens = tokenize(rec.at("text").get<std::string>());
    if (tokens.empty()) throw DataError("template store: empty template " + std::to_string(id));
    store.templates_.push_back(LogTemplate{id, tokens});
    store.insert_leaf(tokens).group.push_back(id);
  }
  if (header.contains("count") && header["count"].get<std::size_t>() != store.templates_.size()) {
    throw DataError("template store: truncated file");
  }
  store.frozen_ = header.at("frozen").get<bool>();
  return store;
}

TemplateStore freeze(TemplateStore store) {
  store.freeze();
  return store;
}

}  // namespace csclog
