#include "doctest.h"

#include "csclog/errors.hpp"
#include "csclog/parser.hpp"
#include "grammar_corpus.hpp"

#include <map>
#include <sstream>

using namespace csclog;

namespace {

// Substitutes parameters into the wildcard slots of a template.
std::vector<std::string> fill(const LogTemplate& t, const std::vector<std::string>& params) {
  std::vector<std::string> out;
  std::size_t p = 0;
  for (const auto& tok : t.tokens) out.push_back(tok == kWildcard ? params.at(p++) : tok);
  REQUIRE(p == params.size());
  return out;
}

}  // namespace

TEST_CASE("tokenize and numeric detection") {
  CHECK(tokenize("  a  b\tc ") == std::vector<std::string>{"a", "b", "c"});
  CHECK(tokenize("").empty());
  CHECK(is_numeric_token("42"));
  CHECK(is_numeric_token("-3.5"));
  CHECK(is_numeric_token("1e9"));
  CHECK_FALSE(is_numeric_token("10.0.0.1"));
  CHECK_FALSE(is_numeric_token("blk_1"));
  CHECK_FALSE(is_numeric_token(""));
}

TEST_CASE("similar messages share one generalized template") {
  TemplateStore store;
  auto a = store.parse("Connection from 10.0.0.1 closed");
  auto b = store.parse("Connection from 10.0.0.2 closed");
  CHECK(a.template_id == 0);
  CHECK(b.template_id == 0);
  CHECK(store.size() == 1);
  CHECK(store.at(0).text() == "Connection from <*> closed");
  CHECK(b.parameters == std::vector<std::string>{"10.0.0.2"});
  // The first message's parameters, read against the generalized template.
  auto replay = store.parse("Connection from 10.0.0.1 closed");
  CHECK(replay.template_id == 0);
  CHECK(replay.parameters == std::vector<std::string>{"10.0.0.1"});
}

TEST_CASE("numeric tokens are masked before descent") {
  TemplateStore store;
  auto r = store.parse("took 42 ms");
  CHECK(store.at(r.template_id).text() == "took <*> ms");
  CHECK(r.parameters == std::vector<std::string>{"42"});
}

TEST_CASE("parse is deterministic") {
  TemplateStore s1, s2;
  const std::vector<std::string> log = {"open file /a/1", "open file /b/2", "close handle 7", "open file /c/3"};
  for (const auto& m : log) {
    auto x = s1.parse(m);
    auto y = s2.parse(m);
    CHECK(x.template_id == y.template_id);
    CHECK(x.parameters == y.parameters);
  }
  auto again = s1.parse("open file /a/1");
  CHECK(again.template_id == s1.parse("open file /a/1").template_id);
}

TEST_CASE("different token counts give different templates") {
  TemplateStore store;
  auto a = store.parse("alpha beta gamma");
  auto b = store.parse("alpha beta gamma delta");
  CHECK(a.template_id != b.template_id);
}

TEST_CASE("dissimilar messages of equal length stay apart") {
  TemplateStore store;
  auto a = store.parse("disk quota exceeded now");
  auto b = store.parse("disk mount failed badly");
  CHECK(a.template_id != b.template_id);
  CHECK(store.size() == 2);
}

TEST_CASE("empty content is rejected") {
  TemplateStore store;
  CHECK_THROWS(store.parse("   "));
}

TEST_CASE("frozen store") {
  TemplateStore store;
  const int id = store.parse("worker 12 started").template_id;
  store.parse("worker 13 started");
  store = freeze(std::move(store));
  CHECK(store.frozen());
  CHECK(store.parse("worker 99 started").template_id == id);
  CHECK(store.parse("completely novel message here").template_id == kUnseenTemplate);
  CHECK(store.size() == 1);

  TemplateStore empty = freeze(TemplateStore{});
  CHECK(empty.size() == 0);
  CHECK(empty.parse("anything").template_id == kUnseenTemplate);
}

TEST_CASE("parameters substitute back to the original tokens") {
  const auto corpus = testing::make_grammar_corpus(8, 500, 21);
  TemplateStore store;
  for (const auto& m : corpus.messages) store.parse(m);
  store.freeze();
  for (const auto& m : corpus.messages) {
    auto r = store.parse(m);
    REQUIRE(r.template_id >= 0);
    CHECK(fill(store.at(r.template_id), r.parameters) == tokenize(m));
  }
}

TEST_CASE("template ids are append-only") {
  const auto corpus = testing::make_grammar_corpus(6, 300, 4);
  TemplateStore store;
  std::vector<int> first;
  for (const auto& m : corpus.messages) first.push_back(store.parse(m).template_id);
  for (std::size_t i = 0; i < corpus.messages.size(); ++i) {
    CHECK(store.parse(corpus.messages[i]).template_id == first[i]);
  }
}

TEST_CASE("recovers known grammars exactly") {
  for (int k : {1, 5, 12, 20}) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      CAPTURE(k);
      CAPTURE(seed);
      const auto corpus = testing::make_grammar_corpus(k, 2000, seed);
      TemplateStore store;
      std::vector<int> ids;
      for (const auto& m : corpus.messages) ids.push_back(store.parse(m).template_id);
      // Every grammar that occurred must map to exactly one template and back.
      std::map<int, int> grammar_to_id, id_to_grammar;
      bool consistent = true;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        auto [g, gi] = grammar_to_id.emplace(corpus.truth[i], ids[i]);
        auto [t, ti] = id_to_grammar.emplace(ids[i], corpus.truth[i]);
        consistent = consistent && g->second == ids[i] && t->second == corpus.truth[i];
      }
      CHECK(consistent);
      CHECK(store.size() == grammar_to_id.size());
      CHECK(static_cast<int>(grammar_to_id.size()) == k);
    }
  }
}

TEST_CASE("save and load round trip") {
  const auto corpus = testing::make_grammar_corpus(10, 800, 9);
  TemplateStore store;
  for (const auto& m : corpus.messages) store.parse(m);
  store.freeze();
  std::stringstream buf;
  store.save(buf);
  const std::string bytes = buf.str();
  TemplateStore loaded = TemplateStore::load(buf);
  CHECK(loaded.frozen());
  REQUIRE(loaded.size() == store.size());
  for (std::size_t i = 0; i < store.size(); ++i) CHECK(loaded.at(static_cast<int>(i)).text() == store.at(static_cast<int>(i)).text());
  for (const auto& m : corpus.messages) {
    auto a = store.match(m);
    auto b = loaded.match(m);
    CHECK(a.template_id == b.template_id);
    CHECK(a.parameters == b.parameters);
  }
  std::stringstream again;
  loaded.save(again);
  CHECK(again.str() == bytes);

  std::stringstream bad("{\"kind\":\"template_store\",\"version\":99}\n");
  CHECK_THROWS_AS(TemplateStore::load(bad), DataError);
}
