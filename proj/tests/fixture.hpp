#pragma once

// Synthetic corpus -> parsed sessions, templates and semantic table.

#include "csclog/dataset.hpp"
#include "csclog/features.hpp"
#include "csclog/model.hpp"
#include "csclog/synth.hpp"

namespace csclog::testing {

struct ParsedCorpus {
  TemplateStore store;
  ComponentSet components;
  SemanticTable table;
  std::vector<ParsedSession> train;  // normal sessions only
  std::vector<ParsedSession> test;   // everything, labels intact
};

/// Mines templates from the normal sessions of `spec` and parses a separate
/// test corpus drawn with `test_seed`.
inline ParsedCorpus parsed_corpus(const SyntheticSpec& train_spec, std::uint64_t seed,
                                  const SyntheticSpec* test_spec = nullptr, std::uint64_t test_seed = 0,
                                  int semantic_dim = 32) {
  ParsedCorpus c;
  auto corpus = generate_synthetic(train_spec, seed);
  auto normal = filter_normal(corpus.sessions);
  c.store = freeze(mine_templates(normal));
  c.components = ComponentSet::from_sessions(normal);
  c.table = build_semantic_table(c.store, HashEmbedding(semantic_dim, 0));
  c.train = parse_sessions(normal, c.store, c.components);
  if (test_spec != nullptr) {
    c.test = parse_sessions(generate_synthetic(*test_spec, test_seed).sessions, c.store, c.components);
  }
  return c;
}

inline ModelConfig small_config(const ParsedCorpus& c, int d = 16, int h = 16) {
  ModelConfig m;
  m.num_templates = static_cast<int>(c.store.size());
  m.num_components = c.components.size();
  m.semantic_dim = c.table.dimension();
  m.embed_dim = d;
  m.hidden_dim = h;
  m.alpha_emb = 0.75;
  m.dropout = 0.0;
  return m;
}

}  // namespace csclog::testing
