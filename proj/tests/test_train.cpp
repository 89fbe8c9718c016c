#include "doctest.h"

#include "csclog/errors.hpp"
#include "csclog/train.hpp"
#include "fixture.hpp"

#include <cmath>
#include <sstream>

using namespace csclog;

namespace {

ParsedSession session_of(int n) {
  ParsedSession s;
  s.id = "s";
  for (int i = 0; i < n; ++i) s.messages.push_back({i % 3, 0, i});
  return s;
}

std::string checkpoint_bytes(Model& m, const AttentionState& s, const std::string& hash = "h") {
  std::ostringstream out;
  save_checkpoint(out, m, s, nlohmann::json{{"run", "test"}}, hash);
  return out.str();
}

testing::ParsedCorpus small_three_component(int sessions = 40) {
  auto spec = three_component_spec();
  spec.sessions = sessions;
  return testing::parsed_corpus(spec, 1);
}

}  // namespace

TEST_CASE("make_samples") {
  CHECK(make_samples(session_of(12), 10).size() == 2);
  CHECK(make_samples(session_of(10), 10).empty());
  auto one = make_samples(session_of(11), 10);
  REQUIRE(one.size() == 1);
  CHECK(one[0].target == 10 % 3);
  CHECK(one[0].offset == 0);
  CHECK(one[0].window.size() == 10);
  CHECK_THROWS_AS(make_samples(session_of(3), 0), ConfigError);

  std::vector<ParsedSession> many;
  std::size_t expect = 0;
  for (int n : {1, 4, 5, 9, 20}) {
    many.push_back(session_of(n));
    expect += static_cast<std::size_t>(std::max(0, n - 4));
  }
  CHECK(make_samples(many, 4).size() == expect);
}

TEST_CASE("loss") {
  auto c = small_three_component(20);
  auto cfg = testing::small_config(c);
  Model zero(cfg);
  auto samples = make_samples(c.train, 4);
  REQUIRE(samples.size() > 3);
  const auto state = AttentionState::uniform(cfg.num_components);
  SUBCASE("uniform prediction gives ln N_event") {
    Tape tape;
    CHECK(sample_loss(zero, tape, samples[0], c.table, state).value()(0, 0) ==
          doctest::Approx(std::log(static_cast<double>(cfg.num_templates))).epsilon(1e-12));
  }
  SUBCASE("batch loss is the mean of sample losses") {
    Model m(cfg);
    Rng rng(3);
    m.init(rng);
    double sum = 0.0;
    for (int i = 0; i < 4; ++i) {
      Tape t;
      sum += sample_loss(m, t, samples[static_cast<std::size_t>(i)], c.table, state).value()(0, 0);
    }
    std::vector<WindowSample> four(samples.begin(), samples.begin() + 4);
    CHECK(mean_loss(m, four, c.table, state) == doctest::Approx(sum / 4).epsilon(1e-14));
  }
  SUBCASE("unknown target is rejected") {
    auto bad = samples[0];
    bad.target = cfg.num_templates;
    Tape tape;
    CHECK_THROWS(sample_loss(zero, tape, bad, c.table, state));
  }
}

TEST_CASE("loss descends on a fixed batch") {
  auto c = small_three_component(20);
  auto cfg = testing::small_config(c);
  Model m(cfg);
  Rng rng(5);
  m.init(rng);
  auto all = make_samples(c.train, 4);
  std::vector<WindowSample> batch(all.begin(), all.begin() + 16);
  const auto state = AttentionState::uniform(cfg.num_components);
  Adam adam(AdamConfig{1e-4, 0.9, 0.999, 1e-8, 1e-4});
  double previous = mean_loss(m, batch, c.table, state);
  for (int step = 0; step < 5; ++step) {
    for (auto* p : m.parameters()) p->zero_grad();
    Tape tape;
    std::vector<Var> losses;
    for (const auto& s : batch) losses.push_back(sample_loss(m, tape, s, c.table, state));
    tape.backward(ops::scale(ops::sum_all(ops::concat_rows(losses)), 1.0 / 16));
    adam.step(m.parameters());
    const double now = mean_loss(m, batch, c.table, state);
    CHECK(now < previous);
    previous = now;
  }
}

TEST_CASE("training learns the deterministic grammar") {
  auto c = small_three_component(40);
  auto cfg = testing::small_config(c);
  Model m(cfg);
  Rng rng(7);
  m.init(rng);
  AttentionState state;
  auto samples = make_samples(c.train, 4);
  TrainConfig tc;
  tc.lr = 3e-3;
  tc.epochs = 15;
  tc.seed = 1;
  auto result = train(m, state, samples, {}, c.table, tc);
  CHECK(result.history.size() >= 1);
  CHECK(topk_accuracy(m, samples, c.table, state, 1) >= 0.95);
  CHECK(state.iteration > 0);
  CHECK(state.beta.sum() == doctest::Approx(1.0));
}

TEST_CASE("early stopping") {
  auto c = small_three_component(20);
  auto cfg = testing::small_config(c);
  Model m(cfg);
  Rng rng(9);
  m.init(rng);
  AttentionState state;
  auto samples = make_samples(c.train, 4);
  // Validation asks for a template the training data never places there, so
  // fitting the training targets drives validation loss up every epoch.
  std::vector<WindowSample> val(samples.begin(), samples.begin() + 8);
  for (auto& v : val) v.target = (v.target + 1) % cfg.num_templates;
  TrainConfig tc;
  tc.lr = 1e-2;
  tc.epochs = 10;
  tc.patience = 1;
  std::vector<EpochRecord> seen;
  auto r = train(m, state, samples, val, c.table, tc, [&](const EpochRecord& e) { seen.push_back(e); });
  REQUIRE(r.history.size() == 2);
  CHECK(r.history[1].val_loss > r.history[0].val_loss);
  CHECK(r.best_epoch == 1);
  CHECK(r.stopped_early);
  CHECK(seen.size() == 2);
  CHECK(TrainConfig{}.effective_patience() == 10);
}

TEST_CASE("validation does not mutate the model") {
  auto c = small_three_component(20);
  auto cfg = testing::small_config(c);
  Model m(cfg);
  Rng rng(2);
  m.init(rng);
  AttentionState state = AttentionState::uniform(cfg.num_components);
  const auto before = checkpoint_bytes(m, state);
  mean_loss(m, make_samples(c.train, 4), c.table, state);
  topk_accuracy(m, make_samples(c.train, 4), c.table, state, 2);
  CHECK(checkpoint_bytes(m, state) == before);
}

TEST_CASE("training is deterministic") {
  auto c = small_three_component(20);
  auto cfg = testing::small_config(c);
  cfg.dropout = 0.2;
  auto run = [&] {
    Model m(cfg);
    Rng rng(4);
    m.init(rng);
    AttentionState state;
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.epochs = 2;
    tc.seed = 11;
    train(m, state, make_samples(c.train, 4), {}, c.table, tc);
    return checkpoint_bytes(m, state);
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint round trip") {
  auto c = small_three_component(20);
  auto cfg = testing::small_config(c);
  cfg.ablation.ic_off = true;
  Model m(cfg);
  Rng rng(6);
  m.init(rng);
  AttentionState state = AttentionState::uniform(cfg.num_components);
  state.beta << 0.2, 0.3, 0.5;
  state.iteration = 17;
  const auto bytes = checkpoint_bytes(m, state, "abc");
  std::istringstream in(bytes);
  auto loaded = load_checkpoint(in, std::string("abc"));
  CHECK(loaded.store_hash == "abc");
  CHECK(loaded.settings.at("run") == "test");
  CHECK(loaded.state.iteration == 17);
  CHECK(loaded.model.config().ablation.ic_off);
  auto a = m.parameters();
  auto b = loaded.model.parameters();
  REQUIRE(a.size() == b.size());
  bool identical = true;
  for (std::size_t i = 0; i < a.size(); ++i) identical = identical && a[i]->value == b[i]->value;
  CHECK(identical);
  CHECK(checkpoint_bytes(loaded.model, loaded.state, "abc") == bytes);

  std::istringstream wrong(bytes);
  CHECK_THROWS_AS(load_checkpoint(wrong, std::string("other")), DataError);
  std::istringstream garbage("{\"kind\":\"checkpoint\",\"version\":7}");
  CHECK_THROWS_AS(load_checkpoint(garbage), DataError);
}

TEST_CASE("history CSV") {
  std::ostringstream out;
  write_history_csv(out, {{1, 0.5, 0.25}, {2, 0.125, 0.375}});
  CHECK(out.str() == "epoch,train_loss,val_loss\n1,0.5,0.25\n2,0.125,0.375\n");
}
