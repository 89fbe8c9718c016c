#include "doctest.h"

#include "csclog/errors.hpp"
#include "csclog/eval.hpp"
#include "csclog/rng.hpp"
#include "fixture.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace csclog;

namespace {

// Straight from the definitions: per class, count matches item by item.
struct Oracle {
  double accuracy, macro_p, macro_r, macro_f1;
};

Oracle brute_force(const std::vector<int>& pred, const std::vector<int>& truth, int n_class) {
  Oracle o{0, 0, 0, 0};
  double correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += pred[i] == truth[i] ? 1.0 : 0.0;
  o.accuracy = truth.empty() ? 0.0 : correct / static_cast<double>(truth.size());
  for (int k = 0; k < n_class; ++k) {
    double tp = 0, predicted_k = 0, actual_k = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (pred[i] == k && truth[i] == k) tp += 1;
      if (pred[i] == k) predicted_k += 1;
      if (truth[i] == k) actual_k += 1;
    }
    const double p = predicted_k > 0 ? tp / predicted_k : 0.0;
    const double r = actual_k > 0 ? tp / actual_k : 0.0;
    const double f = (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
    o.macro_p += p / n_class;
    o.macro_r += r / n_class;
    o.macro_f1 += f / n_class;
  }
  return o;
}

DetectionVerdict verdict(Label truth, Label predicted) {
  DetectionVerdict v;
  v.truth = truth;
  v.verdict = predicted;
  return v;
}

MetricsReport sample_report() {
  auto a = compute_metrics({0, 1, 1, 0}, {0, 1, 0, 0}, 2);
  auto b = compute_metrics({1, 1, 0, 0}, {1, 1, 0, 0}, 2);
  return MetricsReport{{aggregate("full", "detection", 1, {1, 2}, {a, b}),
                        aggregate("wo_ic", "detection", 1, {1}, {a})}};
}

std::string emitted(const MetricsReport& r, ReportFormat f) {
  std::ostringstream out;
  emit_report(out, r, f);
  return out.str();
}

}  // namespace

TEST_CASE("compute_metrics examples") {
  auto perfect = compute_metrics({0, 1, 1, 0, 1}, {0, 1, 1, 0, 1}, 2);
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  auto complement = compute_metrics({1, 0, 0, 1}, {0, 1, 1, 0}, 2);
  CHECK(complement.f1 == 0.0);
  CHECK(complement.accuracy == 0.0);

  // Class 2 never occurs: zero by convention, and it still counts in the mean.
  auto absent = compute_metrics({0, 1}, {0, 1}, 3);
  CHECK(absent.per_class[2].f1 == 0.0);
  CHECK(absent.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  auto restricted = compute_metrics({0, 1}, {0, 1}, 3, {0, 1});
  CHECK(restricted.f1 == 1.0);

  auto m = compute_metrics({0, 0, 1, 1, 1}, {0, 1, 1, 1, 0}, 2);
  CHECK(m.per_class[1].tp == 2);
  CHECK(m.per_class[1].fp == 1);
  CHECK(m.per_class[1].fn == 1);
  CHECK(m.per_class[1].precision == doctest::Approx(2.0 / 3.0));
  CHECK(m.total == 5);

  CHECK_THROWS_AS(compute_metrics({0}, {0, 1}, 2), DataError);
  CHECK_THROWS_AS(compute_metrics({2}, {0}, 2), DataError);
  CHECK_THROWS_AS(compute_metrics({0}, {0}, 2, {5}), DataError);
}

TEST_CASE("compute_metrics matches the definition oracle") {
  std::mt19937_64 rng(20240601);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n_class = 1 + static_cast<int>(rng() % 6);
    const int n = static_cast<int>(rng() % 60);
    std::vector<int> pred(static_cast<std::size_t>(n)), truth(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      pred[static_cast<std::size_t>(i)] = static_cast<int>(rng() % static_cast<unsigned>(n_class));
      truth[static_cast<std::size_t>(i)] = static_cast<int>(rng() % static_cast<unsigned>(n_class));
    }
    const auto m = compute_metrics(pred, truth, n_class);
    const auto o = brute_force(pred, truth, n_class);
    worst = std::max({worst, std::abs(m.accuracy - o.accuracy), std::abs(m.precision - o.macro_p),
                      std::abs(m.recall - o.macro_r), std::abs(m.f1 - o.macro_f1)});
    long long sum = 0;
    for (const auto& pc : m.per_class) sum += pc.support;
    CHECK(sum == n);
    for (double v : {m.accuracy, m.precision, m.recall, m.f1}) CHECK((v >= 0.0 && v <= 1.0));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("metrics are invariant under relabeling") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int n_class = 2 + static_cast<int>(rng() % 5);
    std::vector<int> pred(40), truth(40), perm(static_cast<std::size_t>(n_class));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < 40; ++i) {
      pred[i] = static_cast<int>(rng() % static_cast<unsigned>(n_class));
      truth[i] = static_cast<int>(rng() % static_cast<unsigned>(n_class));
    }
    std::vector<int> pred2, truth2;
    for (std::size_t i = 0; i < 40; ++i) {
      pred2.push_back(perm[static_cast<std::size_t>(pred[i])]);
      truth2.push_back(perm[static_cast<std::size_t>(truth[i])]);
    }
    const auto a = compute_metrics(pred, truth, n_class);
    const auto b = compute_metrics(pred2, truth2, n_class);
    CHECK(a.f1 == doctest::Approx(b.f1).epsilon(1e-14));
    CHECK(a.accuracy == b.accuracy);
    for (int c = 0; c < n_class; ++c) {
      const auto& x = a.per_class[static_cast<std::size_t>(c)];
      const auto& y = b.per_class[static_cast<std::size_t>(perm[static_cast<std::size_t>(c)])];
      CHECK(x.f1 == y.f1);
      CHECK(x.support == y.support);
    }
  }
}

TEST_CASE("detection evaluation") {
  auto all_normal = evaluate_detection({verdict(Label::normal, Label::normal), verdict(Label::normal, Label::normal)});
  CHECK(all_normal.accuracy == 1.0);
  auto mixed = evaluate_detection({verdict(Label::anomaly, Label::anomaly), verdict(Label::normal, Label::anomaly),
                                   verdict(Label::normal, Label::normal), verdict(Label::anomaly, Label::normal)});
  CHECK(mixed.accuracy == 0.5);
  CHECK(mixed.per_class[1].tp == 1);
  CHECK(mixed.f1 == doctest::Approx(0.5));
  CHECK_THROWS_AS(evaluate_detection({}), DataError);
}

TEST_CASE("prediction evaluation") {
  auto spec = three_component_spec();
  spec.sessions = 10;
  auto c = testing::parsed_corpus(spec, 1);
  auto cfg = testing::small_config(c);
  Model m(cfg);
  Rng rng(3);
  m.init(rng);
  const auto state = AttentionState::uniform(cfg.num_components);
  auto samples = make_samples(c.train, 4);
  auto full = evaluate_prediction(m, samples, c.table, state, cfg.num_templates);
  CHECK(full.accuracy == 1.0);
  CHECK(full.f1 == 1.0);
  auto top1 = evaluate_prediction(m, samples, c.table, state, 1);
  CHECK(top1.accuracy == doctest::Approx(topk_accuracy(m, samples, c.table, state, 1)).epsilon(1e-15));
  CHECK(top1.total == static_cast<long long>(samples.size()));

  samples[0].target = kUnseenTemplate;
  CHECK(evaluate_prediction(m, samples, c.table, state, 1).total == static_cast<long long>(samples.size()) - 1);
  CHECK_THROWS_AS(evaluate_prediction(m, samples, c.table, state, 0), ConfigError);
  CHECK_THROWS_AS(evaluate_prediction(m, {}, c.table, state, 1), DataError);
}

TEST_CASE("seed aggregation is the arithmetic mean") {
  std::mt19937_64 rng(11);
  std::vector<Metrics> runs;
  std::vector<std::uint64_t> seeds;
  double f1 = 0, acc = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    std::vector<int> p(30), t(30);
    for (auto& x : p) x = static_cast<int>(rng() % 3);
    for (auto& x : t) x = static_cast<int>(rng() % 3);
    runs.push_back(compute_metrics(p, t, 3));
    seeds.push_back(s);
    f1 += runs.back().f1;
    acc += runs.back().accuracy;
  }
  const auto row = aggregate("full", "prediction", 1, seeds, runs);
  CHECK(row.mean.f1 == doctest::Approx(f1 / 5).epsilon(1e-15));
  CHECK(row.mean.accuracy == doctest::Approx(acc / 5).epsilon(1e-15));
  CHECK_THROWS_AS(aggregate("x", "prediction", 1, {1}, {}), DataError);
  CHECK_THROWS_AS(aggregate("x", "prediction", 1, {1, 2}, {runs[0]}), DataError);
}

TEST_CASE("report emission") {
  const auto r = sample_report();
  CHECK(emitted(r, ReportFormat::markdown) ==
        "| Model | Task | k | Seeds | Acc. | Pre. | Rec. | F1 |\n"
        "|---|---|---:|---:|---:|---:|---:|---:|\n"
        "| full | detection | 1 | 2 | 0.8750 | 0.8750 | 0.9167 | 0.8667 |\n"
        "| wo_ic | detection | 1 | 1 | 0.7500 | 0.7500 | 0.8333 | 0.7333 |\n");
  CHECK(emitted(r, ReportFormat::csv) ==
        "name,task,k,seeds,accuracy,precision,recall,f1\n"
        "full,detection,1,1;2,0.8750,0.8750,0.9167,0.8667\n"
        "wo_ic,detection,1,1,0.7500,0.7500,0.8333,0.7333\n");
  for (auto f : {ReportFormat::json, ReportFormat::csv, ReportFormat::markdown}) {
    CHECK(emitted(r, f) == emitted(r, f));
    CHECK_THROWS_AS(emitted(MetricsReport{}, f), DataError);
  }
  const auto json = emitted(r, ReportFormat::json);
  CHECK(json.rfind("{\n  \"version\": 1,", 0) == 0);
  std::istringstream in(json);
  CHECK(emitted(read_report_json(in), ReportFormat::json) == json);

  CHECK(report_format_from_string("md") == ReportFormat::markdown);
  CHECK_THROWS_AS(report_format_from_string("xml"), ConfigError);
  CHECK_THROWS_AS(emit_report(std::filesystem::path("/proc/no/such/dir/report.md"), r, ReportFormat::markdown),
                  DataError);
}

TEST_CASE("run manifest") {
  const auto m = run_manifest(nlohmann::json{{"b", 1}, {"a", 2}}, {3, 4}, {{"data.log", "ff"}});
  CHECK(m.begin().key() == "version");
  CHECK(m.at("seeds") == nlohmann::ordered_json{3, 4});
  CHECK(m.at("config_hash").get<std::string>().size() == 64);
}
