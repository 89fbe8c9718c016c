#include "csclog/pipeline.hpp"

#include "csclog/errors.hpp"
#include "csclog/parallel.hpp"
#include "csclog/persist.hpp"
#include "csclog/synth.hpp"

#include <algorithm>
#include <fstream>
#include <memory>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>

namespace csclog {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"ingest", "parse", "train", "detect", "eval"};
  return names;
}

namespace artifact {
std::string sessions(const std::string& split) { return "sessions_" + split + ".jsonl"; }
std::string parsed(const std::string& split) { return "parsed_" + split + ".jsonl"; }
std::string checkpoint(std::uint64_t seed) { return "checkpoint_seed" + std::to_string(seed) + ".json"; }
std::string history(std::uint64_t seed) { return "history_seed" + std::to_string(seed) + ".csv"; }
std::string verdicts(std::uint64_t seed) { return "verdicts_seed" + std::to_string(seed) + ".jsonl"; }
std::string report(ReportFormat f) { return "report" + extension(f); }
}  // namespace artifact

namespace {

const std::vector<std::string> kSplits{"train", "validation", "test"};

json sections_for(const RunConfig& c, const std::string& stage) {
  static const std::map<std::string, std::vector<std::string>> needs{
      {"ingest", {"dataset"}},
      {"parse", {"dataset", "parser"}},
      {"train", {"dataset", "parser", "features", "model", "train", "ablation"}},
      {"detect", {"dataset", "parser", "features", "model", "train", "ablation", "detect"}},
      {"eval", {"dataset", "parser", "features", "model", "train", "ablation", "detect", "eval", "output"}},
  };
  auto doc = to_json(c);
  doc["output"].erase("dir");
  json out = json::object();
  for (const auto& s : needs.at(stage)) out[s] = doc.at(s);
  return out;
}

class Logger {
 public:
  explicit Logger(std::ostream* out) : out_(out) {}
  void operator()(const std::string& stage, const std::string& msg) {
    if (out_ == nullptr) return;
    std::lock_guard<std::mutex> lock(mutex_);
    *out_ << '[' << stage << "] " << msg << '\n' << std::flush;
  }

 private:
  std::ostream* out_;
  std::mutex mutex_;
};

std::string slurp(const fs::path& dir, const std::string& name, const std::string& producer) {
  if (!fs::exists(dir / name)) {
    throw DataError("missing " + name + " in " + dir.string() + "; run the " + producer + " stage first");
  }
  return read_file(dir / name);
}

template <class Writer>
void write_artifact(const fs::path& dir, const std::string& name, Writer&& writer) {
  std::ostringstream buf;
  writer(buf);
  write_file_atomic(dir / name, buf.str());
}

std::vector<ParsedSession> load_parsed(const fs::path& dir, const std::string& split) {
  std::istringstream in(slurp(dir, artifact::parsed(split), "parse"));
  return read_parsed(in);
}

std::vector<ParsedSession> normal_only(std::vector<ParsedSession> sessions) {
  sessions.erase(std::remove_if(sessions.begin(), sessions.end(),
                                [](const ParsedSession& s) { return s.label != Label::normal; }),
                 sessions.end());
  return sessions;
}

std::unique_ptr<EmbeddingProvider> make_embedder(const RunConfig& c) {
  if (c.features.embedder == "hash") {
    return std::make_unique<HashEmbedding>(c.features.semantic_dim, c.features.embed_seed);
  }
  return std::make_unique<FileEmbedding>(
      FileEmbedding::load(c.features.embedder, c.features.semantic_dim, c.features.embed_seed));
}

/// The parse stage's outputs, reloaded.
struct ParsedState {
  TemplateStore store;
  ComponentSet components;
  SemanticTable table;
  std::string store_hash;
};

ParsedState load_parse_outputs(const RunConfig& c, const fs::path& dir) {
  ParsedState s;
  {
    std::istringstream in(slurp(dir, artifact::templates, "parse"));
    s.store = TemplateStore::load(in);
  }
  s.store_hash = fingerprint(dir / artifact::templates);
  try {
    const auto j = json::parse(slurp(dir, artifact::components, "parse"));
    if (j.value("kind", "") != "components" || j.value("version", 0) != kFormatVersion) {
      throw DataError("components.json: not a version 1 component list");
    }
    s.components = ComponentSet(j.at("names").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw DataError(std::string("components.json: ") + e.what());
  }
  s.table = build_semantic_table(s.store, *make_embedder(c));
  return s;
}

Checkpoint load_seed_checkpoint(const fs::path& dir, std::uint64_t seed, const std::string& store_hash) {
  std::istringstream in(slurp(dir, artifact::checkpoint(seed), "train"));
  return load_checkpoint(in, store_hash);
}

std::vector<std::string> embedder_inputs(const RunConfig& c) {
  if (c.features.embedder == "hash") return {};
  return {fs::absolute(c.features.embedder).string()};
}

std::vector<std::string> dataset_inputs(const RunConfig& c) {
  std::vector<std::string> out;
  for (const auto& p : c.dataset.paths) out.push_back(fs::absolute(p).string());
  if (c.dataset.labels) out.push_back(fs::absolute(*c.dataset.labels).string());
  return out;
}

int clamp_k(int k, int n_event, const std::string& what, Logger& log, const std::string& stage) {
  if (k <= n_event) return k;
  log(stage, what + " k=" + std::to_string(k) + " exceeds the " + std::to_string(n_event) +
                 " known templates; using k=" + std::to_string(n_event));
  return n_event;
}

// ------------------------------------------------------------------- stages

void stage_ingest(const RunConfig& c, const fs::path& dir, Logger& log) {
  std::vector<Session> sessions;
  if (c.dataset.format == "synthetic") {
    const auto spec = synthetic_spec_from_json(c.dataset.synthetic);
    const auto seed = c.dataset.synthetic.value("seed", std::uint64_t{0});
    sessions = generate_synthetic(spec, seed).sessions;
    log("ingest", "generated " + std::to_string(sessions.size()) + " synthetic sessions");
  } else {
    std::vector<RawRecord> records;
    for (std::size_t i = 0; i < c.dataset.paths.size(); ++i) {
      ReadOptions opts;
      opts.format = log_format_from_string(c.dataset.format);
      opts.regex = c.dataset.regex;
      opts.max_unparseable_fraction = c.dataset.max_unparseable;
      if (!c.dataset.file_labels.empty()) opts.file_label = c.dataset.file_labels[i];
      auto report = read_raw_log(c.dataset.paths[i], opts);
      log("ingest", c.dataset.paths[i].string() + ": " + std::to_string(report.records.size()) + " records, " +
                        std::to_string(report.unparseable) + " unparseable lines");
      records.insert(records.end(), std::make_move_iterator(report.records.begin()),
                     std::make_move_iterator(report.records.end()));
    }
    if (c.dataset.labels) apply_key_labels(records, read_hdfs_labels(*c.dataset.labels));
    sessions = sessionize(std::move(records), c.dataset.sessionize);
    log("ingest", std::to_string(sessions.size()) + " sessions");
  }
  auto split = split_dataset(std::move(sessions));
  const std::vector<const std::vector<Session>*> parts{&split.train, &split.validation, &split.test};
  std::vector<std::string> outputs;
  for (std::size_t i = 0; i < kSplits.size(); ++i) {
    write_artifact(dir, artifact::sessions(kSplits[i]), [&](std::ostream& o) { write_sessions(o, *parts[i]); });
    outputs.push_back(artifact::sessions(kSplits[i]));
  }
  log("ingest", "split " + std::to_string(split.train.size()) + "/" + std::to_string(split.validation.size()) + "/" +
                    std::to_string(split.test.size()));
  record_stage(dir, "ingest", dataset_inputs(c), outputs, stage_config_hash(c, "ingest"));
}

void stage_parse(const RunConfig& c, const fs::path& dir, Logger& log) {
  std::map<std::string, std::vector<Session>> sessions;
  std::vector<std::string> inputs;
  for (const auto& split : kSplits) {
    std::istringstream in(slurp(dir, artifact::sessions(split), "ingest"));
    sessions[split] = read_sessions(in);
    inputs.push_back(artifact::sessions(split));
  }
  const auto normal = filter_normal(sessions["train"]);
  auto store = freeze(mine_templates(normal, c.parser));
  const auto components = ComponentSet::from_sessions(normal);
  log("parse", std::to_string(store.size()) + " templates, " + std::to_string(components.size()) + " components");

  write_artifact(dir, artifact::templates, [&](std::ostream& o) { store.save(o); });
  nlohmann::ordered_json comp = {{"version", kFormatVersion}, {"kind", "components"}, {"names", components.names()}};
  write_file_atomic(dir / artifact::components, comp.dump() + "\n");
  std::vector<std::string> outputs{artifact::templates, artifact::components};
  for (const auto& split : kSplits) {
    const auto parsed = parse_sessions(sessions[split], store, components);
    std::size_t unseen = 0;
    for (const auto& s : parsed) {
      for (const auto& m : s.messages) unseen += m.template_id == kUnseenTemplate;
    }
    if (unseen > 0) log("parse", split + ": " + std::to_string(unseen) + " messages match no template");
    write_artifact(dir, artifact::parsed(split), [&](std::ostream& o) { write_parsed(o, parsed); });
    outputs.push_back(artifact::parsed(split));
  }
  record_stage(dir, "parse", inputs, outputs, stage_config_hash(c, "parse"));
}

void stage_train(const RunConfig& c, const fs::path& dir, Logger& log) {
  const auto ps = load_parse_outputs(c, dir);
  const auto train_samples = make_samples(normal_only(load_parsed(dir, "train")), c.detect.window);
  const auto val_samples = make_samples(normal_only(load_parsed(dir, "validation")), c.detect.window);
  log("train", std::to_string(train_samples.size()) + " training and " + std::to_string(val_samples.size()) +
                   " validation windows");

  ModelConfig mc = c.model;
  mc.num_templates = static_cast<int>(ps.store.size());
  mc.num_components = ps.components.size();
  mc.semantic_dim = ps.table.dimension();

  parallel_for(c.seeds.size(), c.jobs, [&](std::size_t i) {
    const auto seed = c.seeds[i];
    Model model(mc);
    Rng rng(seed);
    model.init(rng);
    AttentionState state;
    TrainConfig tc = c.train;
    tc.seed = seed;
    const auto tag = "seed " + std::to_string(seed);
    const auto result = train(model, state, train_samples, val_samples, ps.table, tc, [&](const EpochRecord& e) {
      log("train", tag + " epoch " + std::to_string(e.epoch) + " train_loss " + json(e.train_loss).dump() +
                       " val_loss " + json(e.val_loss).dump());
    });
    log("train", tag + " best epoch " + std::to_string(result.best_epoch) +
                     (result.stopped_early ? " (stopped early)" : ""));
    const json settings = {{"seed", seed},
                           {"variant", mc.ablation.name()},
                           {"window", c.detect.window},
                           {"best_epoch", result.best_epoch},
                           {"epochs_run", result.history.size()}};
    write_artifact(dir, artifact::checkpoint(seed),
                   [&](std::ostream& o) { save_checkpoint(o, model, state, settings, ps.store_hash); });
    write_artifact(dir, artifact::history(seed), [&](std::ostream& o) { write_history_csv(o, result.history); });
  });

  std::vector<std::string> inputs{artifact::templates, artifact::components, artifact::parsed("train"),
                                  artifact::parsed("validation")};
  for (const auto& e : embedder_inputs(c)) inputs.push_back(e);
  std::vector<std::string> outputs;
  for (auto seed : c.seeds) {
    outputs.push_back(artifact::checkpoint(seed));
    outputs.push_back(artifact::history(seed));
  }
  record_stage(dir, "train", inputs, outputs, stage_config_hash(c, "train"));
}

void stage_detect(const RunConfig& c, const fs::path& dir, Logger& log) {
  const auto ps = load_parse_outputs(c, dir);
  const auto test = load_parsed(dir, "test");
  std::vector<std::string> inputs{artifact::templates, artifact::components, artifact::parsed("test")};
  for (const auto& e : embedder_inputs(c)) inputs.push_back(e);
  std::vector<std::string> outputs;
  for (auto seed : c.seeds) {
    auto ck = load_seed_checkpoint(dir, seed, ps.store_hash);
    DetectConfig dc = c.detect;
    dc.k = clamp_k(dc.k, ck.model.config().num_templates, "detect", log, "detect");
    const auto verdicts = detect_all(ck.model, test, ps.table, ck.state, dc);
    const auto flagged = std::count_if(verdicts.begin(), verdicts.end(),
                                       [](const DetectionVerdict& v) { return v.verdict == Label::anomaly; });
    log("detect", "seed " + std::to_string(seed) + ": " + std::to_string(flagged) + " of " +
                      std::to_string(verdicts.size()) + " test sessions flagged");
    write_artifact(dir, artifact::verdicts(seed), [&](std::ostream& o) { write_verdicts(o, verdicts); });
    inputs.push_back(artifact::checkpoint(seed));
    outputs.push_back(artifact::verdicts(seed));
  }
  record_stage(dir, "detect", inputs, outputs, stage_config_hash(c, "detect"));
}

void stage_eval(const RunConfig& c, const fs::path& dir, Logger& log) {
  const auto variant = c.model.ablation.name();
  MetricsReport report;
  std::vector<std::string> inputs;
  std::vector<Metrics> detection;
  for (auto seed : c.seeds) {
    std::istringstream in(slurp(dir, artifact::verdicts(seed), "detect"));
    detection.push_back(evaluate_detection(read_verdicts(in)));
    inputs.push_back(artifact::verdicts(seed));
  }
  const auto ps = load_parse_outputs(c, dir);
  const int n_event = static_cast<int>(ps.store.size());
  report.rows.push_back(aggregate(variant, "detection", std::min(c.detect.k, n_event), c.seeds, detection));

  const auto samples = make_samples(normal_only(load_parsed(dir, "test")), c.detect.window);
  std::set<int> ks;
  for (int k : c.prediction_k) ks.insert(clamp_k(k, n_event, "prediction", log, "eval"));
  std::size_t known = std::count_if(samples.begin(), samples.end(), [](const WindowSample& s) { return s.target >= 0; });
  if (known == 0) {
    log("eval", "no normal test windows with a known target; prediction rows omitted");
  } else if (!ks.empty()) {
    std::vector<Checkpoint> checkpoints;
    for (auto seed : c.seeds) checkpoints.push_back(load_seed_checkpoint(dir, seed, ps.store_hash));
    for (int k : ks) {
      std::vector<Metrics> runs;
      for (auto& ck : checkpoints) runs.push_back(evaluate_prediction(ck.model, samples, ps.table, ck.state, k));
      report.rows.push_back(aggregate(variant, "prediction", k, c.seeds, std::move(runs)));
    }
    for (auto seed : c.seeds) inputs.push_back(artifact::checkpoint(seed));
    inputs.push_back(artifact::parsed("test"));
    inputs.push_back(artifact::templates);
  }
  for (const auto& r : report.rows) {
    std::ostringstream line;
    line << r.task << " k=" << r.k << " macro F1 " << json(r.mean.f1).dump() << " accuracy "
         << json(r.mean.accuracy).dump();
    log("eval", line.str());
  }

  std::vector<std::string> outputs;
  std::set<ReportFormat> formats(c.formats.begin(), c.formats.end());
  formats.insert(ReportFormat::json);
  for (auto f : formats) {
    emit_report(dir / artifact::report(f), report, f);
    outputs.push_back(artifact::report(f));
  }

  std::map<std::string, std::string> prints;
  for (const auto& p : dataset_inputs(c)) prints[p] = fingerprint(p);
  for (const auto& p : embedder_inputs(c)) prints[p] = fingerprint(p);
  for (const auto& s : kSplits) prints[artifact::sessions(s)] = fingerprint(dir / artifact::sessions(s));
  prints[artifact::templates] = ps.store_hash;
  auto settings = to_json(c);
  settings["output"].erase("dir");
  settings.erase("jobs");
  write_file_atomic(dir / artifact::run_manifest, run_manifest(settings, c.seeds, prints).dump(2) + "\n");
  outputs.push_back(artifact::run_manifest);
  record_stage(dir, "eval", inputs, outputs, stage_config_hash(c, "eval"));
}

template <class Fn>
void tagged(const std::string& stage, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError("[" + stage + "] " + e.what());
  } catch (const DataError& e) {
    throw DataError("[" + stage + "] " + e.what());
  } catch (const DivergenceError& e) {
    throw DivergenceError("[" + stage + "] " + e.what());
  } catch (const fs::filesystem_error& e) {
    throw DataError("[" + stage + "] " + e.what());
  }
}

}  // namespace

std::string stage_config_hash(const RunConfig& config, const std::string& stage) {
  return sha256_hex(sections_for(config, stage).dump());
}

std::vector<StageOutcome> run_pipeline(const RunConfig& config, const RunOptions& options) {
  config.validate();
  for (const auto& s : options.stages) {
    if (std::find(stage_names().begin(), stage_names().end(), s) == stage_names().end()) {
      throw ConfigError("unknown stage '" + s + "' (ingest, parse, train, detect, eval)");
    }
  }
  const auto& dir = config.output_dir;
  tagged("setup", [&] { fs::create_directories(dir); });
  Logger log(options.log);
  std::vector<StageOutcome> outcomes;
  for (const auto& stage : stage_names()) {
    if (!options.stages.empty() &&
        std::find(options.stages.begin(), options.stages.end(), stage) == options.stages.end()) {
      continue;
    }
    bool current = false;
    tagged(stage, [&] { current = !options.force && stage_is_current(dir, stage, stage_config_hash(config, stage)); });
    if (current) {
      log(stage, "up to date, skipped");
      outcomes.push_back({stage, true});
      continue;
    }
    tagged(stage, [&] {
      if (stage == "ingest") stage_ingest(config, dir, log);
      else if (stage == "parse") stage_parse(config, dir, log);
      else if (stage == "train") stage_train(config, dir, log);
      else if (stage == "detect") stage_detect(config, dir, log);
      else stage_eval(config, dir, log);
    });
    outcomes.push_back({stage, false});
  }
  return outcomes;
}

MetricsReport run_ablation(const RunConfig& config, const std::vector<std::string>& variants,
                           const RunOptions& options) {
  if (variants.empty()) throw ConfigError("ablate: no variants given");
  std::vector<RunConfig> configs;
  for (const auto& v : variants) {
    RunConfig vc = config;
    vc.model.ablation = Ablation::from_variant(v);
    vc.output_dir = config.output_dir / "ablation" / vc.model.ablation.name();
    vc.validate();
    configs.push_back(std::move(vc));
  }

  RunOptions base_opts = options;
  base_opts.stages.clear();
  run_pipeline(config, base_opts);

  auto detection_row = [](const fs::path& dir) {
    std::istringstream in(read_file(dir / artifact::report(ReportFormat::json)));
    for (auto& r : read_report_json(in).rows) {
      if (r.task == "detection") return r;
    }
    throw DataError("no detection row in " + (dir / "report.json").string());
  };

  MetricsReport comparison;
  comparison.rows.push_back(detection_row(config.output_dir));
  std::vector<std::string> inputs{artifact::report(ReportFormat::json)};
  for (const auto& vc : configs) {
    tagged("ablate", [&] {
      fs::create_directories(vc.output_dir);
      std::vector<std::string> shared;
      for (const auto& s : kSplits) {
        shared.push_back(artifact::sessions(s));
        shared.push_back(artifact::parsed(s));
      }
      shared.insert(shared.end(), {artifact::templates, artifact::components, "ingest.manifest.json",
                                   "parse.manifest.json"});
      for (const auto& f : shared) {
        const auto src = config.output_dir / f;
        const auto dst = vc.output_dir / f;
        if (!fs::exists(dst) || fingerprint(dst) != fingerprint(src)) write_file_atomic(dst, read_file(src));
      }
    });
    RunOptions vopts = options;
    vopts.stages = {"train", "detect", "eval"};
    run_pipeline(vc, vopts);
    comparison.rows.push_back(detection_row(vc.output_dir));
    inputs.push_back(fs::relative(vc.output_dir / artifact::report(ReportFormat::json), config.output_dir).string());
  }

  std::vector<std::string> outputs;
  tagged("ablate", [&] {
    for (auto f : {ReportFormat::json, ReportFormat::csv, ReportFormat::markdown}) {
      const auto name = "ablation" + extension(f);
      emit_report(config.output_dir / name, comparison, f);
      outputs.push_back(name);
    }
    record_stage(config.output_dir, "ablate", inputs, outputs, stage_config_hash(config, "eval"));
  });
  return comparison;
}

}  // namespace csclog
