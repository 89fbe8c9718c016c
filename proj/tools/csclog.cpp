#include "csclog/config.hpp"
#include "csclog/errors.hpp"
#include "csclog/persist.hpp"
#include "csclog/pipeline.hpp"
#include "csclog/synth.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace csclog;

namespace {

struct CommonOptions {
  std::string config;
  std::string profile;
  std::string output;
  int jobs = 0;
  std::vector<std::string> sets;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "Run config (.json or .toml)")->check(CLI::ExistingFile);
  cmd->add_option("--profile", o.profile, "Base profile: hdfs, bgl, thunderbird, openstack");
  cmd->add_option("-o,--output", o.output, "Output directory (overrides output.dir)");
  cmd->add_option("-j,--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--set", o.sets, "Override a setting, e.g. --set train.lr=0.001");
  cmd->add_flag("-q,--quiet", o.quiet, "No progress output");
}

RunConfig resolve(const CommonOptions& o) {
  std::vector<std::string> sets;
  if (!o.profile.empty()) sets.push_back("profile=\"" + o.profile + "\"");
  sets.insert(sets.end(), o.sets.begin(), o.sets.end());
  if (!o.output.empty()) sets.push_back("output.dir=" + nlohmann::json(o.output).dump());
  if (o.jobs > 0) sets.push_back("jobs=" + std::to_string(o.jobs));
  std::optional<fs::path> file;
  if (!o.config.empty()) file = o.config;
  return load_run_config(file, current_environment(), sets);
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::size_t start = 0;
    for (;;) {
      const auto comma = item.find(',', start);
      auto part = item.substr(start, comma - start);
      if (!part.empty()) out.push_back(part);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return out;
}

int fail(int code, const std::string& kind, const std::string& what) {
  std::cerr << "csclog: " << kind << ": " << what << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Log anomaly detection from component subsequence correlations"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  CommonOptions run_opts;
  std::vector<std::string> stages;
  bool force = false;
  auto* run = app.add_subcommand("run", "Run pipeline stages (ingest, parse, train, detect, eval)");
  add_common(run, run_opts);
  run->add_option("--stages", stages, "Comma-separated subset of stages (default: all)");
  run->add_flag("-f,--force", force, "Re-run stages whose artifacts are current");

  CommonOptions ablate_opts;
  std::vector<std::string> variants;
  auto* ablate = app.add_subcommand("ablate", "Compare the full model against simplified variants");
  add_common(ablate, ablate_opts);
  ablate->add_option("--variant", variants, "wo_ic, wo_lstm, wo_sem, wo_time (or \"w/o IC\" ...)")->required();
  ablate->add_flag("-f,--force", force, "Re-run stages whose artifacts are current");

  CommonOptions show_opts;
  auto* show = app.add_subcommand("config", "Print the resolved run config as JSON");
  add_common(show, show_opts);

  std::string preset = "three_component";
  std::string spec_file;
  std::string out_dir = "synthetic";
  std::string out_format = "hdfs";
  int sessions = -1;
  double anomaly_rate = -1.0;
  std::uint64_t seed = 0;
  auto* synth = app.add_subcommand("synth", "Write a synthetic labeled corpus");
  synth->add_option("--preset", preset, "three_component or hdfs_like")->check(CLI::IsMember({"three_component", "hdfs_like"}));
  synth->add_option("--spec", spec_file, "Grammar spec JSON (overrides --preset)")->check(CLI::ExistingFile);
  synth->add_option("--sessions", sessions, "Number of sessions");
  synth->add_option("--anomaly-rate", anomaly_rate, "Share of anomalous sessions");
  synth->add_option("--seed", seed, "Generator seed");
  synth->add_option("--format", out_format, "hdfs (log + label CSV) or jsonl (sessions)")
      ->check(CLI::IsMember({"hdfs", "jsonl"}));
  synth->add_option("-o,--output", out_dir, "Output directory");

  std::string verify_dir;
  auto* verify = app.add_subcommand("verify", "Check artifact fingerprints in an output directory");
  verify->add_option("dir", verify_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      const auto config = resolve(run_opts);
      RunOptions opts;
      opts.stages = split_list(stages);
      opts.force = force;
      opts.log = run_opts.quiet ? nullptr : &std::cerr;
      run_pipeline(config, opts);
      if (!run_opts.quiet) std::cerr << "outputs in " << config.output_dir.string() << '\n';
    } else if (*ablate) {
      const auto config = resolve(ablate_opts);
      RunOptions opts;
      opts.force = force;
      opts.log = ablate_opts.quiet ? nullptr : &std::cerr;
      const auto report = run_ablation(config, split_list(variants), opts);
      emit_report(std::cout, report, ReportFormat::markdown);
    } else if (*show) {
      std::cout << to_json(resolve(show_opts)).dump(2) << '\n';
    } else if (*synth) {
      nlohmann::json doc = {{"preset", preset}};
      if (!spec_file.empty()) {
        try {
          doc = nlohmann::json::parse(read_file(spec_file));
        } catch (const nlohmann::json::exception& e) {
          throw ConfigError(spec_file + ": " + e.what());
        }
      }
      if (sessions >= 0) doc["sessions"] = sessions;
      if (anomaly_rate >= 0.0) doc["anomaly_rate"] = anomaly_rate;
      auto spec = synthetic_spec_from_json(doc);
      if (out_format == "hdfs") spec.session_prefix = "blk_";
      const auto corpus = generate_synthetic(spec, seed);
      fs::create_directories(out_dir);
      if (out_format == "hdfs") {
        write_hdfs_log(corpus.sessions, fs::path(out_dir) / "HDFS.log", fs::path(out_dir) / "anomaly_label.csv");
      } else {
        std::ostringstream buf;
        write_sessions(buf, corpus.sessions);
        write_file_atomic(fs::path(out_dir) / "sessions.jsonl", buf.str());
      }
      std::cerr << "wrote " << corpus.sessions.size() << " sessions to " << out_dir << '\n';
    } else if (*verify) {
      const auto report = verify_chain(verify_dir);
      for (const auto& s : report.stages) std::cout << "stage " << s << '\n';
      for (const auto& i : report.issues) {
        std::cout << to_string(i.kind) << ' ' << i.artifact;
        if (!i.stage.empty()) std::cout << " (stage " << i.stage << ')';
        std::cout << '\n';
      }
      std::cout << (report.valid() ? "chain valid" : "chain has issues") << '\n';
      return report.valid() ? 0 : 3;
    }
  } catch (const ConfigError& e) {
    return fail(2, "config error", e.what());
  } catch (const DataError& e) {
    return fail(3, "data error", e.what());
  } catch (const DivergenceError& e) {
    return fail(4, "training diverged", e.what());
  } catch (const std::exception& e) {
    return fail(1, "error", e.what());
  }
  return 0;
}
