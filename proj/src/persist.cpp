#include "csclog/persist.hpp"

#include "csclog/errors.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>
#include <memory>
#include <set>
#include <sstream>

namespace csclog {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kManifestSuffix = ".manifest.json";

bool ends_with(std::string_view s, std::string_view tail) {
  return s.size() >= tail.size() && s.substr(s.size() - tail.size()) == tail;
}

}  // namespace

void write_format_header(std::ostream& out, std::string_view kind) {
  out << nlohmann::ordered_json{{"version", kFormatVersion}, {"kind", kind}}.dump() << '\n';
}

void read_format_header(std::istream& in, std::string_view kind) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(std::string(kind) + ": empty file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw DataError(std::string(kind) + ": missing format header");
  }
  if (!j.is_object() || j.value("kind", "") != kind) {
    throw DataError(std::string(kind) + ": not a " + std::string(kind) + " file");
  }
  if (j.value("version", 0) != kFormatVersion) {
    throw DataError(std::string(kind) + ": unsupported version " + j.value("version", nlohmann::json(0)).dump());
  }
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream hex;
  hex << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < length; ++i) hex << std::setw(2) << static_cast<int>(digest[i]);
  return hex.str();
}

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot read " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string fingerprint(const fs::path& file) { return sha256_hex(read_file(file)); }

void write_file_atomic(const fs::path& file, std::string_view content) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + file.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw DataError("write failed: " + file.string());
  }
  fs::rename(tmp, file);
}

nlohmann::ordered_json to_json(const ArtifactManifest& m) {
  return {{"version", kFormatVersion}, {"kind", "manifest"},     {"stage", m.stage},
          {"inputs", m.inputs},        {"outputs", m.outputs},   {"config_hash", m.config_hash},
          {"tool_version", m.tool_version}};
}

ArtifactManifest manifest_from_json(const nlohmann::json& j) {
  try {
    if (j.value("kind", "") != "manifest") throw DataError("manifest: wrong file kind");
    if (j.value("version", 0) != kFormatVersion) throw DataError("manifest: unsupported version");
    ArtifactManifest m;
    m.stage = j.at("stage").get<std::string>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest: malformed: ") + e.what());
  }
}

fs::path manifest_path(const fs::path& dir, std::string_view stage) {
  return dir / (std::string(stage) + std::string(kManifestSuffix));
}

ArtifactManifest record_stage(const fs::path& dir, std::string_view stage, const std::vector<std::string>& inputs,
                              const std::vector<std::string>& outputs, const std::string& config_hash) {
  ArtifactManifest m;
  m.stage = stage;
  m.config_hash = config_hash;
  for (const auto& f : inputs) m.inputs[f] = fingerprint(dir / f);
  for (const auto& f : outputs) m.outputs[f] = fingerprint(dir / f);
  write_file_atomic(manifest_path(dir, stage), to_json(m).dump(2) + "\n");
  return m;
}

ArtifactManifest read_manifest(const fs::path& dir, std::string_view stage) {
  const auto path = manifest_path(dir, stage);
  if (!fs::exists(path)) throw DataError("missing manifest for stage " + std::string(stage));
  try {
    return manifest_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

namespace {

bool matches(const fs::path& dir, const std::map<std::string, std::string>& files) {
  return std::all_of(files.begin(), files.end(), [&](const auto& f) {
    const auto p = dir / f.first;
    return fs::exists(p) && fingerprint(p) == f.second;
  });
}

}  // namespace

bool stage_is_current(const fs::path& dir, std::string_view stage, const std::string& config_hash) {
  if (!fs::exists(manifest_path(dir, stage))) return false;
  const auto m = read_manifest(dir, stage);
  return m.config_hash == config_hash && matches(dir, m.inputs) && matches(dir, m.outputs);
}

std::string to_string(ChainIssue::Kind k) {
  switch (k) {
    case ChainIssue::Kind::missing: return "missing";
    case ChainIssue::Kind::modified: return "modified";
    case ChainIssue::Kind::stale: return "stale";
    case ChainIssue::Kind::untracked: return "untracked";
  }
  return "?";
}

ChainReport verify_chain(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError(dir.string() + " is not a directory");
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());

  ChainReport report;
  std::set<std::string> tracked;
  for (const auto& name : names) {
    if (!ends_with(name, kManifestSuffix)) continue;
    ArtifactManifest m;
    try {
      m = manifest_from_json(nlohmann::json::parse(read_file(dir / name)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(name + ": " + e.what());
    }
    report.stages.push_back(m.stage);
    tracked.insert(name);
    for (const auto& [file, hash] : m.outputs) {
      tracked.insert(file);
      if (!fs::exists(dir / file)) {
        report.issues.push_back({m.stage, file, ChainIssue::Kind::missing});
      } else if (fingerprint(dir / file) != hash) {
        report.issues.push_back({m.stage, file, ChainIssue::Kind::modified});
      }
    }
    for (const auto& [file, hash] : m.inputs) {
      if (!fs::exists(dir / file)) {
        report.issues.push_back({m.stage, file, ChainIssue::Kind::missing});
      } else if (fingerprint(dir / file) != hash) {
        report.issues.push_back({m.stage, file, ChainIssue::Kind::stale});
      }
    }
  }
  for (const auto& name : names) {
    if (!tracked.count(name) && !ends_with(name, ".tmp")) {
      report.issues.push_back({"", name, ChainIssue::Kind::untracked});
    }
  }
  return report;
}

}  // namespace csclog
