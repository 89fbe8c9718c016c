#include "doctest.h"

#include "csclog/errors.hpp"
#include "csclog/ingest.hpp"
#include "csclog/rng.hpp"

#include <filesystem>
#include <fstream>
#include <array>
#include <set>
#include <sstream>

using namespace csclog;

namespace {

RawRecord rec(std::int64_t t, std::string comp = "c", std::optional<Label> label = std::nullopt,
              std::optional<std::string> key = std::nullopt) {
  RawRecord r;
  r.timestamp = t;
  r.component = std::move(comp);
  r.content = "msg at " + std::to_string(t);
  r.label = label;
  r.session_key = std::move(key);
  return r;
}

std::vector<Session> numbered_sessions(int n) {
  std::vector<Session> out;
  for (int i = 0; i < n; ++i) out.push_back(Session{"s" + std::to_string(i), {rec(i * 10)}, Label::normal});
  return out;
}

ReadReport read_text(const std::string& text, ReadOptions opts) {
  std::istringstream in(text);
  return read_raw_log(in, opts);
}

}  // namespace

TEST_CASE("label parsing") {
  CHECK(label_from_string("-") == Label::normal);
  CHECK(label_from_string("Normal") == Label::normal);
  CHECK(label_from_string("Anomaly") == Label::anomaly);
  CHECK(label_from_string("KERNDTLB") == Label::anomaly);
}

TEST_CASE("BGL lines") {
  ReadOptions o;
  o.format = LogFormat::bgl;
  auto r = read_text(
      "- 1117838570 2005.06.03 R02-M1-N0-C:J12-U11 2005-06-03-15.42.50.675872 R02-M1-N0-C:J12-U11 RAS KERNEL INFO "
      "instruction cache parity error corrected\n"
      "KERNDTLB 1118536327 2005.06.11 R30-M0-N9-C:J16-U01 2005-06-11-17.32.07.581048 R30-M0-N9-C:J16-U01 RAS KERNEL "
      "FATAL data TLB error interrupt\n",
      o);
  REQUIRE(r.records.size() == 2);
  CHECK(r.records[0].label == Label::normal);
  CHECK(r.records[0].timestamp == 1117838570);
  CHECK(r.records[0].component == "KERNEL");
  CHECK(r.records[0].content == "instruction cache parity error corrected");
  CHECK(r.records[1].label == Label::anomaly);
  CHECK(r.unparseable == 0);
}

TEST_CASE("HDFS lines carry block keys") {
  ReadOptions o;
  o.format = LogFormat::hdfs;
  auto r = read_text(
      "081109 203615 148 INFO dfs.DataNode$PacketResponder: PacketResponder 1 for block blk_38865049064139660 "
      "terminating\n"
      "081109 203807 222 INFO dfs.DataNode$PacketResponder: Received block blk_-6952295868487656571 of size 67108864 "
      "from /10.251.39.160\n",
      o);
  REQUIRE(r.records.size() == 2);
  CHECK(r.records[0].component == "dfs.DataNode$PacketResponder");
  CHECK(r.records[0].session_key == "blk_38865049064139660");
  CHECK(r.records[1].session_key == "blk_-6952295868487656571");
  CHECK(r.records[1].timestamp - r.records[0].timestamp == 112);
  CHECK(r.records[0].timestamp == 1226262975);
}

TEST_CASE("Thunderbird lines") {
  ReadOptions o;
  o.format = LogFormat::thunderbird;
  auto r = read_text("- 1131566461 2005.11.09 dn228 Nov 9 12:01:01 dn228/dn228 crond(pam_unix)[2915]: session closed "
                     "for user root\n",
                     o);
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].component == "crond(pam_unix)");
  CHECK(r.records[0].content == "session closed for user root");
  CHECK(r.records[0].label == Label::normal);
}

TEST_CASE("OpenStack lines take the file label") {
  ReadOptions o;
  o.format = LogFormat::openstack;
  o.file_label = Label::anomaly;
  auto r = read_text(
      "nova-api.log.1.2017-05-16_13:53:08 2017-05-16 00:00:00.008 25746 INFO nova.osapi_compute.wsgi.server "
      "[req-38101a0b-2096-447d-96ea-a692162415ae 113d3a99c3da401fbd62cc2caa5b96d2 - - -] 10.11.10.1 \"GET "
      "/v2/servers/detail HTTP/1.1\" status: 200 len: 1893 time: 0.2477829\n",
      o);
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].component == "nova.osapi_compute.wsgi.server");
  CHECK(r.records[0].content.rfind("10.11.10.1", 0) == 0);
  CHECK(r.records[0].label == Label::anomaly);
  CHECK(r.records[0].timestamp == 1494892800);
}

TEST_CASE("generic regex") {
  ReadOptions o;
  o.format = LogFormat::generic;
  o.regex = R"((?<timestamp>\d+) (?<component>\S+) (?<content>.+))";
  SUBCASE("three lines in order") {
    auto r = read_text("3 a first\n1 b second\n2 a third\n", o);
    REQUIRE(r.records.size() == 3);
    CHECK(r.records[0].content == "first");
    CHECK(r.records[1].content == "second");
    CHECK(r.records[2].content == "third");
  }
  SUBCASE("empty input") {
    auto r = read_text("", o);
    CHECK(r.records.empty());
    CHECK(r.unparseable == 0);
  }
  SUBCASE("datetime timestamps") {
    ReadOptions d = o;
    d.regex = R"((?<timestamp>\S+ \S+) (?<component>\S+) (?<content>.+))";
    auto r = read_text("1970-01-02 00:00:05 x hello\n", d);
    REQUIRE(r.records.size() == 1);
    CHECK(r.records[0].timestamp == 86405);
  }
  SUBCASE("missing group is a config error") {
    ReadOptions bad = o;
    bad.regex = R"((?<timestamp>\d+) (?<content>.+))";
    CHECK_THROWS_AS(read_text("1 x\n", bad), ConfigError);
  }
  SUBCASE("too many unparseable lines abort") {
    std::string text;
    for (int i = 0; i < 9; ++i) text += std::to_string(i) + " c ok\n";
    text += "garbage\n";
    CHECK(read_text(text, o).unparseable == 1);
    text += "more garbage\n";
    CHECK_THROWS_AS(read_text(text, o), DataError);
  }
  SUBCASE("blank lines are skipped") {
    auto r = read_text("1 a x\n\n   \n2 a y\n", o);
    CHECK(r.records.size() == 2);
    CHECK(r.lines == 2);
  }
}

TEST_CASE("missing file") {
  ReadOptions o;
  o.format = LogFormat::hdfs;
  CHECK_THROWS_AS(read_raw_log(std::filesystem::path("/nonexistent/x.log"), o), DataError);
}

TEST_CASE("sessionize") {
  SUBCASE("tumbling windows") {
    auto s = sessionize({rec(0), rec(4), rec(9), rec(11)}, SessionizeStrategy::time_window(10));
    REQUIRE(s.size() == 2);
    CHECK(s[0].messages.size() == 3);
    CHECK(s[1].messages.size() == 1);
    CHECK(s[1].messages[0].timestamp == 11);
  }
  SUBCASE("one anomalous record labels the window") {
    std::vector<RawRecord> r;
    for (int i = 0; i < 5; ++i) r.push_back(rec(i, "c", i == 2 ? Label::anomaly : Label::normal));
    auto s = sessionize(r, SessionizeStrategy::time_window(10));
    REQUIRE(s.size() == 1);
    CHECK(s[0].label == Label::anomaly);
  }
  SUBCASE("interleaved keys") {
    auto s = sessionize({rec(1, "c", {}, "blk_A"), rec(2, "c", {}, "blk_B"), rec(3, "c", {}, "blk_A"),
                         rec(4, "c", {}, "blk_B")},
                        SessionizeStrategy::by_key());
    REQUIRE(s.size() == 2);
    CHECK(s[0].id == "blk_A");
    CHECK(s[0].messages.size() == 2);
    CHECK(s[1].id == "blk_B");
  }
  SUBCASE("missing key") {
    CHECK_THROWS_AS(sessionize({rec(1, "c", {}, "k"), rec(2)}, SessionizeStrategy::by_key()), DataError);
  }
  SUBCASE("empty input") { CHECK(sessionize({}, SessionizeStrategy::time_window(10)).empty()); }
  SUBCASE("ties keep file order") {
    std::vector<RawRecord> r = {rec(5), rec(5), rec(5)};
    r[0].content = "a";
    r[1].content = "b";
    r[2].content = "c";
    auto s = sessionize(r, SessionizeStrategy::time_window(10));
    CHECK(s[0].messages[0].content == "a");
    CHECK(s[0].messages[2].content == "c");
  }
}

TEST_CASE("sessionize partitions records") {
  Rng rng(3);
  std::uniform_int_distribution<int> t(0, 500), key(0, 7), width(1, 40);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<RawRecord> records;
    const int n = 1 + trial * 3;
    for (int i = 0; i < n; ++i) {
      auto r = rec(t(rng), "c", std::nullopt, "k" + std::to_string(key(rng)));
      r.content = "id" + std::to_string(i);
      records.push_back(r);
    }
    const int w = width(rng);
    for (auto strategy : {SessionizeStrategy::by_key(), SessionizeStrategy::time_window(w)}) {
      auto sessions = sessionize(records, strategy);
      std::multiset<std::string> seen;
      for (const auto& s : sessions) {
        CHECK(!s.messages.empty());
        for (std::size_t i = 1; i < s.messages.size(); ++i) CHECK(s.messages[i - 1].timestamp <= s.messages[i].timestamp);
        if (strategy.kind == SessionizeStrategy::Kind::time_window) {
          CHECK(s.messages.back().timestamp - s.messages.front().timestamp < w);
        }
        for (const auto& m : s.messages) seen.insert(m.content);
      }
      CHECK(seen.size() == records.size());
      CHECK(std::set<std::string>(seen.begin(), seen.end()).size() == records.size());
    }
  }
}

TEST_CASE("split_dataset") {
  auto sizes = [](int n) {
    auto s = split_dataset(numbered_sessions(n));
    return std::array<std::size_t, 3>{s.train.size(), s.validation.size(), s.test.size()};
  };
  CHECK(sizes(10) == std::array<std::size_t, 3>{7, 1, 2});
  CHECK(sizes(20) == std::array<std::size_t, 3>{14, 2, 4});
  CHECK(sizes(11) == std::array<std::size_t, 3>{7, 1, 3});
  CHECK_THROWS_AS(split_dataset(numbered_sessions(9)), DataError);

  for (int n = 10; n < 60; ++n) {
    auto s = split_dataset(numbered_sessions(n));
    std::vector<std::string> ids;
    for (auto* part : {&s.train, &s.validation, &s.test})
      for (const auto& x : *part) ids.push_back(x.id);
    std::vector<std::string> expect;
    for (const auto& x : numbered_sessions(n)) expect.push_back(x.id);
    CHECK(ids == expect);
  }
}

TEST_CASE("filter_normal") {
  auto s = numbered_sessions(3);
  s[1].label = Label::anomaly;
  auto f = filter_normal(s);
  REQUIRE(f.size() == 2);
  CHECK(f[0].id == "s0");
  CHECK(f[1].id == "s2");
  CHECK(filter_normal(numbered_sessions(4)).size() == 4);
  for (auto& x : s) x.label = Label::anomaly;
  CHECK_THROWS_AS(filter_normal(s), DataError);
}

TEST_CASE("sessions JSONL round trip") {
  auto s = numbered_sessions(3);
  s[2].label = Label::anomaly;
  s[0].messages.push_back(rec(3, "other"));
  std::stringstream buf;
  write_sessions(buf, s);
  const std::string bytes = buf.str();
  auto back = read_sessions(buf);
  REQUIRE(back.size() == 3);
  CHECK(back[2].label == Label::anomaly);
  CHECK(back[0].messages[1].component == "other");
  std::stringstream again;
  write_sessions(again, back);
  CHECK(again.str() == bytes);
}

TEST_CASE("HDFS label file") {
  const auto dir = std::filesystem::temp_directory_path() / "csclog_ingest_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "anomaly_label.csv");
    f << "BlockId,Label\nblk_1,Normal\nblk_2,Anomaly\n";
  }
  auto labels = read_hdfs_labels(dir / "anomaly_label.csv");
  CHECK(labels.size() == 2);
  std::vector<RawRecord> r = {rec(1, "c", {}, "blk_1"), rec(2, "c", {}, "blk_2")};
  apply_key_labels(r, labels);
  auto s = sessionize(r, SessionizeStrategy::by_key());
  CHECK(s[0].label == Label::normal);
  CHECK(s[1].label == Label::anomaly);
  std::filesystem::remove_all(dir);
}
