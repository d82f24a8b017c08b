// Copyright 2026 The PPP Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "ppp/error.hpp"
#include "ppp/hash.hpp"
#include "ppp/ingest.hpp"
#include "synthetic.hpp"

using namespace ppp;
using namespace ppp::ingest;

namespace {

ImageRecord rec(std::string id, std::string prompt, std::map<std::string, double> scores) {
  ImageRecord r;
  r.image_id = std::move(id);
  r.prompt_raw = std::move(prompt);
  r.scores = std::move(scores);
  return r;
}

std::vector<ImageRecord> from_jsonl(const std::string& text) {
  std::istringstream in(text);
  return parse_records(in, Format::jsonl);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected ppp::Error");
  return ErrorCode::io;
}

}  // namespace

TEST_SUITE("ingest") {

TEST_CASE("normalize_prompt trims, collapses and composes") {
  CHECK(normalize_prompt("  a  cat ") == "a cat");
  CHECK(normalize_prompt("cafe\xcc\x81") == "caf\xc3\xa9");
  CHECK(normalize_prompt("A Cat") == "A Cat");
  CHECK(normalize_prompt("a\t\ncat\xc2\xa0" "dog\xe3\x80\x80") == "a cat dog");
  CHECK(code_of([] { normalize_prompt(" \t "); }) == ErrorCode::invalid_argument);
}

TEST_CASE("count_modifiers") {
  CHECK(count_modifiers("a cat") == 0);
  CHECK(count_modifiers("a cat, 4k, trending") == 2);
  CHECK(count_modifiers("a cat,,  ,oil painting") == 1);
  CHECK(count_modifiers(",, a cat") == 0);
  CHECK(count_modifiers("") == 0);
}

TEST_CASE("aggregate means over members") {
  const std::vector<ImageRecord> rs{rec("1", "p", {{"aes", 0.2}}), rec("2", "p", {{"aes", 0.4}}),
                                    rec("3", "p", {{"aes", 0.6}})};
  const auto groups = aggregate(rs);
  REQUIRE(groups.size() == 1);
  CHECK(groups[0].image_count == 3);
  CHECK(groups[0].metric_means.at("aes") == doctest::Approx(0.4).epsilon(1e-15));
  CHECK_FALSE(groups[0].partial);
}

TEST_CASE("single record group has zero stddev") {
  const std::vector<ImageRecord> rs{rec("1", "p", {{"aes", 3.25}})};
  const auto groups = aggregate(rs);
  REQUIRE(groups.size() == 1);
  CHECK(groups[0].metric_means.at("aes") == 3.25);
  CHECK(groups[0].metric_stddevs.at("aes") == 0.0);
  const auto s = dataset_stats(groups, rs);
  CHECK(s.total_images == 1);
  CHECK(s.total_prompt_occurrences == 1);
  CHECK(s.unique_prompts == 1);
}

TEST_CASE("four records over two prompts match brute-force recomputation") {
  const std::vector<ImageRecord> rs{rec("1", "x", {{"a", 1.5}, {"b", -2.0}}),
                                    rec("2", " y", {{"a", 4.0}, {"b", 7.0}}),
                                    rec("3", "x ", {{"a", 2.25}, {"b", 0.5}}),
                                    rec("4", "y", {{"a", -1.0}, {"b", 3.0}})};
  const auto groups = aggregate(rs);
  REQUIRE(groups.size() == 2);
  for (const auto& g : groups) {
    CHECK(g.image_count == 2);
    for (const std::string m : {"a", "b"}) {
      double sum = 0.0;
      int n = 0;
      for (const auto& r : rs) {
        if (normalize_prompt(r.prompt_raw) == g.prompt_key) {
          sum += r.scores.at(m);
          ++n;
        }
      }
      CHECK(g.metric_means.at(m) == doctest::Approx(sum / n).epsilon(1e-15));
    }
  }
}

TEST_CASE("missing metric marks the group partial") {
  const auto rs = from_jsonl(
      R"({"image_id":"a","prompt":"p","scores":{"aes":1,"mem":2}})"
      "\n"
      R"({"image_id":"b","prompt":"p","scores":{"aes":3,"mem":null}})"
      "\n");
  const auto groups = aggregate(rs);
  REQUIRE(groups.size() == 1);
  CHECK(groups[0].partial);
  CHECK(groups[0].metric_means.at("mem") == 2.0);
  CHECK(groups[0].metric_counts.at("mem") == 1);
  CHECK(groups[0].complete_for("aes"));
  CHECK_FALSE(groups[0].complete_for("mem"));
}

TEST_CASE("representative text is the most frequent spelling") {
  const std::vector<ImageRecord> rs{rec("1", "a  cat", {{"m", 1}}), rec("2", "a cat ", {{"m", 1}}),
                                    rec("3", "a  cat", {{"m", 1}})};
  const auto groups = aggregate(rs);
  REQUIRE(groups.size() == 1);
  CHECK(groups[0].prompt_text == "a  cat");
  CHECK(groups[0].prompt_key == "a cat");
}

TEST_CASE("jsonl parsing errors name the row") {
  try {
    from_jsonl("{\"image_id\":\"a\",\"prompt\":\"p\",\"scores\":{\"aes\":1}}\n"
               "{\"image_id\":\"b\",\"prompt\":\"p\",\"scores\":{\"aes\":\"NaN\"}}\n");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::parse);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  CHECK(code_of([] { from_jsonl("{not json}\n"); }) == ErrorCode::parse);
  CHECK(code_of([] {
          from_jsonl("{\"image_id\":\"a\",\"prompt\":\"p\"}\n{\"image_id\":\"a\",\"prompt\":\"q\"}\n");
        }) == ErrorCode::parse);
  CHECK(code_of([] { from_jsonl("{\"image_id\":\"a\",\"prompt\":\"  \"}\n"); }) == ErrorCode::parse);
}

TEST_CASE("csv dialect with score_ columns") {
  std::istringstream in(
      "image_id,prompt,generator,score_aes,score_mem\r\n"
      "i1,\"a cat, 4k\",dalle2,0.5,1\r\n"
      "i2,\"say \"\"hi\"\"\",midjourney,,2.5\r\n");
  const auto rs = parse_records(in, Format::csv);
  REQUIRE(rs.size() == 2);
  CHECK(rs[0].prompt_raw == "a cat, 4k");
  CHECK(rs[0].source_generator == Generator::dalle2);
  CHECK(rs[0].scores.at("aes") == 0.5);
  CHECK(rs[1].prompt_raw == "say \"hi\"");
  CHECK_FALSE(rs[1].scores.contains("aes"));
  CHECK(rs[1].scores.at("mem") == 2.5);

  std::istringstream bad("image_id,prompt,score_aes\ni1,p,abc\n");
  CHECK(code_of([&] { parse_records(bad, Format::csv); }) == ErrorCode::parse);
}

TEST_CASE("split is deterministic and group level") {
  std::vector<PromptGroup> groups(10);
  for (int i = 0; i < 10; ++i) groups[i].prompt_key = "k" + std::to_string(i);
  const auto a = split(groups, {0.8, 0.1, 0.1}, 7);
  const auto b = split(groups, {0.8, 0.1, 0.1}, 7);
  CHECK(a.assignment == b.assignment);
  CHECK(a.assignment.size() == 10);

  std::vector<PromptGroup> reversed(groups.rbegin(), groups.rend());
  CHECK(split(reversed, {0.8, 0.1, 0.1}, 7).assignment == a.assignment);
}

TEST_CASE("split rejects bad ratios and tiny inputs") {
  std::vector<PromptGroup> groups(10);
  for (int i = 0; i < 10; ++i) groups[i].prompt_key = "k" + std::to_string(i);
  CHECK(code_of([&] { split(groups, {1.0, 0.0, 0.0}, 1); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { split(groups, {0.5, 0.2, 0.2}, 1); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { split(std::span(groups).first(2), {0.8, 0.1, 0.1}, 1); }) ==
        ErrorCode::invalid_argument);
}

TEST_CASE("split sizes stay within one of the quota") {
  std::vector<std::string> keys;
  for (int i = 0; i < 1000; ++i) keys.push_back("g" + std::to_string(i));
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto s = split_keys(keys, {0.8, 0.1, 0.1}, seed);
    CHECK(std::llabs(static_cast<long long>(s.keys_in(Split::train).size()) - 800) <= 1);
    CHECK(std::llabs(static_cast<long long>(s.keys_in(Split::validation).size()) - 100) <= 1);
    CHECK(std::llabs(static_cast<long long>(s.keys_in(Split::test).size()) - 100) <= 1);
  }
  const auto odd = split_keys({"a", "b", "c", "d", "e", "f", "g"}, {0.5, 0.3, 0.2}, 4);
  CHECK(odd.keys_in(Split::train).size() +
            odd.keys_in(Split::validation).size() + odd.keys_in(Split::test).size() ==
        7);
}

TEST_CASE("split file round trip") {
  const auto s = split_keys({"x", "y", "z", "w"}, {0.5, 0.25, 0.25}, 99);
  const auto back = split_from_json(split_to_json(s));
  CHECK(back.seed == 99);
  CHECK(back.ratios == s.ratios);
  CHECK(back.assignment == s.assignment);
  CHECK(code_of([] { split_from_json("{\"seed\":1}"); }) == ErrorCode::parse);
  CHECK(code_of([&] { back.of("nope"); }) == ErrorCode::not_found);
}

TEST_CASE("fixture matches its independently computed manifest") {
  const std::filesystem::path dir = PPP_FIXTURE_DIR;
  const auto rs = load_records(dir / "aggregation_200.jsonl");
  const auto manifest = nlohmann::json::parse(read_file(dir / "aggregation_200.manifest.json"));
  const auto groups = aggregate(rs);
  const auto stats = dataset_stats(groups, rs);
  CHECK(rs.size() == manifest["rows"].get<std::size_t>());
  CHECK(stats.total_images == manifest["total_images"].get<std::size_t>());
  CHECK(stats.total_prompt_occurrences == manifest["total_prompt_occurrences"].get<std::size_t>());
  CHECK(stats.unique_prompts == manifest["unique_prompts"].get<std::size_t>());
  const auto zero = std::count_if(groups.begin(), groups.end(),
                                  [](const PromptGroup& g) { return g.modifier_count == 0; });
  CHECK(static_cast<std::size_t>(zero) == manifest["zero_modifier_prompts"].get<std::size_t>());
  CHECK(stats.fraction_zero_modifier_prompts ==
        manifest["fraction_zero_modifier_prompts"].get<double>());
  const auto partial = std::count_if(groups.begin(), groups.end(),
                                     [](const PromptGroup& g) { return g.partial; });
  CHECK(static_cast<std::size_t>(partial) == manifest["partial_groups"].get<std::size_t>());
  for (const auto& [metric, count] : manifest["complete_groups_per_metric"].items()) {
    const auto got = std::count_if(groups.begin(), groups.end(),
                                   [&](const PromptGroup& g) { return g.complete_for(metric); });
    CHECK(static_cast<std::size_t>(got) == count.get<std::size_t>());
  }
  std::size_t images = 0;
  for (const auto& g : groups) {
    images += g.image_count;
    const auto& want = manifest["group_means"].at(g.prompt_key);
    CHECK(want.size() == g.metric_means.size());
    for (const auto& [metric, mean] : want.items()) {
      CHECK(g.metric_means.at(metric) == doctest::Approx(mean.get<double>()).epsilon(1e-12));
    }
  }
  CHECK(images == rs.size());
}

TEST_CASE("aggregation is permutation invariant and bounded by members") {
  const auto rs = load_records(std::filesystem::path(PPP_FIXTURE_DIR) / "aggregation_200.jsonl");
  const auto base = aggregate(rs);
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto shuffled = rs;
    rng.shuffle(shuffled);
    const auto again = aggregate(shuffled);
    REQUIRE(again.size() == base.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
      CHECK(again[i].prompt_key == base[i].prompt_key);
      CHECK(again[i].prompt_text == base[i].prompt_text);
      CHECK(again[i].metric_means == base[i].metric_means);
      CHECK(again[i].metric_stddevs == base[i].metric_stddevs);
    }
  }
  std::map<std::string, std::map<std::string, std::pair<double, double>>> range;
  for (const auto& r : rs) {
    auto& m = range[normalize_prompt(r.prompt_raw)];
    for (const auto& [metric, v] : r.scores) {
      auto [it, fresh] = m.try_emplace(metric, v, v);
      it->second.first = std::min(it->second.first, v);
      it->second.second = std::max(it->second.second, v);
    }
  }
  for (const auto& g : base) {
    for (const auto& [metric, mean] : g.metric_means) {
      const auto [lo, hi] = range.at(g.prompt_key).at(metric);
      CHECK(lo <= mean);
      CHECK(mean <= hi);
    }
  }
}

TEST_CASE("aggregating expanded group means is idempotent") {
  const auto rs = load_records(std::filesystem::path(PPP_FIXTURE_DIR) / "aggregation_200.jsonl");
  const auto groups = aggregate(rs);
  std::vector<ImageRecord> expanded;
  for (const auto& g : groups) {
    for (std::size_t j = 0; j < g.image_count; ++j) {
      expanded.push_back(rec(g.prompt_key + "#" + std::to_string(j), g.prompt_key, g.metric_means));
    }
  }
  const auto again = aggregate(expanded);
  REQUIRE(again.size() == groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    for (const auto& [metric, mean] : groups[i].metric_means) {
      CHECK(std::abs(again[i].metric_means.at(metric) - mean) <= 1e-12);
    }
  }
}

}  // TEST_SUITE
