// Copyright 2026 The WaBERT Authors
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "wabert/synthdata.hpp"

using namespace wabert;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / name;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

bool dirs_identical(const fs::path& a, const fs::path& b) {
  std::set<std::string> names_a, names_b;
  for (const auto& e : fs::directory_iterator(a)) names_a.insert(e.path().filename());
  for (const auto& e : fs::directory_iterator(b)) names_b.insert(e.path().filename());
  if (names_a != names_b) return false;
  for (const std::string& name : names_a) {
    if (slurp(a / name) != slurp(b / name)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("gold boundaries tile the utterance with contiguous segments") {
  synth::SynthConfig config;
  config.seed = 99;
  const auto protos = synth::draw_prototypes(config);
  for (std::uint64_t i = 0; i < 50; ++i) {
    synth::Utterance utt = synth::make_utterance(config, protos, i);
    const auto& entries = utt.gold_boundaries.entries;
    REQUIRE(entries.size() == utt.token_ids.size());
    CHECK(entries.front().left_ms == 0.0);
    CHECK(entries.back().right_ms ==
          doctest::Approx(static_cast<double>(utt.raw_frames.rows()) *
                          config.raw_hop_ms));
    for (std::size_t k = 0; k < entries.size(); ++k) {
      CHECK(entries[k].left_ms < entries[k].right_ms);
      if (k > 0) CHECK(entries[k].left_ms == entries[k - 1].right_ms);
      // Segment widths are whole frames from the configured range.
      const double width = entries[k].right_ms - entries[k].left_ms;
      const double frames = width / config.raw_hop_ms;
      CHECK(frames >= config.frames_per_token_min);
      CHECK(frames <= config.frames_per_token_max);
      CHECK(std::fabs(frames - std::round(frames)) < 1e-9);
    }
  }
}

TEST_CASE("a token emitting three frames spans 15 ms at the default hop") {
  synth::SynthConfig config;
  config.seed = 5;
  config.frames_per_token_min = 3;
  config.frames_per_token_max = 3;
  const auto protos = synth::draw_prototypes(config);
  synth::Utterance utt = synth::make_utterance(config, protos, 0);
  for (const auto& e : utt.gold_boundaries.entries) {
    CHECK(e.right_ms - e.left_ms == doctest::Approx(15.0));
  }
}

TEST_CASE("prototypes keep a 4-sigma separation") {
  synth::SynthConfig config;
  config.seed = 123;
  const auto protos = synth::draw_prototypes(config);
  REQUIRE(protos.size() == config.vocab);
  double min_dist = 1e300;
  for (std::size_t a = 0; a < protos.size(); ++a) {
    for (std::size_t b = a + 1; b < protos.size(); ++b) {
      double sq = 0.0;
      for (std::size_t j = 0; j < config.d_in; ++j) {
        const double diff = protos[a].at(j) - protos[b].at(j);
        sq += diff * diff;
      }
      min_dist = std::min(min_dist, std::sqrt(sq));
    }
  }
  CHECK(min_dist > 4.0 * config.noise_sigma);
}

TEST_CASE("labels follow the sign of summed valences") {
  synth::SynthConfig config;
  const auto valences = config.effective_sentiment_map();
  const auto protos = synth::draw_prototypes(config);
  for (std::uint64_t i = 0; i < 200; ++i) {
    synth::Utterance utt = synth::make_utterance(config, protos, i);
    long long total = 0;
    for (std::size_t id : utt.token_ids) total += valences[id];
    CHECK(utt.label == (total < 0 ? 0 : (total == 0 ? 1 : 2)));
    // The generation margin keeps small nonzero sums out.
    if (total != 0) CHECK(std::llabs(total) >= config.label_margin);
  }
}

TEST_CASE("an all-zero sentiment map makes every label neutral") {
  synth::SynthConfig config;
  config.sentiment_map.assign(config.vocab, 0);
  const auto protos = synth::draw_prototypes(config);
  for (std::uint64_t i = 0; i < 50; ++i) {
    CHECK(synth::make_utterance(config, protos, i).label == 1);
  }
}

TEST_CASE("all three classes appear in a 1000-utterance corpus") {
  synth::SynthConfig config;
  const auto protos = synth::draw_prototypes(config);
  std::set<int> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    seen.insert(synth::make_utterance(config, protos, i).label);
  }
  CHECK(seen == std::set<int>{0, 1, 2});
}

TEST_CASE("generation is byte-identical for identical config and count") {
  synth::SynthConfig config;
  config.seed = 2024;
  TempDir a("wabert_synth_a"), b("wabert_synth_b");
  synth::generate_corpus(config, 25, a.path.string());
  synth::generate_corpus(config, 25, b.path.string());
  CHECK(dirs_identical(a.path, b.path));
}

TEST_CASE("corpus round-trips losslessly through the manifest") {
  synth::SynthConfig config;
  config.seed = 7;
  TempDir dir("wabert_synth_rt");
  synth::generate_corpus(config, 100, dir.path.string());
  const auto protos = synth::draw_prototypes(config);
  const auto corpus = synth::load_corpus(dir.path.string());
  REQUIRE(corpus.size() == 100);
  for (std::uint64_t i = 0; i < 100; ++i) {
    const synth::Utterance expected = synth::make_utterance(config, protos, i);
    const synth::Utterance& loaded = corpus[i];
    CHECK(loaded.utterance_id == expected.utterance_id);
    CHECK(loaded.token_ids == expected.token_ids);
    CHECK(loaded.label == expected.label);
    CHECK(loaded.raw_hop_ms == expected.raw_hop_ms);
    REQUIRE(loaded.raw_frames.shape == expected.raw_frames.shape);
    for (std::size_t j = 0; j < loaded.raw_frames.numel(); ++j) {
      CHECK(loaded.raw_frames.at(j) == expected.raw_frames.at(j));
    }
    REQUIRE(loaded.gold_boundaries.entries.size() ==
            expected.gold_boundaries.entries.size());
    for (std::size_t k = 0; k < loaded.gold_boundaries.entries.size(); ++k) {
      // The text format carries 3 decimals.
      CHECK(std::fabs(loaded.gold_boundaries.entries[k].left_ms -
                      expected.gold_boundaries.entries[k].left_ms) < 5e-4);
    }
  }
}

TEST_CASE("a truncated frame file raises CorruptFile with context") {
  synth::SynthConfig config;
  TempDir dir("wabert_synth_trunc");
  synth::generate_corpus(config, 3, dir.path.string());
  const fs::path victim = dir.path / "utt_00001.tnsr";
  const std::string blob = slurp(victim);
  std::ofstream os(victim, std::ios::binary | std::ios::trunc);
  os.write(blob.data(), static_cast<std::streamsize>(blob.size() / 2));
  os.close();
  CHECK_THROWS_AS(synth::load_corpus(dir.path.string()), CorruptFile);
}

TEST_CASE("an empty manifest yields an empty corpus") {
  TempDir dir("wabert_synth_empty");
  std::ofstream(dir.path / "manifest.jsonl").close();
  CHECK(synth::load_corpus(dir.path.string()).empty());
  CHECK_THROWS_AS(synth::load_corpus((dir.path / "missing").string()),
                  IoFailure);
}

TEST_CASE("split is deterministic, disjoint and exhaustive") {
  synth::SynthConfig config;
  TempDir dir("wabert_synth_split");
  synth::generate_corpus(config, 100, dir.path.string());
  const auto corpus = synth::load_corpus(dir.path.string());

  synth::CorpusSplit split = synth::split_corpus(corpus, 0.8, 0.1, 0.1, 42);
  CHECK(split.train.size() == 80);
  CHECK(split.dev.size() == 10);
  CHECK(split.test.size() == 10);

  std::set<std::string> ids;
  for (const auto* part : {&split.train, &split.dev, &split.test}) {
    for (const auto& utt : *part) ids.insert(utt.utterance_id);
  }
  CHECK(ids.size() == 100);

  synth::CorpusSplit again = synth::split_corpus(corpus, 0.8, 0.1, 0.1, 42);
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    CHECK(split.train[i].utterance_id == again.train[i].utterance_id);
  }
  synth::CorpusSplit other = synth::split_corpus(corpus, 0.8, 0.1, 0.1, 43);
  bool any_differs = false;
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    any_differs |= split.train[i].utterance_id != other.train[i].utterance_id;
  }
  CHECK(any_differs);

  CHECK_THROWS_AS(synth::split_corpus(corpus, 0.8, 0.3, 0.1, 1), BadFractions);
}

TEST_CASE("configuration validation") {
  synth::SynthConfig config;
  config.vocab = 4;
  CHECK_THROWS_AS(synth::draw_prototypes(config), ConfigError);

  synth::SynthConfig swapped;
  swapped.frames_per_token_min = 9;
  swapped.frames_per_token_max = 3;
  CHECK_THROWS_AS(synth::draw_prototypes(swapped), ConfigError);

  synth::SynthConfig bad_map;
  bad_map.sentiment_map = {1, 0, -1};  // wrong length
  CHECK_THROWS_AS(bad_map.effective_sentiment_map(), ConfigError);

  synth::SynthConfig bad_shared;
  bad_shared.proto_shared = 1.0;
  CHECK_THROWS_AS(synth::draw_prototypes(bad_shared), ConfigError);
}
