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

#include "wabert/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "wabert/rng.hpp"
#include "wabert/serialize.hpp"

namespace wabert::synth {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kPrototypeStream = 0x70726f746f;  // distinct sub-seed

std::string utterance_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "utt_%05zu", index);
  return buf;
}

}  // namespace

std::vector<int> SynthConfig::effective_sentiment_map() const {
  if (!sentiment_map.empty()) {
    if (sentiment_map.size() != vocab) {
      throw ConfigError("sentiment_map must have one entry per vocab id");
    }
    return sentiment_map;
  }
  std::vector<int> map(vocab);
  for (std::size_t id = 0; id < vocab; ++id)
    map[id] = static_cast<int>(id % 3) - 1;
  return map;
}

int label_from_ids(const std::vector<std::size_t>& ids,
                   const std::vector<int>& sentiment_map) {
  long long total = 0;
  for (std::size_t id : ids) total += sentiment_map[id];
  return total < 0 ? 0 : (total == 0 ? 1 : 2);
}

std::vector<Tensor> draw_prototypes(const SynthConfig& config) {
  if (config.vocab < 8) throw ConfigError("vocab must be at least 8");
  if (config.frames_per_token_min > config.frames_per_token_max ||
      config.tokens_per_utt_min > config.tokens_per_utt_max ||
      config.frames_per_token_min == 0 || config.tokens_per_utt_min == 0) {
    throw ConfigError("empty frames/tokens range");
  }
  if (config.proto_shared < 0.0 || config.proto_shared >= 1.0) {
    throw ConfigError("synth.proto_shared must lie in [0, 1)");
  }
  Rng rng(Rng::derive(config.seed, kPrototypeStream));
  const double min_dist = 4.0 * config.noise_sigma;
  const double shared_scale = std::sqrt(config.proto_shared);
  const double own_scale = std::sqrt(1.0 - config.proto_shared);
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::vector<double> shared(config.d_in);
    for (double& v : shared) v = rng.next_gaussian();
    std::vector<Tensor> protos;
    protos.reserve(config.vocab);
    for (std::size_t v = 0; v < config.vocab; ++v) {
      Tensor p = Tensor::zeros({config.d_in});
      for (std::size_t j = 0; j < config.d_in; ++j)
        p.at(j) = shared_scale * shared[j] + own_scale * rng.next_gaussian();
      protos.push_back(std::move(p));
    }
    double worst = 1e300;
    for (std::size_t a = 0; a < protos.size(); ++a) {
      for (std::size_t b = a + 1; b < protos.size(); ++b) {
        double sq = 0.0;
        for (std::size_t j = 0; j < config.d_in; ++j) {
          const double diff = protos[a].at(j) - protos[b].at(j);
          sq += diff * diff;
        }
        worst = std::min(worst, std::sqrt(sq));
      }
    }
    if (worst > min_dist) return protos;
  }
  throw ConfigError("could not draw prototypes separated by 4*sigma; "
                    "lower noise_sigma or d_in is too small");
}

Utterance make_utterance(const SynthConfig& config,
                         const std::vector<Tensor>& prototypes,
                         std::uint64_t index) {
  Rng rng(Rng::derive(config.seed, index + 1));
  const std::vector<int> valences = config.effective_sentiment_map();

  Utterance utt;
  utt.utterance_id = utterance_name(index);
  utt.raw_hop_ms = config.raw_hop_ms;

  // Redraw until the valence sum is 0 or at least label_margin in
  // magnitude, keeping the classes separated.
  std::vector<std::size_t> ids;
  for (;;) {
    const std::size_t n = static_cast<std::size_t>(
        rng.next_int(static_cast<std::int64_t>(config.tokens_per_utt_min),
                     static_cast<std::int64_t>(config.tokens_per_utt_max)));
    ids.clear();
    for (std::size_t i = 0; i < n; ++i) {
      ids.push_back(static_cast<std::size_t>(
          rng.next_int(0, static_cast<std::int64_t>(config.vocab) - 1)));
    }
    long long total = 0;
    for (std::size_t id : ids) total += valences[id];
    if (total == 0 || std::llabs(total) >= config.label_margin) break;
  }
  utt.token_ids = ids;
  utt.label = label_from_ids(ids, valences);

  std::vector<std::size_t> frames_per_token(ids.size());
  std::size_t m_raw = 0;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    frames_per_token[k] = static_cast<std::size_t>(
        rng.next_int(static_cast<std::int64_t>(config.frames_per_token_min),
                     static_cast<std::int64_t>(config.frames_per_token_max)));
    m_raw += frames_per_token[k];
  }

  utt.raw_frames = Tensor::zeros({m_raw, config.d_in});
  std::size_t row = 0;
  double cursor_ms = 0.0;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const Tensor& proto = prototypes[ids[k]];
    for (std::size_t f = 0; f < frames_per_token[k]; ++f, ++row) {
      for (std::size_t j = 0; j < config.d_in; ++j) {
        utt.raw_frames.at(row, j) =
            proto.at(j) + config.noise_sigma * rng.next_gaussian();
      }
    }
    cif::BoundaryEntry entry;
    entry.token_index = k;
    entry.left_ms = cursor_ms;
    cursor_ms += static_cast<double>(frames_per_token[k]) * config.raw_hop_ms;
    entry.right_ms = cursor_ms;
    utt.gold_boundaries.entries.push_back(entry);
  }
  return utt;
}

void generate_corpus(const SynthConfig& config, std::size_t count,
                     const std::string& dir) {
  if (count < 1) throw ConfigError("corpus count must be at least 1");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoFailure("cannot create corpus directory " + dir);

  const std::vector<Tensor> prototypes = draw_prototypes(config);
  std::ofstream manifest(fs::path(dir) / "manifest.jsonl");
  if (!manifest) throw IoFailure("cannot open manifest in " + dir);

  for (std::size_t i = 0; i < count; ++i) {
    Utterance utt = make_utterance(config, prototypes, i);
    const std::string frames_name = utt.utterance_id + ".tnsr";
    const std::string bounds_name = utt.utterance_id + ".bounds";
    save_tensor((fs::path(dir) / frames_name).string(), utt.raw_frames);
    {
      std::ofstream bounds(fs::path(dir) / bounds_name);
      if (!bounds) throw IoFailure("cannot write " + bounds_name);
      bounds << cif::boundary_set_to_text(utt.gold_boundaries);
    }
    nlohmann::json record;
    record["id"] = utt.utterance_id;
    record["n"] = utt.token_ids.size();
    record["m_raw"] = utt.raw_frames.rows();
    record["raw_hop_ms"] = utt.raw_hop_ms;
    record["label"] = utt.label;
    record["token_ids"] = utt.token_ids;
    record["frames"] = frames_name;
    record["bounds"] = bounds_name;
    manifest << record.dump() << "\n";
  }
  if (!manifest) throw IoFailure("manifest write failed in " + dir);
}

std::vector<Utterance> load_corpus(const std::string& dir) {
  std::ifstream manifest(fs::path(dir) / "manifest.jsonl");
  if (!manifest) throw IoFailure("cannot open manifest in " + dir);

  std::vector<Utterance> corpus;
  std::string line;
  std::size_t record_index = 0;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
    if (record.is_discarded()) {
      throw CorruptFile("manifest record " + std::to_string(record_index) +
                        " is not valid");
    }
    try {
      Utterance utt;
      utt.utterance_id = record.at("id").get<std::string>();
      utt.token_ids = record.at("token_ids").get<std::vector<std::size_t>>();
      utt.raw_hop_ms = record.at("raw_hop_ms").get<double>();
      utt.label = record.at("label").get<int>();
      utt.raw_frames = load_tensor(
          (fs::path(dir) / record.at("frames").get<std::string>()).string());
      std::ifstream bounds(
          fs::path(dir) / record.at("bounds").get<std::string>());
      if (!bounds) {
        throw CorruptFile("missing boundary file for record " +
                          std::to_string(record_index));
      }
      std::string text((std::istreambuf_iterator<char>(bounds)),
                       std::istreambuf_iterator<char>());
      utt.gold_boundaries = cif::boundary_set_from_text(text);
      if (record.at("n").get<std::size_t>() != utt.token_ids.size() ||
          record.at("m_raw").get<std::size_t>() != utt.raw_frames.rows()) {
        throw CorruptFile("record " + std::to_string(record_index) +
                          " is inconsistent with its payload");
      }
      corpus.push_back(std::move(utt));
    } catch (const nlohmann::json::exception& e) {
      throw CorruptFile("manifest record " + std::to_string(record_index) +
                        ": " + e.what());
    }
    ++record_index;
  }
  return corpus;
}

CorpusSplit split_corpus(const std::vector<Utterance>& corpus,
                         double train_fraction, double dev_fraction,
                         double test_fraction, std::uint64_t seed) {
  const double total = train_fraction + dev_fraction + test_fraction;
  if (std::fabs(total - 1.0) > 1e-9 || train_fraction < 0.0 ||
      dev_fraction < 0.0 || test_fraction < 0.0) {
    throw BadFractions("split fractions must be nonnegative and sum to 1");
  }
  const std::size_t n = corpus.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(Rng::derive(seed, 0x73706c6974));  // split stream
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(
        rng.next_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }

  // Largest-remainder apportionment keeps the partition exhaustive.
  const double fracs[3] = {train_fraction, dev_fraction, test_fraction};
  std::size_t sizes[3];
  double remainders[3];
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double ideal = fracs[i] * static_cast<double>(n);
    sizes[i] = static_cast<std::size_t>(std::floor(ideal + 1e-12));
    remainders[i] = ideal - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (remainders[i] > remainders[best]) best = i;
    }
    ++sizes[best];
    remainders[best] = -1.0;
    ++assigned;
  }

  CorpusSplit split;
  std::size_t cursor = 0;
  for (std::size_t i = 0; i < sizes[0]; ++i) split.train.push_back(corpus[order[cursor++]]);
  for (std::size_t i = 0; i < sizes[1]; ++i) split.dev.push_back(corpus[order[cursor++]]);
  for (std::size_t i = 0; i < sizes[2]; ++i) split.test.push_back(corpus[order[cursor++]]);
  return split;
}

}  // namespace wabert::synth
