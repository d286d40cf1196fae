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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wabert/cif.hpp"
#include "wabert/tensor.hpp"

// Synthetic paired corpus: each token emits a run of frames around a fixed
// per-token prototype vector, so the alignment ground truth is exact. The
// sentiment label is a deterministic function of the token sequence.

namespace wabert::synth {

struct SynthConfig {
  std::size_t vocab = 32;
  std::size_t d_in = 16;
  std::size_t frames_per_token_min = 3;
  std::size_t frames_per_token_max = 9;
  double raw_hop_ms = 5.0;
  double noise_sigma = 0.1;
  // Fraction of prototype energy shared across the vocabulary, the way
  // speech frames share spectral structure. 0 gives independent
  // prototypes; the 4-sigma separation invariant holds either way.
  double proto_shared = 0.7;
  std::size_t tokens_per_utt_min = 4;
  std::size_t tokens_per_utt_max = 12;
  // Per-vocab valence in {-1, 0, +1}; empty means id % 3 - 1.
  std::vector<int> sentiment_map;
  // Utterances with 0 < |valence sum| < label_margin are redrawn so the
  // three classes stay separated.
  int label_margin = 2;
  std::uint64_t seed = 7;

  std::vector<int> effective_sentiment_map() const;
};

struct Utterance {
  std::string utterance_id;
  std::vector<std::size_t> token_ids;
  Tensor raw_frames;  // [M_raw, d_in]
  double raw_hop_ms = 5.0;
  cif::BoundarySet gold_boundaries;  // raw-time ms
  int label = 1;  // 0 negative, 1 neutral, 2 positive
};

// Prototype vectors, one per vocab entry; redrawn until the minimum
// pairwise distance clears 4 * noise_sigma.
std::vector<Tensor> draw_prototypes(const SynthConfig& config);

Utterance make_utterance(const SynthConfig& config,
                         const std::vector<Tensor>& prototypes,
                         std::uint64_t index);

// Writes manifest.jsonl plus one frame tensor file and one gold boundary
// text file per utterance. Byte-identical for identical (config, count).
void generate_corpus(const SynthConfig& config, std::size_t count,
                     const std::string& dir);

std::vector<Utterance> load_corpus(const std::string& dir);

struct CorpusSplit {
  std::vector<Utterance> train, dev, test;
};

// Deterministic disjoint partition; fractions must sum to 1 within 1e-9.
CorpusSplit split_corpus(const std::vector<Utterance>& corpus,
                         double train_fraction, double dev_fraction,
                         double test_fraction, std::uint64_t seed);

int label_from_ids(const std::vector<std::size_t>& ids,
                   const std::vector<int>& sentiment_map);

}  // namespace wabert::synth
