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
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wabert/cif.hpp"
#include "wabert/rng.hpp"
#include "wabert/tensor.hpp"

// Desk-scale stand-ins for the pretrained encoders: a small strided conv
// acoustic encoder and a frozen layered linguistic model whose intermediate
// states serve as alignment targets. Grafting feeds aligned acoustic tokens
// into the linguistic stack at a chosen depth.

namespace wabert::models {

struct ModelConfig {
  std::size_t d_in = 16;
  std::size_t d_model = 32;  // shared acoustic/linguistic width
  std::size_t d_ff = 64;
  std::size_t vocab = 32;
  std::size_t layers = 12;
  double pos_scale = 0.25;
  // Bias draw scale of the linguistic blocks. Nonzero values give the
  // target states a shared mean component, the anisotropy that trained
  // language-model layers exhibit.
  double block_bias_sigma = 0.6;
  std::size_t graft_depth = 3;       // one of {3, 6, 9, 12}
  std::size_t pretrain_steps = 3000;  // head-consistency warmup (0 = off)
  std::uint64_t seed = 1;
};

// Position-wise feed-forward block with residual and layer norm:
// y = LN(x + W2 tanh(x W1 + b1) + b2).
struct FfnBlock {
  Tensor w1, b1, w2, b2, ln_gain, ln_bias;

  static FfnBlock init(std::size_t d, std::size_t d_ff, double bias_sigma,
                       Rng& rng);
  Tensor forward(const Tensor& x) const;
  std::vector<std::pair<std::string, Tensor*>> params(const std::string& prefix);
};

// Two strided conv blocks (stride 2, kernel 3) then two FFN blocks;
// downsamples time by 4.
struct AcousticEncoder {
  Tensor conv1_w, conv1_b, conv2_w, conv2_b;
  FfnBlock ffn1, ffn2;
  std::size_t d_in = 0, d_a = 0;

  static AcousticEncoder init(const ModelConfig& cfg, Rng& rng);
  std::vector<std::pair<std::string, Tensor*>> params();
};

cif::FrameSequence encode_acoustic(const Tensor& raw, double raw_hop_ms,
                                   const std::string& utterance_id,
                                   const AcousticEncoder& encoder);

// Target states from the frozen linguistic stack, paired with gold ids.
struct TokenSequence {
  Tensor states;  // [N, d_l]
  std::vector<std::size_t> token_ids;
};

// Embedding + sinusoidal positions, `layers` FFN blocks, and an output head
// tied to the transposed embedding. Parameters are frozen once built.
struct LinguisticModel {
  Tensor embedding;  // [vocab, d_l]
  std::vector<FfnBlock> blocks;
  double pos_scale = 0.25;
  std::size_t d_l = 0, vocab = 0;
  bool frozen = false;

  static LinguisticModel build(const ModelConfig& cfg, Rng& rng);

  // Embedding rows plus positions; rows listed in `masked` are zeroed
  // before the positions are added (used by the pretraining warmup).
  Tensor embed(const std::vector<std::size_t>& ids,
               const std::vector<std::size_t>& masked = {}) const;

  // Applies blocks (from, to], i.e. layers from+1 .. to.
  Tensor run_layers(const Tensor& x, std::size_t from, std::size_t to) const;

  // depth 0 = embedding + positions.
  Tensor layer_output(const std::vector<std::size_t>& ids,
                      std::size_t depth) const;

  Tensor head_logits(const Tensor& states) const;

  std::vector<std::pair<std::string, Tensor*>> params();
  std::uint64_t checksum() const;
};

TokenSequence linguistic_targets(const LinguisticModel& model,
                                 const std::vector<std::size_t>& token_ids,
                                 std::size_t depth);

// Mean-pool over tokens, then a linear map to 3 class logits.
struct ClassifierHead {
  Tensor w;  // [d_l, 3]
  Tensor b;  // [3]

  static ClassifierHead init(std::size_t d_l, Rng& rng);
  Tensor forward(const Tensor& top_states) const;  // [1, 3]
  std::vector<std::pair<std::string, Tensor*>> params();
};

struct GraftedModel {
  AcousticEncoder acoustic;
  cif::WeightPredictor predictor;
  cif::CifConfig cif_config;
  LinguisticModel linguistic;
  std::size_t graft_depth = 3;
  std::optional<ClassifierHead> classifier;
  ModelConfig config;

  static GraftedModel init(const ModelConfig& cfg);

  std::vector<std::pair<std::string, Tensor*>> trainable_params();
  std::vector<std::pair<std::string, Tensor*>> all_params();
};

struct GraftOutput {
  Tensor top_states;  // [N, d_l]
  Tensor logits;      // [N, vocab]
};

// Feeds aligned acoustic tokens into frozen layers graft_depth+1 .. L and
// the frozen head. With graft_depth == L the head applies directly.
GraftOutput graft_forward(const Tensor& a_hat, const GraftedModel& model);

struct InferenceResult {
  std::vector<std::size_t> token_ids;  // argmax per fired token
  cif::FiredAlignment fired;
  Tensor logits;                        // [N', vocab]
  std::vector<double> class_probs;      // empty without a classifier
};

// Unscaled CIF path: layers 1..graft_depth are never evaluated.
InferenceResult inference_forward(const Tensor& raw, double raw_hop_ms,
                                  const std::string& utterance_id,
                                  const GraftedModel& model);

// Indices of the five largest logits, descending, ties to the lower index.
std::vector<std::size_t> top5_candidates(const Tensor& logits, std::size_t row);

// Checkpoint: magic "WABT", version, structured-text header, then named
// parameter blocks in the tensor format.
void save_checkpoint(const std::string& path, const GraftedModel& model);
GraftedModel load_checkpoint(const std::string& path);

std::uint64_t params_checksum(
    const std::vector<std::pair<std::string, Tensor*>>& params);

}  // namespace wabert::models
