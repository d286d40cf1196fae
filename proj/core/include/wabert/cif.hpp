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
#include <vector>

#include "wabert/rng.hpp"
#include "wabert/tensor.hpp"

// Serial continuous integrate-and-fire: per-frame weights are accumulated
// until they cross a threshold, at which point one aligned token
// representation fires. Boundary frames split their weight between the
// finishing token and the next one, which is what makes sub-frame boundary
// extraction possible.

namespace wabert::cif {

// Frame-level acoustic features, one row per frame.
struct FrameSequence {
  Tensor features;  // [M, d_a]
  double hop_ms = 0.0;
  std::string utterance_id;

  std::size_t frames() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
};

// Per-frame firing weights. Pre-scaling values are sigmoid outputs in
// (0,1); teacher-forced scaling rescales them so they sum to a target
// token count (individual weights may then exceed 1).
struct AlignmentWeights {
  Tensor alpha;  // [M]
  bool scaled = false;
  std::optional<std::size_t> n_target;

  double sum() const;
};

enum class TailPolicy { FireIfAtLeastHalf, AlwaysFire, Discard };

struct CifConfig {
  double beta = 1.0;
  TailPolicy tail_policy = TailPolicy::FireIfAtLeastHalf;
  double epsilon_residual = 1e-6;
};

// One frame's weight share assigned to one fired token.
struct Contribution {
  std::size_t frame = 0;
  std::size_t token = 0;
  double value = 0.0;
};

// Aligned token representations plus the bookkeeping needed for boundary
// extraction: a-hat[k] == sum_t c[t,k] * a[t] holds exactly.
struct FiredAlignment {
  Tensor aligned;  // [N', d_a]
  std::vector<Contribution> contributions;  // ordered by (token, frame)
  double n_predicted = 0.0;  // sum of the weights that were handed in
  std::size_t fired_count = 0;

  // c[t,k], zero when the pair never met.
  double contribution(std::size_t frame, std::size_t token) const;
  // w[t] = sum_k c[t,k]
  std::vector<double> frame_totals(std::size_t frame_count) const;
};

// Word-level time boundaries, milliseconds from utterance start.
struct BoundaryEntry {
  std::size_t token_index = 0;
  double left_ms = 0.0;
  double right_ms = 0.0;
};

struct BoundarySet {
  std::vector<BoundaryEntry> entries;
};

// Trainable parameters of the weight predictor:
// sigmoid(linear(layer_norm(conv1d_k3(features)))).
struct WeightPredictor {
  Tensor conv_w;   // [3, d_a, d_a]
  Tensor conv_b;   // [d_a]
  Tensor ln_gain;  // [d_a]
  Tensor ln_bias;  // [d_a]
  Tensor lin_w;    // [d_a, 1]
  Tensor lin_b;    // [1]

  static WeightPredictor init(std::size_t d_a, Rng& rng);
  std::vector<std::pair<std::string, Tensor*>> params();
};

AlignmentWeights predict_weights(const FrameSequence& frames,
                                 const WeightPredictor& predictor);

// Teacher forcing: rescale so the weights sum to n_target. Differentiable
// through the scaling factor. Throws DegenerateWeights when the weights
// sum below 1e-9.
AlignmentWeights scale_weights(const AlignmentWeights& alpha,
                               std::size_t n_target);

// The serial recurrence. Gradients flow through every weighted sum; the
// firing pattern itself is treated as locally constant.
FiredAlignment integrate_and_fire(const FrameSequence& frames,
                                  const AlignmentWeights& alpha,
                                  const CifConfig& config);

// |sum(alpha) - n_target| on pre-scaling weights; subgradient 0 at zero.
Tensor quantity_loss(const AlignmentWeights& alpha, std::size_t n_target);

// Sub-frame boundaries from the contribution fractions at each token's
// first and last frame.
BoundarySet extract_boundaries(const FiredAlignment& fired, double hop_ms);

// Text form: token_index<TAB>left_ms<TAB>right_ms, 3 decimals per value.
std::string boundary_set_to_text(const BoundarySet& set);
BoundarySet boundary_set_from_text(const std::string& text);

}  // namespace wabert::cif
