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

#include "wabert/cif.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "wabert/ops.hpp"

namespace wabert::cif {

namespace {

// How one contribution piece depends on the weight vector when the firing
// pattern is held fixed:
//   FullAlpha   c = alpha[t]                 d/d alpha[t]   = +1
//   Completing  c = beta - s_before          d/d alpha[u<t] = -1
//   WholeBeta   c = beta                     constant
//   Leftover    c = cum(t) - fired * beta    d/d alpha[u<=t]= +1
enum class PieceKind { FullAlpha, Completing, WholeBeta, Leftover };

struct Piece {
  std::size_t frame;
  std::size_t token;  // assigned when the owning token fires
  double value;
  PieceKind kind;
};

}  // namespace

double AlignmentWeights::sum() const {
  double acc = 0.0;
  for (std::size_t i = 0; i < alpha.numel(); ++i) acc += alpha.at(i);
  return acc;
}

double FiredAlignment::contribution(std::size_t frame, std::size_t token) const {
  for (const Contribution& c : contributions) {
    if (c.frame == frame && c.token == token) return c.value;
  }
  return 0.0;
}

std::vector<double> FiredAlignment::frame_totals(std::size_t frame_count) const {
  std::vector<double> totals(frame_count, 0.0);
  for (const Contribution& c : contributions) {
    if (c.frame < frame_count) totals[c.frame] += c.value;
  }
  return totals;
}

WeightPredictor WeightPredictor::init(std::size_t d_a, Rng& rng) {
  WeightPredictor p;
  const double conv_scale = 1.0 / std::sqrt(3.0 * static_cast<double>(d_a));
  p.conv_w = Tensor::zeros({3, d_a, d_a});
  for (std::size_t i = 0; i < p.conv_w.numel(); ++i)
    p.conv_w.at(i) = conv_scale * rng.next_gaussian();
  p.conv_b = Tensor::zeros({d_a});
  p.ln_gain = Tensor::full({d_a}, 1.0);
  p.ln_bias = Tensor::zeros({d_a});
  const double lin_scale = 1.0 / std::sqrt(static_cast<double>(d_a));
  p.lin_w = Tensor::zeros({d_a, 1});
  for (std::size_t i = 0; i < p.lin_w.numel(); ++i)
    p.lin_w.at(i) = lin_scale * rng.next_gaussian();
  // Biased low so the initial firing rate is near one token per few frames.
  p.lin_b = Tensor::full({1}, -1.6);
  for (auto& [name, t] : p.params()) t->set_requires_grad(true);
  return p;
}

std::vector<std::pair<std::string, Tensor*>> WeightPredictor::params() {
  return {{"predictor.conv_w", &conv_w}, {"predictor.conv_b", &conv_b},
          {"predictor.ln_gain", &ln_gain}, {"predictor.ln_bias", &ln_bias},
          {"predictor.lin_w", &lin_w},     {"predictor.lin_b", &lin_b}};
}

AlignmentWeights predict_weights(const FrameSequence& frames,
                                 const WeightPredictor& predictor) {
  if (frames.dim() != predictor.conv_w.shape[1]) {
    throw ShapeMismatch("predict_weights: predictor built for width " +
                        std::to_string(predictor.conv_w.shape[1]) +
                        ", frames have " + std::to_string(frames.dim()));
  }
  Tensor h = conv1d(frames.features, predictor.conv_w, predictor.conv_b,
                    /*stride=*/1, /*pad=*/1);
  h = layer_norm(h, predictor.ln_gain, predictor.ln_bias);
  h = add_rowwise(matmul(h, predictor.lin_w), predictor.lin_b);
  h = sigmoid(h);
  AlignmentWeights out;
  out.alpha = reshape(h, {frames.frames()});
  return out;
}

AlignmentWeights scale_weights(const AlignmentWeights& alpha,
                               std::size_t n_target) {
  Tensor total = sum_all(alpha.alpha);
  if (total.value() < 1e-9) {
    throw DegenerateWeights("scale_weights: weight sum " +
                            std::to_string(total.value()) + " is too small");
  }
  Tensor scaled = mul_scalar(scale_by(alpha.alpha, recip(total)),
                             static_cast<double>(n_target));
  AlignmentWeights out;
  out.alpha = scaled;
  out.scaled = true;
  out.n_target = n_target;
  return out;
}

FiredAlignment integrate_and_fire(const FrameSequence& frames,
                                  const AlignmentWeights& alpha,
                                  const CifConfig& config) {
  const std::size_t m = frames.frames();
  const std::size_t d = frames.dim();
  if (alpha.alpha.rank() != 1 || alpha.alpha.shape[0] != m) {
    throw ShapeMismatch("integrate_and_fire: " +
                        std::to_string(alpha.alpha.numel()) + " weights for " +
                        std::to_string(m) + " frames");
  }
  const double beta = config.beta;

  const Tensor& feats = frames.features;
  std::vector<Piece> all_pieces;      // every piece, for the gradient
  std::vector<Piece> pending;         // pieces accumulated in v
  std::vector<std::vector<double>> fired_rows;
  std::vector<double> v(d, 0.0);
  double s = 0.0;

  auto fire_pending = [&](std::size_t frame_of_fire, double completing) {
    const std::size_t token = fired_rows.size();
    std::vector<double> row = v;
    for (std::size_t j = 0; j < d; ++j)
      row[j] += completing * feats.at(frame_of_fire, j);
    pending.push_back({frame_of_fire, token, completing, PieceKind::Completing});
    for (Piece& p : pending) {
      p.token = token;
      all_pieces.push_back(p);
    }
    pending.clear();
    fired_rows.push_back(std::move(row));
    std::fill(v.begin(), v.end(), 0.0);
    s = 0.0;
  };

  auto fire_tail = [&]() {
    // Residual fires as-is: no completing piece.
    const std::size_t token = fired_rows.size();
    for (Piece& p : pending) {
      p.token = token;
      all_pieces.push_back(p);
    }
    pending.clear();
    fired_rows.push_back(v);
    std::fill(v.begin(), v.end(), 0.0);
    s = 0.0;
  };

  for (std::size_t t = 0; t < m; ++t) {
    const double w = alpha.alpha.at(t);
    if (s + w < beta) {
      s += w;
      for (std::size_t j = 0; j < d; ++j) v[j] += w * feats.at(t, j);
      pending.push_back({t, 0, w, PieceKind::FullAlpha});
    } else {
      const double r = beta - s;
      fire_pending(t, r);
      double leftover = w - r;
      while (leftover >= beta) {
        const std::size_t token = fired_rows.size();
        std::vector<double> row(d, 0.0);
        for (std::size_t j = 0; j < d; ++j) row[j] = beta * feats.at(t, j);
        all_pieces.push_back({t, token, beta, PieceKind::WholeBeta});
        fired_rows.push_back(std::move(row));
        leftover -= beta;
      }
      s = leftover;
      for (std::size_t j = 0; j < d; ++j) v[j] = leftover * feats.at(t, j);
      pending.push_back({t, 0, leftover, PieceKind::Leftover});
    }
  }

  // Residual resolution.
  bool resolved = false;
  if (alpha.scaled && alpha.n_target) {
    const std::size_t target = *alpha.n_target;
    if (fired_rows.size() == target && std::fabs(s) < config.epsilon_residual) {
      pending.clear();  // negligible mass left by rounding
      resolved = true;
    } else if (fired_rows.size() + 1 == target &&
               std::fabs(s - beta) < config.epsilon_residual) {
      fire_tail();
      resolved = true;
    }
  }
  if (!resolved) {
    switch (config.tail_policy) {
      case TailPolicy::FireIfAtLeastHalf:
        if (s >= beta / 2.0) fire_tail();
        break;
      case TailPolicy::AlwaysFire:
        if (s > 0.0) fire_tail();
        break;
      case TailPolicy::Discard:
        break;
    }
  }

  if (fired_rows.empty()) {
    throw EmptyOutput("integrate_and_fire: no token fired for utterance '" +
                      frames.utterance_id + "'");
  }

  FiredAlignment out;
  out.fired_count = fired_rows.size();
  out.n_predicted = alpha.sum();
  out.aligned = Tensor::zeros({out.fired_count, d});
  for (std::size_t k = 0; k < out.fired_count; ++k)
    for (std::size_t j = 0; j < d; ++j) out.aligned.at(k, j) = fired_rows[k][j];

  for (const Piece& p : all_pieces) {
    if (p.value > 0.0) out.contributions.push_back({p.frame, p.token, p.value});
  }
  std::sort(out.contributions.begin(), out.contributions.end(),
            [](const Contribution& a, const Contribution& b) {
              return a.token != b.token ? a.token < b.token : a.frame < b.frame;
            });

  if (grad_needed(feats, alpha.alpha)) {
    const std::size_t n_out = out.fired_count;
    Tensor& aligned = out.aligned;
    aligned.requires_grad = true;
    aligned.ensure_grad();
    aligned.node = std::make_shared<Node>();
    aligned.node->parents = {feats, alpha.alpha};
    aligned.node->backward = [pieces = all_pieces, m, d, n_out](const Tensor& o) {
      Tensor& pf = o.node->parents[0];
      Tensor& pa = o.node->parents[1];
      if (pf.requires_grad) pf.ensure_grad();
      std::vector<double> range_delta(m + 1, 0.0);  // difference array
      std::vector<double> point(m, 0.0);
      for (const Piece& p : pieces) {
        if (p.token >= n_out) continue;  // piece of a discarded residual
        double dc = 0.0;
        for (std::size_t j = 0; j < d; ++j)
          dc += (*o.grad)[p.token * d + j] * pf.at(p.frame, j);
        switch (p.kind) {
          case PieceKind::FullAlpha:
            point[p.frame] += dc;
            break;
          case PieceKind::Completing:
            if (p.frame > 0) {
              range_delta[0] -= dc;
              range_delta[p.frame] += dc;
            }
            break;
          case PieceKind::Leftover:
            range_delta[0] += dc;
            range_delta[p.frame + 1] -= dc;
            break;
          case PieceKind::WholeBeta:
            break;
        }
        if (pf.requires_grad && p.value != 0.0) {
          for (std::size_t j = 0; j < d; ++j)
            (*pf.grad)[p.frame * d + j] += p.value * (*o.grad)[p.token * d + j];
        }
      }
      if (pa.requires_grad) {
        pa.ensure_grad();
        double running = 0.0;
        for (std::size_t t = 0; t < m; ++t) {
          running += range_delta[t];
          (*pa.grad)[t] += running + point[t];
        }
      }
    };
  }
  return out;
}

Tensor quantity_loss(const AlignmentWeights& alpha, std::size_t n_target) {
  Tensor diff = add_scalar(sum_all(alpha.alpha),
                           -static_cast<double>(n_target));
  return abs_val(diff);
}

BoundarySet extract_boundaries(const FiredAlignment& fired, double hop_ms) {
  std::size_t frame_count = 0;
  for (const Contribution& c : fired.contributions)
    frame_count = std::max(frame_count, c.frame + 1);
  const std::vector<double> totals = fired.frame_totals(frame_count);

  // Per frame, mass assigned to tokens below a given index.
  auto mass_before = [&](std::size_t frame, std::size_t token) {
    double acc = 0.0;
    for (const Contribution& c : fired.contributions) {
      if (c.frame == frame && c.token < token) acc += c.value;
    }
    return acc;
  };

  BoundarySet set;
  for (std::size_t k = 0; k < fired.fired_count; ++k) {
    std::size_t t_first = frame_count, t_last = 0;
    bool any = false;
    for (const Contribution& c : fired.contributions) {
      if (c.token != k) continue;
      any = true;
      t_first = std::min(t_first, c.frame);
      t_last = std::max(t_last, c.frame);
    }
    if (!any) continue;
    const auto fraction = [&](std::size_t frame, double mass) {
      return totals[frame] < 1e-12 ? 0.0 : mass / totals[frame];
    };
    BoundaryEntry e;
    e.token_index = k;
    e.left_ms = static_cast<double>(t_first) * hop_ms +
                fraction(t_first, mass_before(t_first, k)) * hop_ms;
    e.right_ms = static_cast<double>(t_last) * hop_ms +
                 fraction(t_last, mass_before(t_last, k + 1)) * hop_ms;
    set.entries.push_back(e);
  }
  return set;
}

std::string boundary_set_to_text(const BoundarySet& set) {
  std::string out;
  char line[96];
  for (const BoundaryEntry& e : set.entries) {
    std::snprintf(line, sizeof(line), "%zu\t%.3f\t%.3f\n", e.token_index,
                  e.left_ms, e.right_ms);
    out += line;
  }
  return out;
}

BoundarySet boundary_set_from_text(const std::string& text) {
  BoundarySet set;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    BoundaryEntry e;
    if (std::sscanf(line.c_str(), "%zu\t%lf\t%lf", &e.token_index, &e.left_ms,
                    &e.right_ms) != 3) {
      throw CorruptFile("boundary line malformed: '" + line + "'");
    }
    set.entries.push_back(e);
  }
  return set;
}

}  // namespace wabert::cif
