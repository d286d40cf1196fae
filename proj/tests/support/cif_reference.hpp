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

// Plain integrate-and-fire recurrence, written independently of the
// library implementation and kept gradient-free. Serves as the oracle the
// real implementation is checked against.

#pragma once

#include <cstddef>
#include <vector>

namespace cif_reference {

enum class Tail { FireIfAtLeastHalf, AlwaysFire, Discard };

struct Result {
  std::vector<std::vector<double>> aligned;  // fired rows
  double n_predicted = 0.0;
};

// frames: M rows of width d; alpha: M weights; beta: threshold.
// exact_target: when >= 0, resolve the final residual so exactly that many
// tokens fire (teacher-forced mode).
inline Result run(const std::vector<std::vector<double>>& frames,
                  const std::vector<double>& alpha, double beta, Tail tail,
                  long exact_target = -1, double eps_residual = 1e-6) {
  const std::size_t d = frames.empty() ? 0 : frames[0].size();
  Result out;
  std::vector<double> v(d, 0.0);
  double s = 0.0;
  for (double a : alpha) out.n_predicted += a;

  for (std::size_t t = 0; t < frames.size(); ++t) {
    const double w = alpha[t];
    if (s + w < beta) {
      s += w;
      for (std::size_t j = 0; j < d; ++j) v[j] += w * frames[t][j];
    } else {
      const double r = beta - s;
      std::vector<double> row = v;
      for (std::size_t j = 0; j < d; ++j) row[j] += r * frames[t][j];
      out.aligned.push_back(row);
      double leftover = w - r;
      while (leftover >= beta) {
        std::vector<double> extra(d);
        for (std::size_t j = 0; j < d; ++j) extra[j] = beta * frames[t][j];
        out.aligned.push_back(extra);
        leftover -= beta;
      }
      s = leftover;
      for (std::size_t j = 0; j < d; ++j) v[j] = leftover * frames[t][j];
    }
  }

  bool resolved = false;
  if (exact_target >= 0) {
    const std::size_t target = static_cast<std::size_t>(exact_target);
    if (out.aligned.size() == target && s < eps_residual && s > -eps_residual) {
      resolved = true;
    } else if (out.aligned.size() + 1 == target &&
               (s - beta < eps_residual && beta - s < eps_residual)) {
      out.aligned.push_back(v);
      resolved = true;
    }
  }
  if (!resolved) {
    const bool fire = (tail == Tail::AlwaysFire && s > 0.0) ||
                      (tail == Tail::FireIfAtLeastHalf && s >= beta / 2.0);
    if (fire) out.aligned.push_back(v);
  }
  return out;
}

// Frame indices of each firing, ignoring the tail. Two weight vectors with
// equal signatures share a firing pattern.
inline std::vector<std::size_t> firing_signature(
    const std::vector<double>& alpha, double beta) {
  std::vector<std::size_t> fires;
  double s = 0.0;
  for (std::size_t t = 0; t < alpha.size(); ++t) {
    if (s + alpha[t] < beta) {
      s += alpha[t];
    } else {
      fires.push_back(t);
      double leftover = alpha[t] - (beta - s);
      while (leftover >= beta) {
        fires.push_back(t);
        leftover -= beta;
      }
      s = leftover;
    }
  }
  return fires;
}

}  // namespace cif_reference
