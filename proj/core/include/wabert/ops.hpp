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

#include "wabert/tensor.hpp"

// Forward primitives with reverse-mode gradients. All reductions run in a
// fixed left-to-right order so repeated evaluation is bitwise identical.

namespace wabert {

// Elementwise, same shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// Tensor-scalar (the scalar is a plain constant, not on the tape).
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);

// |x| with subgradient 0 at zero.
Tensor abs_val(const Tensor& a);

// Elementwise reciprocal; used on tape scalars (e.g. 1/sum).
Tensor recip(const Tensor& a);

// y = x * s where s is a 1-element tape tensor.
Tensor scale_by(const Tensor& x, const Tensor& s);

Tensor sigmoid(const Tensor& a);
Tensor tanh_act(const Tensor& a);

// matmul: [M,K]x[K,N] -> [M,N]; matmul_nt: [M,K]x[N,K] -> [M,N] (B transposed).
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// Adds bias vector b[d] to every row of x[N,d].
Tensor add_rowwise(const Tensor& x, const Tensor& b);

// 1-D convolution along time. x: [M, c_in], w: [k, c_in, c_out], b: [c_out].
// Zero padding of `pad` frames on both sides; output [(M+2*pad-k)/stride+1, c_out].
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t stride, std::size_t pad);

// Per-row layer normalization with affine parameters; epsilon fixed at 1e-5.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

// Row-wise softmax with max subtraction.
Tensor row_softmax(const Tensor& x);

// Rows scaled to unit L2 norm; throws ZeroNormVector below 1e-12.
Tensor row_l2_normalize(const Tensor& x);

// Mean over rows of softmax cross-entropy against integer targets.
Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<std::size_t>& target_ids);

// out[i,:] = table[ids[i],:]; gradient scatter-adds into the table.
Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids);

// Reductions.
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor row_sum(const Tensor& x);   // [N,d] -> [N]
Tensor col_mean(const Tensor& x);  // [N,d] -> [d]

// Stacks equal-width row blocks: [n_1,d]..[n_k,d] -> [sum n_i, d].
Tensor concat_rows(const std::vector<Tensor>& blocks);

// Same data, new shape with identical element count.
Tensor reshape(const Tensor& x, std::vector<std::size_t> shape);

// x'y / (|x| |y|) for vectors; throws ZeroNormVector if a norm < 1e-12.
Tensor cosine_similarity(const Tensor& x, const Tensor& y);

// Names of every available differentiable primitive.
std::vector<std::string> primitive_set();

}  // namespace wabert
