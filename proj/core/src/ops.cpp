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

#include "wabert/ops.hpp"

#include <cmath>
#include <utility>

namespace wabert {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kZeroNormTol = 1e-12;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) {
    throw ShapeMismatch(std::string(op) + ": " + shape_str(a.shape) + " vs " +
                        shape_str(b.shape));
  }
}

void check_matrix(const Tensor& x, const char* op) {
  if (x.rank() != 2) {
    throw ShapeMismatch(std::string(op) + ": expected matrix, got " +
                        shape_str(x.shape));
  }
}

void attach(Tensor& out, std::vector<Tensor> parents,
            std::function<void(const Tensor&)> fn) {
  out.requires_grad = true;
  out.ensure_grad();  // allocate now so all aliases share one buffer
  out.node = std::make_shared<Node>();
  out.node->parents = std::move(parents);
  out.node->backward = std::move(fn);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape);
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = a.at(i) + b.at(i);
  if (grad_needed(a, b)) {
    attach(out, {a, b}, [](const Tensor& o) {
      for (Tensor& p : o.node->parents) {
        if (!p.requires_grad) continue;
        p.ensure_grad();
        for (std::size_t i = 0; i < o.numel(); ++i) (*p.grad)[i] += (*o.grad)[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape);
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = a.at(i) - b.at(i);
  if (grad_needed(a, b)) {
    attach(out, {a, b}, [](const Tensor& o) {
      Tensor& pa = o.node->parents[0];
      Tensor& pb = o.node->parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t i = 0; i < o.numel(); ++i) (*pa.grad)[i] += (*o.grad)[i];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t i = 0; i < o.numel(); ++i) (*pb.grad)[i] -= (*o.grad)[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape);
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = a.at(i) * b.at(i);
  if (grad_needed(a, b)) {
    attach(out, {a, b}, [](const Tensor& o) {
      Tensor& pa = o.node->parents[0];
      Tensor& pb = o.node->parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t i = 0; i < o.numel(); ++i)
          (*pa.grad)[i] += (*o.grad)[i] * pb.at(i);
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t i = 0; i < o.numel(); ++i)
          (*pb.grad)[i] += (*o.grad)[i] * pa.at(i);
      }
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape);
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) + c;
  if (grad_needed(a)) {
    attach(out, {a}, [](const Tensor& o) {
      Tensor& p = o.node->parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < o.numel(); ++i) (*p.grad)[i] += (*o.grad)[i];
    });
  }
  return out;
}

Tensor mul_scalar(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape);
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = a.at(i) * c;
  if (grad_needed(a)) {
    attach(out, {a}, [c](const Tensor& o) {
      Tensor& p = o.node->parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < o.numel(); ++i)
        (*p.grad)[i] += (*o.grad)[i] * c;
    });
  }
  return out;
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor abs_val(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = std::fabs(a.at(i));
  if (grad_needed(a)) {
    attach(out, {a}, [](const Tensor& o) {
      Tensor& p = o.node->parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < o.numel(); ++i) {
        const double x = p.at(i);
        const double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
        (*p.grad)[i] += (*o.grad)[i] * s;
      }
    });
  }
  return out;
}

Tensor recip(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = 1.0 / a.at(i);
  if (grad_needed(a)) {
    attach(out, {a}, [](const Tensor& o) {
      Tensor& p = o.node->parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < o.numel(); ++i) {
        const double y = o.at(i);
        (*p.grad)[i] -= (*o.grad)[i] * y * y;
      }
    });
  }
  return out;
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) {
    throw ShapeMismatch("scale_by: scale must be a 1-element tensor");
  }
  const double sv = s.at(0);
  Tensor out = Tensor::zeros(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) out.at(i) = x.at(i) * sv;
  if (grad_needed(x, s)) {
    attach(out, {x, s}, [](const Tensor& o) {
      Tensor& px = o.node->parents[0];
      Tensor& ps = o.node->parents[1];
      if (px.requires_grad) {
        px.ensure_grad();
        const double sv2 = ps.at(0);
        for (std::size_t i = 0; i < o.numel(); ++i)
          (*px.grad)[i] += (*o.grad)[i] * sv2;
      }
      if (ps.requires_grad) {
        ps.ensure_grad();
        double acc = 0.0;
        for (std::size_t i = 0; i < o.numel(); ++i)
          acc += (*o.grad)[i] * px.at(i);
        (*ps.grad)[0] += acc;
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double x = a.at(i);
    out.at(i) = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                         : std::exp(x) / (1.0 + std::exp(x));
  }
  if (grad_needed(a)) {
    attach(out, {a}, [](const Tensor& o) {
      Tensor& p = o.node->parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < o.numel(); ++i) {
        const double y = o.at(i);
        (*p.grad)[i] += (*o.grad)[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

Tensor tanh_act(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape);
  for (std::size_t i = 0; i < a.numel(); ++i) out.at(i) = std::tanh(a.at(i));
  if (grad_needed(a)) {
    attach(out, {a}, [](const Tensor& o) {
      Tensor& p = o.node->parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < o.numel(); ++i) {
        const double y = o.at(i);
        (*p.grad)[i] += (*o.grad)[i] * (1.0 - y * y);
      }
    });
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul");
  check_matrix(b, "matmul");
  const std::size_t m = a.shape[0], k = a.shape[1];
  if (b.shape[0] != k) {
    throw ShapeMismatch("matmul: " + shape_str(a.shape) + " x " +
                        shape_str(b.shape));
  }
  const std::size_t n = b.shape[1];
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += a.at(i, t) * b.at(t, j);
      out.at(i, j) = acc;
    }
  }
  if (grad_needed(a, b)) {
    attach(out, {a, b}, [m, k, n](const Tensor& o) {
      Tensor& pa = o.node->parents[0];
      Tensor& pb = o.node->parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t t = 0; t < k; ++t) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j)
              acc += (*o.grad)[i * n + j] * pb.at(t, j);
            (*pa.grad)[i * k + t] += acc;
          }
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t t = 0; t < k; ++t)
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i)
              acc += pa.at(i, t) * (*o.grad)[i * n + j];
            (*pb.grad)[t * n + j] += acc;
          }
      }
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_matrix(a, "matmul_nt");
  check_matrix(b, "matmul_nt");
  const std::size_t m = a.shape[0], k = a.shape[1];
  if (b.shape[1] != k) {
    throw ShapeMismatch("matmul_nt: " + shape_str(a.shape) + " x " +
                        shape_str(b.shape) + "^T");
  }
  const std::size_t n = b.shape[0];
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += a.at(i, t) * b.at(j, t);
      out.at(i, j) = acc;
    }
  }
  if (grad_needed(a, b)) {
    attach(out, {a, b}, [m, k, n](const Tensor& o) {
      Tensor& pa = o.node->parents[0];
      Tensor& pb = o.node->parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t t = 0; t < k; ++t) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j)
              acc += (*o.grad)[i * n + j] * pb.at(j, t);
            (*pa.grad)[i * k + t] += acc;
          }
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t t = 0; t < k; ++t) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i)
              acc += (*o.grad)[i * n + j] * pa.at(i, t);
            (*pb.grad)[j * k + t] += acc;
          }
      }
    });
  }
  return out;
}

Tensor add_rowwise(const Tensor& x, const Tensor& b) {
  check_matrix(x, "add_rowwise");
  if (b.rank() != 1 || b.shape[0] != x.shape[1]) {
    throw ShapeMismatch("add_rowwise: bias " + shape_str(b.shape) +
                        " for matrix " + shape_str(x.shape));
  }
  const std::size_t n = x.shape[0], d = x.shape[1];
  Tensor out = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = x.at(i, j) + b.at(j);
  if (grad_needed(x, b)) {
    attach(out, {x, b}, [n, d](const Tensor& o) {
      Tensor& px = o.node->parents[0];
      Tensor& pb = o.node->parents[1];
      if (px.requires_grad) {
        px.ensure_grad();
        for (std::size_t i = 0; i < n * d; ++i) (*px.grad)[i] += (*o.grad)[i];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t j = 0; j < d; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < n; ++i) acc += (*o.grad)[i * d + j];
          (*pb.grad)[j] += acc;
        }
      }
    });
  }
  return out;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t stride, std::size_t pad) {
  check_matrix(x, "conv1d");
  if (w.rank() != 3) throw ShapeMismatch("conv1d: weight must be [k,c_in,c_out]");
  const std::size_t m = x.shape[0], cin = x.shape[1];
  const std::size_t k = w.shape[0], cout = w.shape[2];
  if (w.shape[1] != cin) {
    throw ShapeMismatch("conv1d: weight c_in " + std::to_string(w.shape[1]) +
                        " vs input " + std::to_string(cin));
  }
  if (b.rank() != 1 || b.shape[0] != cout) {
    throw ShapeMismatch("conv1d: bias shape " + shape_str(b.shape));
  }
  if (stride == 0 || m + 2 * pad < k) {
    throw ShapeMismatch("conv1d: input too short for kernel");
  }
  const std::size_t mout = (m + 2 * pad - k) / stride + 1;
  Tensor out = Tensor::zeros({mout, cout});
  for (std::size_t t = 0; t < mout; ++t) {
    for (std::size_t co = 0; co < cout; ++co) {
      double acc = b.at(co);
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src =
            static_cast<std::ptrdiff_t>(t * stride + j) -
            static_cast<std::ptrdiff_t>(pad);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(m)) continue;
        for (std::size_t ci = 0; ci < cin; ++ci)
          acc += x.at(static_cast<std::size_t>(src), ci) * w.at(j * cin * cout + ci * cout + co);
      }
      out.at(t, co) = acc;
    }
  }
  if (grad_needed(x, w, b)) {
    attach(out, {x, w, b}, [m, cin, k, cout, mout, stride, pad](const Tensor& o) {
      Tensor& px = o.node->parents[0];
      Tensor& pw = o.node->parents[1];
      Tensor& pb = o.node->parents[2];
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t co = 0; co < cout; ++co) {
          double acc = 0.0;
          for (std::size_t t = 0; t < mout; ++t) acc += (*o.grad)[t * cout + co];
          (*pb.grad)[co] += acc;
        }
      }
      if (px.requires_grad) px.ensure_grad();
      if (pw.requires_grad) pw.ensure_grad();
      for (std::size_t t = 0; t < mout; ++t) {
        for (std::size_t j = 0; j < k; ++j) {
          const std::ptrdiff_t src =
              static_cast<std::ptrdiff_t>(t * stride + j) -
              static_cast<std::ptrdiff_t>(pad);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(m)) continue;
          const std::size_t u = static_cast<std::size_t>(src);
          for (std::size_t co = 0; co < cout; ++co) {
            const double g = (*o.grad)[t * cout + co];
            if (g == 0.0) continue;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              if (px.requires_grad)
                (*px.grad)[u * cin + ci] +=
                    g * pw.at(j * cin * cout + ci * cout + co);
              if (pw.requires_grad)
                (*pw.grad)[j * cin * cout + ci * cout + co] +=
                    g * px.at(u, ci);
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  check_matrix(x, "layer_norm");
  const std::size_t n = x.shape[0], d = x.shape[1];
  if (gain.rank() != 1 || gain.shape[0] != d || bias.rank() != 1 ||
      bias.shape[0] != d) {
    throw ShapeMismatch("layer_norm: affine params must have width " +
                        std::to_string(d));
  }
  Tensor out = Tensor::zeros({n, d});
  // x-hat is recomputed in the backward pass from the parents.
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x.at(i, j);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x.at(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < d; ++j)
      out.at(i, j) = gain.at(j) * (x.at(i, j) - mean) * inv_std + bias.at(j);
  }
  if (grad_needed(x, gain, bias)) {
    attach(out, {x, gain, bias}, [n, d](const Tensor& o) {
      Tensor& px = o.node->parents[0];
      Tensor& pg = o.node->parents[1];
      Tensor& pb = o.node->parents[2];
      if (px.requires_grad) px.ensure_grad();
      if (pg.requires_grad) pg.ensure_grad();
      if (pb.requires_grad) pb.ensure_grad();
      std::vector<double> xhat(d), dxhat(d);
      for (std::size_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += px.at(i, j);
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double c = px.at(i, j) - mean;
          var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
        for (std::size_t j = 0; j < d; ++j)
          xhat[j] = (px.at(i, j) - mean) * inv_std;

        for (std::size_t j = 0; j < d; ++j) {
          const double gy = (*o.grad)[i * d + j];
          dxhat[j] = gy * pg.at(j);
          if (pg.requires_grad) (*pg.grad)[j] += gy * xhat[j];
          if (pb.requires_grad) (*pb.grad)[j] += gy;
        }
        if (px.requires_grad) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xhat[j];
          }
          mean_dxhat /= static_cast<double>(d);
          mean_dxhat_xhat /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j)
            (*px.grad)[i * d + j] +=
                inv_std * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
        }
      }
    });
  }
  return out;
}

Tensor row_softmax(const Tensor& x) {
  check_matrix(x, "row_softmax");
  const std::size_t n = x.shape[0], d = x.shape[1];
  Tensor out = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, x.at(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      out.at(i, j) = std::exp(x.at(i, j) - mx);
      denom += out.at(i, j);
    }
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) /= denom;
  }
  if (grad_needed(x)) {
    attach(out, {x}, [n, d](const Tensor& o) {
      Tensor& p = o.node->parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j)
          dot += (*o.grad)[i * d + j] * o.at(i, j);
        for (std::size_t j = 0; j < d; ++j)
          (*p.grad)[i * d + j] += o.at(i, j) * ((*o.grad)[i * d + j] - dot);
      }
    });
  }
  return out;
}

Tensor row_l2_normalize(const Tensor& x) {
  check_matrix(x, "row_l2_normalize");
  const std::size_t n = x.shape[0], d = x.shape[1];
  Tensor out = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += x.at(i, j) * x.at(i, j);
    const double norm = std::sqrt(sq);
    if (norm < kZeroNormTol) {
      throw ZeroNormVector("row_l2_normalize: row " + std::to_string(i) +
                           " has near-zero norm");
    }
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = x.at(i, j) / norm;
  }
  if (grad_needed(x)) {
    attach(out, {x}, [n, d](const Tensor& o) {
      Tensor& p = o.node->parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) sq += p.at(i, j) * p.at(i, j);
        const double norm = std::sqrt(sq);
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j)
          dot += (*o.grad)[i * d + j] * o.at(i, j);
        for (std::size_t j = 0; j < d; ++j)
          (*p.grad)[i * d + j] +=
              ((*o.grad)[i * d + j] - o.at(i, j) * dot) / norm;
      }
    });
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<std::size_t>& target_ids) {
  check_matrix(logits, "softmax_cross_entropy");
  const std::size_t n = logits.shape[0], v = logits.shape[1];
  if (target_ids.size() != n) {
    throw ShapeMismatch("softmax_cross_entropy: " +
                        std::to_string(target_ids.size()) + " targets for " +
                        std::to_string(n) + " rows");
  }
  for (std::size_t id : target_ids) {
    if (id >= v) {
      throw IdOutOfRange("softmax_cross_entropy: target " + std::to_string(id) +
                         " >= vocab " + std::to_string(v));
    }
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits.at(i, 0);
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, logits.at(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < v; ++j) denom += std::exp(logits.at(i, j) - mx);
    total += std::log(denom) + mx - logits.at(i, target_ids[i]);
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  if (grad_needed(logits)) {
    attach(out, {logits}, [n, v, target_ids](const Tensor& o) {
      Tensor& p = o.node->parents[0];
      p.ensure_grad();
      const double g = (*o.grad)[0] / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        double mx = p.at(i, 0);
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, p.at(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < v; ++j) denom += std::exp(p.at(i, j) - mx);
        for (std::size_t j = 0; j < v; ++j) {
          const double prob = std::exp(p.at(i, j) - mx) / denom;
          const double ind = (j == target_ids[i]) ? 1.0 : 0.0;
          (*p.grad)[i * v + j] += g * (prob - ind);
        }
      }
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids) {
  check_matrix(table, "gather_rows");
  const std::size_t v = table.shape[0], d = table.shape[1];
  for (std::size_t id : ids) {
    if (id >= v) {
      throw IdOutOfRange("gather_rows: index " + std::to_string(id) +
                         " >= table rows " + std::to_string(v));
    }
  }
  const std::size_t n = ids.size();
  Tensor out = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = table.at(ids[i], j);
  if (grad_needed(table)) {
    attach(out, {table}, [n, d, ids](const Tensor& o) {
      Tensor& p = o.node->parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
          (*p.grad)[ids[i] * d + j] += (*o.grad)[i * d + j];
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += x.at(i);
  Tensor out = Tensor::scalar(acc);
  if (grad_needed(x)) {
    attach(out, {x}, [](const Tensor& o) {
      Tensor& p = o.node->parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < p.numel(); ++i) (*p.grad)[i] += (*o.grad)[0];
    });
  }
  return out;
}

Tensor mean_all(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) acc += x.at(i);
  Tensor out = Tensor::scalar(acc / n);
  if (grad_needed(x)) {
    attach(out, {x}, [n](const Tensor& o) {
      Tensor& p = o.node->parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < p.numel(); ++i)
        (*p.grad)[i] += (*o.grad)[0] / n;
    });
  }
  return out;
}

Tensor row_sum(const Tensor& x) {
  check_matrix(x, "row_sum");
  const std::size_t n = x.shape[0], d = x.shape[1];
  Tensor out = Tensor::zeros({n});
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += x.at(i, j);
    out.at(i) = acc;
  }
  if (grad_needed(x)) {
    attach(out, {x}, [n, d](const Tensor& o) {
      Tensor& p = o.node->parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
          (*p.grad)[i * d + j] += (*o.grad)[i];
    });
  }
  return out;
}

Tensor col_mean(const Tensor& x) {
  check_matrix(x, "col_mean");
  const std::size_t n = x.shape[0], d = x.shape[1];
  Tensor out = Tensor::zeros({d});
  for (std::size_t j = 0; j < d; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x.at(i, j);
    out.at(j) = acc / static_cast<double>(n);
  }
  if (grad_needed(x)) {
    attach(out, {x}, [n, d](const Tensor& o) {
      Tensor& p = o.node->parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
          (*p.grad)[i * d + j] += (*o.grad)[j] / static_cast<double>(n);
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& blocks) {
  if (blocks.empty()) throw ShapeMismatch("concat_rows: no blocks");
  const std::size_t d = blocks[0].cols();
  std::size_t total = 0;
  bool needs = false;
  for (const Tensor& b : blocks) {
    check_matrix(b, "concat_rows");
    if (b.shape[1] != d) throw ShapeMismatch("concat_rows: width mismatch");
    total += b.shape[0];
    needs = needs || b.requires_grad;
  }
  Tensor out = Tensor::zeros({total, d});
  std::size_t row = 0;
  for (const Tensor& b : blocks) {
    for (std::size_t i = 0; i < b.shape[0]; ++i)
      for (std::size_t j = 0; j < d; ++j) out.at(row + i, j) = b.at(i, j);
    row += b.shape[0];
  }
  if (needs) {
    attach(out, blocks, [d](const Tensor& o) {
      std::size_t row2 = 0;
      for (Tensor& p : o.node->parents) {
        if (p.requires_grad) {
          p.ensure_grad();
          for (std::size_t i = 0; i < p.shape[0]; ++i)
            for (std::size_t j = 0; j < d; ++j)
              (*p.grad)[i * d + j] += (*o.grad)[(row2 + i) * d + j];
        }
        row2 += p.shape[0];
      }
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeMismatch("reshape: " + shape_str(x.shape) + " -> " +
                        shape_str(shape));
  }
  Tensor out = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < x.numel(); ++i) out.at(i) = x.at(i);
  if (grad_needed(x)) {
    attach(out, {x}, [](const Tensor& o) {
      Tensor& p = o.node->parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < o.numel(); ++i) (*p.grad)[i] += (*o.grad)[i];
    });
  }
  return out;
}

Tensor cosine_similarity(const Tensor& x, const Tensor& y) {
  if (x.rank() != 1 || y.rank() != 1 || x.shape[0] != y.shape[0] ||
      x.shape[0] == 0) {
    throw ShapeMismatch("cosine_similarity: need equal-length vectors, got " +
                        shape_str(x.shape) + " and " + shape_str(y.shape));
  }
  const std::size_t d = x.shape[0];
  double dot = 0.0, nx2 = 0.0, ny2 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    dot += x.at(i) * y.at(i);
    nx2 += x.at(i) * x.at(i);
    ny2 += y.at(i) * y.at(i);
  }
  const double nx = std::sqrt(nx2), ny = std::sqrt(ny2);
  if (nx < kZeroNormTol || ny < kZeroNormTol) {
    throw ZeroNormVector("cosine_similarity: zero-norm input");
  }
  const double c = dot / (nx * ny);
  Tensor out = Tensor::scalar(c);
  if (grad_needed(x, y)) {
    attach(out, {x, y}, [d, nx, ny, c](const Tensor& o) {
      Tensor& px = o.node->parents[0];
      Tensor& py = o.node->parents[1];
      const double g = (*o.grad)[0];
      if (px.requires_grad) {
        px.ensure_grad();
        for (std::size_t i = 0; i < d; ++i)
          (*px.grad)[i] +=
              g * (py.at(i) / (nx * ny) - c * px.at(i) / (nx * nx));
      }
      if (py.requires_grad) {
        py.ensure_grad();
        for (std::size_t i = 0; i < d; ++i)
          (*py.grad)[i] +=
              g * (px.at(i) / (nx * ny) - c * py.at(i) / (ny * ny));
      }
    });
  }
  return out;
}

std::vector<std::string> primitive_set() {
  return {
      "add",           "sub",
      "mul",           "add_scalar",
      "mul_scalar",    "neg",
      "abs",           "recip",
      "scale_by",      "sigmoid",
      "tanh",          "matmul",
      "matmul_nt",     "add_rowwise",
      "conv1d",        "layer_norm",
      "row_softmax",   "row_l2_normalize",
      "softmax_cross_entropy",
      "gather_rows",   "sum",
      "mean",          "row_sum",
      "col_mean",      "concat_rows",
      "reshape",       "cosine_similarity",
  };
}

}  // namespace wabert
