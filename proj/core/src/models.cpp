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

#include "wabert/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "wabert/ops.hpp"
#include "wabert/serialize.hpp"

namespace wabert::models {

namespace {

Tensor gaussian_tensor(std::vector<std::size_t> shape, double sigma, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i)
    t.at(i) = sigma * rng.next_gaussian();
  return t;
}

// Sinusoidal positions scaled down so token identity stays the dominant
// component of the targets.
Tensor position_encoding(std::size_t n, std::size_t d, double scale) {
  Tensor pos = Tensor::zeros({n, d});
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t j = 0; j < d; ++j) {
      const double exponent =
          static_cast<double>(2 * (j / 2)) / static_cast<double>(d);
      const double angle =
          static_cast<double>(p) / std::pow(10000.0, exponent);
      pos.at(p, j) = scale * ((j % 2 == 0) ? std::sin(angle) : std::cos(angle));
    }
  }
  return pos;
}

}  // namespace

FfnBlock FfnBlock::init(std::size_t d, std::size_t d_ff, double bias_sigma,
                        Rng& rng) {
  FfnBlock b;
  b.w1 = gaussian_tensor({d, d_ff}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  // Small pre-activation bias so the tanh stays unsaturated; the shared
  // component is injected after it, on the residual path, where it shifts
  // every row identically without destroying token information.
  b.b1 = gaussian_tensor({d_ff}, std::min(bias_sigma, 0.1), rng);
  b.w2 = gaussian_tensor({d_ff, d}, 1.0 / std::sqrt(static_cast<double>(d_ff)), rng);
  b.b2 = gaussian_tensor({d}, bias_sigma, rng);
  b.ln_gain = Tensor::full({d}, 1.0);
  b.ln_bias = Tensor::zeros({d});
  return b;
}

Tensor FfnBlock::forward(const Tensor& x) const {
  Tensor h = tanh_act(add_rowwise(matmul(x, w1), b1));
  Tensor y = add(x, add_rowwise(matmul(h, w2), b2));
  return layer_norm(y, ln_gain, ln_bias);
}

std::vector<std::pair<std::string, Tensor*>> FfnBlock::params(
    const std::string& prefix) {
  return {{prefix + ".w1", &w1},           {prefix + ".b1", &b1},
          {prefix + ".w2", &w2},           {prefix + ".b2", &b2},
          {prefix + ".ln_gain", &ln_gain}, {prefix + ".ln_bias", &ln_bias}};
}

AcousticEncoder AcousticEncoder::init(const ModelConfig& cfg, Rng& rng) {
  AcousticEncoder e;
  e.d_in = cfg.d_in;
  e.d_a = cfg.d_model;
  e.conv1_w = gaussian_tensor({3, cfg.d_in, cfg.d_model},
                              1.0 / std::sqrt(3.0 * cfg.d_in), rng);
  e.conv1_b = Tensor::zeros({cfg.d_model});
  e.conv2_w = gaussian_tensor({3, cfg.d_model, cfg.d_model},
                              1.0 / std::sqrt(3.0 * cfg.d_model), rng);
  e.conv2_b = Tensor::zeros({cfg.d_model});
  e.ffn1 = FfnBlock::init(cfg.d_model, cfg.d_ff, 0.0, rng);
  e.ffn2 = FfnBlock::init(cfg.d_model, cfg.d_ff, 0.0, rng);
  for (auto& [name, t] : e.params()) t->set_requires_grad(true);
  return e;
}

std::vector<std::pair<std::string, Tensor*>> AcousticEncoder::params() {
  std::vector<std::pair<std::string, Tensor*>> out = {
      {"acoustic.conv1_w", &conv1_w},
      {"acoustic.conv1_b", &conv1_b},
      {"acoustic.conv2_w", &conv2_w},
      {"acoustic.conv2_b", &conv2_b},
  };
  for (auto& p : ffn1.params("acoustic.ffn1")) out.push_back(p);
  for (auto& p : ffn2.params("acoustic.ffn2")) out.push_back(p);
  return out;
}

cif::FrameSequence encode_acoustic(const Tensor& raw, double raw_hop_ms,
                                   const std::string& utterance_id,
                                   const AcousticEncoder& encoder) {
  if (raw.rank() != 2 || raw.shape[1] != encoder.d_in) {
    throw ShapeMismatch("encode_acoustic: raw " + shape_str(raw.shape) +
                        " vs d_in " + std::to_string(encoder.d_in));
  }
  if (raw.shape[0] < 4) {
    throw TooShortInput("encode_acoustic: need at least 4 raw frames, got " +
                        std::to_string(raw.shape[0]));
  }
  Tensor h = tanh_act(conv1d(raw, encoder.conv1_w, encoder.conv1_b, 2, 1));
  h = tanh_act(conv1d(h, encoder.conv2_w, encoder.conv2_b, 2, 1));
  h = encoder.ffn1.forward(h);
  h = encoder.ffn2.forward(h);
  cif::FrameSequence out;
  out.features = h;
  out.hop_ms = 4.0 * raw_hop_ms;
  out.utterance_id = utterance_id;
  return out;
}

LinguisticModel LinguisticModel::build(const ModelConfig& cfg, Rng& rng) {
  LinguisticModel m;
  m.d_l = cfg.d_model;
  m.vocab = cfg.vocab;
  m.pos_scale = cfg.pos_scale;
  m.embedding = gaussian_tensor({cfg.vocab, cfg.d_model}, 1.0, rng);
  m.blocks.reserve(cfg.layers);
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    m.blocks.push_back(
        FfnBlock::init(cfg.d_model, cfg.d_ff, cfg.block_bias_sigma, rng));
  }

  if (cfg.pretrain_steps > 0) {
    // Vocabulary-prediction warmup on random id streams before freezing:
    // the upper half of the stack learns to decode every deep state back
    // to its token id, the property grafting relies on. Lower blocks keep
    // their init statistics so mid-depth states stay anisotropic. Masked
    // prediction would teach nothing here, as the ids are drawn iid.
    for (auto& [name, t] : m.params()) t->set_requires_grad(true);
    std::vector<Tensor> params;
    for (std::size_t i = cfg.layers / 2; i < cfg.layers; ++i) {
      for (auto& [name, t] : m.blocks[i].params("warmup")) params.push_back(*t);
    }
    std::vector<std::vector<double>> mom(params.size()), vel(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      mom[i].assign(params[i].numel(), 0.0);
      vel[i].assign(params[i].numel(), 0.0);
    }
    const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (std::size_t step = 1; step <= cfg.pretrain_steps; ++step) {
      const std::size_t n = 8;
      std::vector<std::size_t> ids(n);
      for (std::size_t i = 0; i < n; ++i) {
        ids[i] = static_cast<std::size_t>(
            rng.next_int(0, static_cast<std::int64_t>(cfg.vocab) - 1));
      }
      for (Tensor& p : params) p.zero_grad();
      Tensor states = m.run_layers(m.embed(ids), 0, m.blocks.size());
      Tensor loss =
          softmax_cross_entropy(matmul_nt(states, m.embedding), ids);
      backward(loss);
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
      for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t j = 0; j < params[i].numel(); ++j) {
          const double g = (*params[i].grad)[j];
          mom[i][j] = b1 * mom[i][j] + (1.0 - b1) * g;
          vel[i][j] = b2 * vel[i][j] + (1.0 - b2) * g * g;
          params[i].at(j) -=
              lr * (mom[i][j] / c1) / (std::sqrt(vel[i][j] / c2) + eps);
        }
      }
    }
  }

  for (auto& [name, t] : m.params()) t->set_requires_grad(false);
  m.frozen = true;
  return m;
}

Tensor LinguisticModel::embed(const std::vector<std::size_t>& ids,
                              const std::vector<std::size_t>& masked) const {
  for (std::size_t id : ids) {
    if (id >= vocab) {
      throw IdOutOfRange("embed: token id " + std::to_string(id) +
                         " >= vocab " + std::to_string(vocab));
    }
  }
  Tensor rows = gather_rows(embedding, ids);
  if (!masked.empty()) {
    Tensor keep = Tensor::full({ids.size(), d_l}, 1.0);
    for (std::size_t pos : masked)
      for (std::size_t j = 0; j < d_l; ++j) keep.at(pos, j) = 0.0;
    rows = mul(rows, keep);
  }
  return add(rows, position_encoding(ids.size(), d_l, pos_scale));
}

Tensor LinguisticModel::run_layers(const Tensor& x, std::size_t from,
                                   std::size_t to) const {
  if (from > to || to > blocks.size()) {
    throw DepthOutOfRange("run_layers: [" + std::to_string(from) + ", " +
                          std::to_string(to) + "] of " +
                          std::to_string(blocks.size()));
  }
  Tensor h = x;
  for (std::size_t i = from; i < to; ++i) h = blocks[i].forward(h);
  return h;
}

Tensor LinguisticModel::layer_output(const std::vector<std::size_t>& ids,
                                     std::size_t depth) const {
  if (depth > blocks.size()) {
    throw DepthOutOfRange("layer_output: depth " + std::to_string(depth) +
                          " > " + std::to_string(blocks.size()));
  }
  return run_layers(embed(ids), 0, depth);
}

Tensor LinguisticModel::head_logits(const Tensor& states) const {
  if (states.rank() != 2 || states.shape[1] != d_l) {
    throw DimensionMismatch("head_logits: states " + shape_str(states.shape) +
                            " vs d_l " + std::to_string(d_l));
  }
  return matmul_nt(states, embedding);
}

std::vector<std::pair<std::string, Tensor*>> LinguisticModel::params() {
  std::vector<std::pair<std::string, Tensor*>> out = {
      {"linguistic.embedding", &embedding}};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    for (auto& p : blocks[i].params("linguistic.block" + std::to_string(i)))
      out.push_back(p);
  }
  return out;
}

std::uint64_t params_checksum(
    const std::vector<std::pair<std::string, Tensor*>>& params) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  auto mix = [&h](const void* bytes, std::size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, t] : params) {
    mix(name.data(), name.size());
    mix(t->data->data(), t->numel() * sizeof(double));
  }
  return h;
}

std::uint64_t LinguisticModel::checksum() const {
  return params_checksum(const_cast<LinguisticModel*>(this)->params());
}

TokenSequence linguistic_targets(const LinguisticModel& model,
                                 const std::vector<std::size_t>& token_ids,
                                 std::size_t depth) {
  TokenSequence seq;
  seq.states = model.layer_output(token_ids, depth);
  seq.token_ids = token_ids;
  return seq;
}

ClassifierHead ClassifierHead::init(std::size_t d_l, Rng& rng) {
  ClassifierHead h;
  h.w = gaussian_tensor({d_l, 3}, 1.0 / std::sqrt(static_cast<double>(d_l)), rng);
  h.b = Tensor::zeros({3});
  for (auto& [name, t] : h.params()) t->set_requires_grad(true);
  return h;
}

Tensor ClassifierHead::forward(const Tensor& top_states) const {
  Tensor pooled = reshape(col_mean(top_states), {1, top_states.cols()});
  return add_rowwise(matmul(pooled, w), b);
}

std::vector<std::pair<std::string, Tensor*>> ClassifierHead::params() {
  return {{"classifier.w", &w}, {"classifier.b", &b}};
}

GraftedModel GraftedModel::init(const ModelConfig& cfg) {
  if (cfg.graft_depth != 3 && cfg.graft_depth != 6 && cfg.graft_depth != 9 &&
      cfg.graft_depth != 12) {
    throw DepthOutOfRange("graft_depth must be one of {3,6,9,12}, got " +
                          std::to_string(cfg.graft_depth));
  }
  Rng rng(cfg.seed);
  GraftedModel m;
  m.config = cfg;
  m.graft_depth = cfg.graft_depth;
  m.acoustic = AcousticEncoder::init(cfg, rng);
  m.predictor = cif::WeightPredictor::init(cfg.d_model, rng);
  m.linguistic = LinguisticModel::build(cfg, rng);
  return m;
}

std::vector<std::pair<std::string, Tensor*>> GraftedModel::trainable_params() {
  std::vector<std::pair<std::string, Tensor*>> out = acoustic.params();
  for (auto& p : predictor.params()) out.push_back(p);
  if (classifier) {
    for (auto& p : classifier->params()) out.push_back(p);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor*>> GraftedModel::all_params() {
  std::vector<std::pair<std::string, Tensor*>> out = trainable_params();
  for (auto& p : linguistic.params()) out.push_back(p);
  return out;
}

GraftOutput graft_forward(const Tensor& a_hat, const GraftedModel& model) {
  if (a_hat.rank() != 2 || a_hat.shape[1] != model.linguistic.d_l) {
    throw DimensionMismatch("graft_forward: aligned width " +
                            std::to_string(a_hat.cols()) + " vs d_l " +
                            std::to_string(model.linguistic.d_l));
  }
  GraftOutput out;
  out.top_states = model.linguistic.run_layers(a_hat, model.graft_depth,
                                               model.linguistic.blocks.size());
  out.logits = model.linguistic.head_logits(out.top_states);
  return out;
}

InferenceResult inference_forward(const Tensor& raw, double raw_hop_ms,
                                  const std::string& utterance_id,
                                  const GraftedModel& model) {
  cif::FrameSequence frames =
      encode_acoustic(raw, raw_hop_ms, utterance_id, model.acoustic);
  cif::AlignmentWeights alpha = cif::predict_weights(frames, model.predictor);
  InferenceResult result;
  result.fired = cif::integrate_and_fire(frames, alpha, model.cif_config);
  GraftOutput g = graft_forward(result.fired.aligned, model);
  result.logits = g.logits;
  const std::size_t n = g.logits.rows(), v = g.logits.cols();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < v; ++j) {
      if (g.logits.at(i, j) > g.logits.at(i, best)) best = j;
    }
    result.token_ids.push_back(best);
  }
  if (model.classifier) {
    Tensor probs = row_softmax(model.classifier->forward(g.top_states));
    result.class_probs = {probs.at(0, 0), probs.at(0, 1), probs.at(0, 2)};
  }
  return result;
}

std::vector<std::size_t> top5_candidates(const Tensor& logits,
                                         std::size_t row) {
  if (logits.rank() != 2 || logits.shape[1] < 5) {
    throw ShapeMismatch("top5_candidates: need vocab >= 5, got " +
                        shape_str(logits.shape));
  }
  const std::size_t v = logits.shape[1];
  std::vector<std::size_t> order(v);
  for (std::size_t j = 0; j < v; ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     const double la = logits.at(row, a), lb = logits.at(row, b);
                     return la != lb ? la > lb : a < b;
                   });
  order.resize(5);
  return order;
}

namespace {

constexpr char kCheckpointMagic[4] = {'W', 'A', 'B', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw CorruptFile("checkpoint truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const GraftedModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoFailure("cannot open " + path + " for writing");

  nlohmann::json header;
  header["d_in"] = model.config.d_in;
  header["d_model"] = model.config.d_model;
  header["d_ff"] = model.config.d_ff;
  header["vocab"] = model.config.vocab;
  header["layers"] = model.config.layers;
  header["pos_scale"] = model.config.pos_scale;
  header["block_bias_sigma"] = model.config.block_bias_sigma;
  header["graft_depth"] = model.graft_depth;
  header["pretrain_steps"] = model.config.pretrain_steps;
  header["seed"] = model.config.seed;
  header["beta"] = model.cif_config.beta;
  header["tail_policy"] = static_cast<int>(model.cif_config.tail_policy);
  header["epsilon_residual"] = model.cif_config.epsilon_residual;
  header["has_classifier"] = model.classifier.has_value();
  const std::string text = header.dump();

  os.write(kCheckpointMagic, 4);
  write_u32(os, kCheckpointVersion);
  write_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));

  auto params = const_cast<GraftedModel&>(model).all_params();
  write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(os, *tensor);
  }
  if (!os) throw IoFailure("checkpoint write failed: " + path);
}

GraftedModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoFailure("cannot open " + path);

  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw CorruptFile("bad checkpoint magic in " + path);
  }
  const std::uint32_t version = read_u32(is);
  if (version != kCheckpointVersion) {
    throw CorruptFile("unsupported checkpoint version " +
                      std::to_string(version));
  }
  const std::uint32_t header_len = read_u32(is);
  std::string text(header_len, '\0');
  is.read(text.data(), header_len);
  if (!is) throw CorruptFile("checkpoint header truncated");

  nlohmann::json header = nlohmann::json::parse(text, nullptr, false);
  if (header.is_discarded()) throw CorruptFile("checkpoint header not valid");

  ModelConfig cfg;
  cfg.d_in = header.at("d_in").get<std::size_t>();
  cfg.d_model = header.at("d_model").get<std::size_t>();
  cfg.d_ff = header.at("d_ff").get<std::size_t>();
  cfg.vocab = header.at("vocab").get<std::size_t>();
  cfg.layers = header.at("layers").get<std::size_t>();
  cfg.pos_scale = header.at("pos_scale").get<double>();
  cfg.block_bias_sigma = header.at("block_bias_sigma").get<double>();
  cfg.graft_depth = header.at("graft_depth").get<std::size_t>();
  cfg.seed = header.at("seed").get<std::uint64_t>();

  // Parameters are fully overwritten below, so skip the warmup on rebuild.
  ModelConfig build_cfg = cfg;
  build_cfg.pretrain_steps = 0;
  GraftedModel model = GraftedModel::init(build_cfg);
  model.config.pretrain_steps = header.at("pretrain_steps").get<std::size_t>();
  model.cif_config.beta = header.at("beta").get<double>();
  model.cif_config.tail_policy =
      static_cast<cif::TailPolicy>(header.at("tail_policy").get<int>());
  model.cif_config.epsilon_residual =
      header.at("epsilon_residual").get<double>();
  if (header.at("has_classifier").get<bool>()) {
    Rng rng(cfg.seed + 1);
    model.classifier = ClassifierHead::init(cfg.d_model, rng);
  }

  const std::uint32_t count = read_u32(is);
  auto params = model.all_params();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw CorruptFile("checkpoint parameter name truncated");
    Tensor loaded = read_tensor(is);
    bool found = false;
    for (auto& [pname, tensor] : params) {
      if (pname == name) {
        if (tensor->shape != loaded.shape) {
          throw CorruptFile("checkpoint parameter " + name + " has shape " +
                            shape_str(loaded.shape) + ", expected " +
                            shape_str(tensor->shape));
        }
        *tensor->data = *loaded.data;
        found = true;
        break;
      }
    }
    if (!found) throw CorruptFile("unknown checkpoint parameter " + name);
  }
  return model;
}

}  // namespace wabert::models
