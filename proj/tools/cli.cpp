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

#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <thread>

#include <json.hpp>

#include "wabert/evalmetrics.hpp"
#include "wabert/gradcheck.hpp"
#include "wabert/ops.hpp"

namespace wabert::cli {

namespace fs = std::filesystem;

namespace {

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": '" + value +
                      "' is not an unsigned integer");
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": '" + value +
                      "' is not a number");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": '" + value +
                      "' is not an integer");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key " + key + ": '" + value +
                    "' is not a boolean");
}

losses::AlignMode parse_align_mode(const std::string& value) {
  if (value == "cos") return losses::AlignMode::Cosine;
  if (value == "infonce") return losses::AlignMode::InfoNce;
  throw ConfigError("align mode must be 'cos' or 'infonce', got '" + value +
                    "'");
}

std::string align_mode_name(losses::AlignMode mode) {
  return mode == losses::AlignMode::Cosine ? "cos" : "infonce";
}

struct KeyEntry {
  const char* key;
  const char* default_value;
  const char* description;
  std::function<void(AppConfig&, const std::string&)> apply;
};

const std::vector<KeyEntry>& key_table() {
  static const std::vector<KeyEntry> table = {
      {"seed", "7", "global RNG seed shared by every subsystem",
       [](AppConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); }},
      {"count", "500", "utterances generated by gen-data",
       [](AppConfig& c, const std::string& v) {
         c.count = parse_u64("count", v);
       }},
      {"synth.vocab", "32", "token vocabulary size (min 8)",
       [](AppConfig& c, const std::string& v) {
         c.synth.vocab = parse_u64("synth.vocab", v);
       }},
      {"synth.d_in", "16", "raw acoustic feature width",
       [](AppConfig& c, const std::string& v) {
         c.synth.d_in = parse_u64("synth.d_in", v);
       }},
      {"synth.frames_per_token_min", "3", "min frames emitted per token",
       [](AppConfig& c, const std::string& v) {
         c.synth.frames_per_token_min = parse_u64("synth.frames_per_token_min", v);
       }},
      {"synth.frames_per_token_max", "9", "max frames emitted per token",
       [](AppConfig& c, const std::string& v) {
         c.synth.frames_per_token_max = parse_u64("synth.frames_per_token_max", v);
       }},
      {"synth.raw_hop_ms", "5", "raw frame duration in ms",
       [](AppConfig& c, const std::string& v) {
         c.synth.raw_hop_ms = parse_double("synth.raw_hop_ms", v);
       }},
      {"synth.noise_sigma", "0.1", "iid gaussian noise added to prototypes",
       [](AppConfig& c, const std::string& v) {
         c.synth.noise_sigma = parse_double("synth.noise_sigma", v);
       }},
      {"synth.proto_shared", "0.7",
       "fraction of prototype energy shared across the vocabulary",
       [](AppConfig& c, const std::string& v) {
         c.synth.proto_shared = parse_double("synth.proto_shared", v);
       }},
      {"synth.tokens_per_utt_min", "4", "min tokens per utterance",
       [](AppConfig& c, const std::string& v) {
         c.synth.tokens_per_utt_min = parse_u64("synth.tokens_per_utt_min", v);
       }},
      {"synth.tokens_per_utt_max", "12", "max tokens per utterance",
       [](AppConfig& c, const std::string& v) {
         c.synth.tokens_per_utt_max = parse_u64("synth.tokens_per_utt_max", v);
       }},
      {"synth.label_margin", "2",
       "redraw utterances with 0 < |valence sum| < margin",
       [](AppConfig& c, const std::string& v) {
         c.synth.label_margin = parse_int("synth.label_margin", v);
       }},
      {"model.d_model", "32", "shared acoustic/linguistic width",
       [](AppConfig& c, const std::string& v) {
         c.model.d_model = parse_u64("model.d_model", v);
       }},
      {"model.d_ff", "64", "feed-forward hidden width",
       [](AppConfig& c, const std::string& v) {
         c.model.d_ff = parse_u64("model.d_ff", v);
       }},
      {"model.layers", "12", "linguistic layer count",
       [](AppConfig& c, const std::string& v) {
         c.model.layers = parse_u64("model.layers", v);
       }},
      {"model.pos_scale", "0.25", "scale of sinusoidal position encoding",
       [](AppConfig& c, const std::string& v) {
         c.model.pos_scale = parse_double("model.pos_scale", v);
       }},
      {"model.block_bias_sigma", "0.6",
       "bias scale of linguistic blocks (target anisotropy)",
       [](AppConfig& c, const std::string& v) {
         c.model.block_bias_sigma = parse_double("model.block_bias_sigma", v);
       }},
      {"model.graft_depth", "3", "linguistic layers replaced by the graft",
       [](AppConfig& c, const std::string& v) {
         c.model.graft_depth = parse_u64("model.graft_depth", v);
       }},
      {"model.pretrain_steps", "3000",
       "vocabulary-prediction warmup steps before freezing (0 disables)",
       [](AppConfig& c, const std::string& v) {
         c.model.pretrain_steps = parse_u64("model.pretrain_steps", v);
       }},
      {"loss.tau", "0.1", "InfoNCE temperature",
       [](AppConfig& c, const std::string& v) {
         c.train.loss.tau = parse_double("loss.tau", v);
       }},
      {"loss.align_mode", "infonce", "alignment loss: cos | infonce",
       [](AppConfig& c, const std::string& v) {
         c.train.loss.align_mode = parse_align_mode(v);
       }},
      {"loss.w_align", "1", "weight of the alignment loss",
       [](AppConfig& c, const std::string& v) {
         c.train.loss.w_align = parse_double("loss.w_align", v);
       }},
      {"loss.w_quantity", "1", "weight of the quantity loss",
       [](AppConfig& c, const std::string& v) {
         c.train.loss.w_quantity = parse_double("loss.w_quantity", v);
       }},
      {"loss.w_subword", "1", "weight of the subword loss",
       [](AppConfig& c, const std::string& v) {
         c.train.loss.w_subword = parse_double("loss.w_subword", v);
       }},
      {"loss.cosine_reduction", "sum", "cosine loss reduction: sum | mean",
       [](AppConfig& c, const std::string& v) {
         if (v == "sum") {
           c.train.loss.cosine_reduction = losses::Reduction::Sum;
         } else if (v == "mean") {
           c.train.loss.cosine_reduction = losses::Reduction::Mean;
         } else {
           throw ConfigError("loss.cosine_reduction must be sum or mean");
         }
       }},
      {"loss.cross_utterance_negatives", "false",
       "pool InfoNCE negatives across the batch",
       [](AppConfig& c, const std::string& v) {
         c.train.loss.cross_utterance_negatives =
             parse_bool("loss.cross_utterance_negatives", v);
       }},
      {"train.base_lr", "0.0005", "peak learning rate",
       [](AppConfig& c, const std::string& v) {
         c.train.base_lr = parse_double("train.base_lr", v);
       }},
      {"train.warmup_steps", "200", "linear warmup steps",
       [](AppConfig& c, const std::string& v) {
         c.train.warmup_steps = parse_u64("train.warmup_steps", v);
       }},
      {"train.total_steps", "0",
       "decay endpoint; 0 means epochs * batches_per_epoch",
       [](AppConfig& c, const std::string& v) {
         c.train.total_steps = parse_u64("train.total_steps", v);
       }},
      {"train.batch_size", "16", "utterances per optimizer step",
       [](AppConfig& c, const std::string& v) {
         c.train.batch_size = parse_u64("train.batch_size", v);
       }},
      {"train.epochs", "26", "passes over the training split",
       [](AppConfig& c, const std::string& v) {
         c.train.epochs = parse_u64("train.epochs", v);
       }},
      {"train.adam_beta1", "0.9", "Adam first-moment decay",
       [](AppConfig& c, const std::string& v) {
         c.train.adam_beta1 = parse_double("train.adam_beta1", v);
       }},
      {"train.adam_beta2", "0.999", "Adam second-moment decay",
       [](AppConfig& c, const std::string& v) {
         c.train.adam_beta2 = parse_double("train.adam_beta2", v);
       }},
      {"train.adam_eps", "1e-8", "Adam epsilon",
       [](AppConfig& c, const std::string& v) {
         c.train.adam_eps = parse_double("train.adam_eps", v);
       }},
      {"train.weight_decay", "0.01", "decoupled weight decay",
       [](AppConfig& c, const std::string& v) {
         c.train.weight_decay = parse_double("train.weight_decay", v);
       }},
      {"train.clip_norm", "5", "global gradient norm clip (0 disables)",
       [](AppConfig& c, const std::string& v) {
         c.train.clip_norm = parse_double("train.clip_norm", v);
       }},
      {"train.finetune_unfreeze_acoustic", "false",
       "also adapt the acoustic path during fine-tuning",
       [](AppConfig& c, const std::string& v) {
         c.train.finetune_unfreeze_acoustic =
             parse_bool("train.finetune_unfreeze_acoustic", v);
       }},
      {"cif.beta", "1", "CIF firing threshold",
       [](AppConfig& c, const std::string& v) {
         c.cif.beta = parse_double("cif.beta", v);
       }},
      {"cif.tail_policy", "fire_if_at_least_half",
       "residual handling: fire_if_at_least_half | always_fire | discard",
       [](AppConfig& c, const std::string& v) {
         if (v == "fire_if_at_least_half") {
           c.cif.tail_policy = cif::TailPolicy::FireIfAtLeastHalf;
         } else if (v == "always_fire") {
           c.cif.tail_policy = cif::TailPolicy::AlwaysFire;
         } else if (v == "discard") {
           c.cif.tail_policy = cif::TailPolicy::Discard;
         } else {
           throw ConfigError("unknown cif.tail_policy '" + v + "'");
         }
       }},
      {"cif.epsilon_residual", "1e-6", "exact-count resolution tolerance",
       [](AppConfig& c, const std::string& v) {
         c.cif.epsilon_residual = parse_double("cif.epsilon_residual", v);
       }},
      {"split.train", "0.8", "train fraction",
       [](AppConfig& c, const std::string& v) {
         c.split_train = parse_double("split.train", v);
       }},
      {"split.dev", "0.1", "dev fraction",
       [](AppConfig& c, const std::string& v) {
         c.split_dev = parse_double("split.dev", v);
       }},
      {"split.test", "0.1", "test fraction",
       [](AppConfig& c, const std::string& v) {
         c.split_test = parse_double("split.test", v);
       }},
  };
  return table;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoFailure("cannot open " + path.string() + " for writing");
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw IoFailure("write failed: " + path.string());
}

}  // namespace

void AppConfig::finalize() {
  synth.seed = seed;
  model.seed = seed;
  train.seed = seed;
  model.vocab = synth.vocab;
  model.d_in = synth.d_in;
  if (model.graft_depth != 3 && model.graft_depth != 6 &&
      model.graft_depth != 9 && model.graft_depth != 12) {
    throw ConfigError("model.graft_depth must be one of 3, 6, 9, 12");
  }
  if (train.loss.tau <= 0.0) throw ConfigError("loss.tau must be positive");
  if (synth.vocab < 8) throw ConfigError("synth.vocab must be at least 8");
  if (synth.frames_per_token_min == 0 ||
      synth.frames_per_token_min > synth.frames_per_token_max) {
    throw ConfigError("synth frames_per_token range is empty");
  }
  if (synth.tokens_per_utt_min == 0 ||
      synth.tokens_per_utt_min > synth.tokens_per_utt_max) {
    throw ConfigError("synth tokens_per_utt range is empty");
  }
  if (std::fabs(split_train + split_dev + split_test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
}

std::vector<ConfigKey> config_keys() {
  std::vector<ConfigKey> out;
  for (const KeyEntry& e : key_table()) {
    out.push_back({e.key, e.default_value, e.description});
  }
  return out;
}

void apply_override(AppConfig& config, const std::string& key,
                    const std::string& value) {
  for (const KeyEntry& e : key_table()) {
    if (key == e.key) {
      e.apply(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

namespace {

void flatten_json(const nlohmann::json& node, const std::string& prefix,
                  std::vector<std::pair<std::string, std::string>>& out) {
  if (node.is_object()) {
    for (auto it = node.begin(); it != node.end(); ++it) {
      const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
      flatten_json(it.value(), key, out);
    }
    return;
  }
  std::string value;
  if (node.is_string()) {
    value = node.get<std::string>();
  } else if (node.is_boolean()) {
    value = node.get<bool>() ? "true" : "false";
  } else if (node.is_number_unsigned()) {
    value = std::to_string(node.get<std::uint64_t>());
  } else if (node.is_number_integer()) {
    value = std::to_string(node.get<std::int64_t>());
  } else if (node.is_number_float()) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", node.get<double>());
    value = buf;
  } else {
    throw ConfigError("config value for '" + prefix + "' must be scalar");
  }
  out.emplace_back(prefix, value);
}

}  // namespace

void apply_config_file(AppConfig& config, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  nlohmann::json root = nlohmann::json::parse(is, nullptr, false);
  if (root.is_discarded() || !root.is_object()) {
    throw ConfigError("config file " + path + " is not a JSON object");
  }
  std::vector<std::pair<std::string, std::string>> pairs;
  flatten_json(root, "", pairs);
  for (const auto& [key, value] : pairs) apply_override(config, key, value);
}

AppConfig resolve_config(const CliOptions& options) {
  AppConfig config;
  if (!options.config_path.empty()) {
    apply_config_file(config, options.config_path);
  }
  for (const std::string& kv : options.overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
    }
    apply_override(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (options.seed) config.seed = *options.seed;
  if (options.align_mode)
    config.train.loss.align_mode = parse_align_mode(*options.align_mode);
  if (options.graft_depth)
    config.model.graft_depth = static_cast<std::size_t>(*options.graft_depth);
  if (options.tau) config.train.loss.tau = *options.tau;
  if (options.count) config.count = *options.count;
  config.finalize();
  return config;
}

namespace {

struct LoadedData {
  std::vector<synth::Utterance> corpus;
  synth::CorpusSplit split;
};

LoadedData load_data(const AppConfig& config, const std::string& data_dir) {
  if (data_dir.empty()) {
    throw ConfigError("this subcommand requires --data DIR");
  }
  LoadedData data;
  data.corpus = synth::load_corpus(data_dir);
  data.split = synth::split_corpus(data.corpus, config.split_train,
                                   config.split_dev, config.split_test,
                                   config.seed);
  return data;
}

const std::vector<synth::Utterance>& pick_split(const LoadedData& data,
                                                const std::string& name) {
  if (name == "train") return data.split.train;
  if (name == "dev") return data.split.dev;
  if (name == "test") return data.split.test;
  throw ConfigError("--split must be train, dev or test, got '" + name + "'");
}

models::GraftedModel build_model(const AppConfig& config) {
  models::GraftedModel model = models::GraftedModel::init(config.model);
  model.cif_config = config.cif;
  return model;
}

int cmd_gen_data(const AppConfig& config, const CliOptions& options) {
  synth::generate_corpus(config.synth, config.count, options.out_dir);
  std::cout << "wrote " << config.count << " utterances to " << options.out_dir
            << "\n";
  return 0;
}

int cmd_train_align(const AppConfig& config, const CliOptions& options) {
  LoadedData data = load_data(config, options.data_dir);
  models::GraftedModel model = build_model(config);
  train::TrainLog log = train::train_align(data.split.train, model, config.train);
  fs::create_directories(options.out_dir);
  models::save_checkpoint(
      (fs::path(options.out_dir) / "checkpoint.wabt").string(), model);
  write_text_file(fs::path(options.out_dir) / "train_log.csv", log.to_csv());
  const train::StepRow& last = log.rows.back();
  std::cout << "trained " << log.rows.size() << " steps ("
            << align_mode_name(config.train.loss.align_mode)
            << ", depth " << model.graft_depth << "); final total loss "
            << last.total << "\n";
  return 0;
}

int cmd_finetune(const AppConfig& config, const CliOptions& options) {
  if (options.checkpoint_path.empty()) {
    throw ConfigError("finetune requires --checkpoint PATH");
  }
  LoadedData data = load_data(config, options.data_dir);
  models::GraftedModel model = models::load_checkpoint(options.checkpoint_path);
  train::TrainLog log =
      train::finetune_downstream(data.split.train, model, config.train);
  fs::create_directories(options.out_dir);
  models::save_checkpoint(
      (fs::path(options.out_dir) / "classifier.wabt").string(), model);
  write_text_file(fs::path(options.out_dir) / "finetune_log.csv", log.to_csv());
  std::cout << "fine-tuned " << log.rows.size()
            << " steps; final loss " << log.rows.back().total << "\n";
  return 0;
}

int cmd_eval(const AppConfig& config, const CliOptions& options) {
  if (options.checkpoint_path.empty()) {
    throw ConfigError("eval requires --checkpoint PATH");
  }
  LoadedData data = load_data(config, options.data_dir);
  models::GraftedModel model = models::load_checkpoint(options.checkpoint_path);
  const train::EvalReport report =
      train::evaluate_checkpoint(pick_split(data, options.split_name), model);
  fs::create_directories(options.out_dir);
  write_text_file(fs::path(options.out_dir) / "metrics.json", report.to_json());
  std::cout << report.to_json();
  return 0;
}

int cmd_heatmap(const AppConfig& config, const CliOptions& options) {
  if (options.checkpoint_path.empty()) {
    throw ConfigError("heatmap requires --checkpoint PATH");
  }
  LoadedData data = load_data(config, options.data_dir);
  models::GraftedModel model = models::load_checkpoint(options.checkpoint_path);
  const auto& split = pick_split(data, options.split_name);
  if (options.utterance_index >= split.size()) {
    throw ConfigError("--utt " + std::to_string(options.utterance_index) +
                      " out of range for split of " +
                      std::to_string(split.size()));
  }
  const synth::Utterance& utt = split[options.utterance_index];
  cif::FrameSequence frames = models::encode_acoustic(
      utt.raw_frames, utt.raw_hop_ms, utt.utterance_id, model.acoustic);
  cif::AlignmentWeights alpha = cif::predict_weights(frames, model.predictor);
  cif::AlignmentWeights scaled =
      cif::scale_weights(alpha, utt.token_ids.size());
  cif::FiredAlignment fired =
      cif::integrate_and_fire(frames, scaled, model.cif_config);
  Tensor targets =
      model.linguistic.layer_output(utt.token_ids, model.graft_depth);
  const evalm::HeatmapMatrix heat =
      evalm::similarity_heatmap(fired.aligned, targets);

  fs::create_directories(options.out_dir);
  const std::string base = "heatmap_" + utt.utterance_id;
  write_text_file(fs::path(options.out_dir) / (base + ".csv"),
                  evalm::heatmap_to_csv(heat));
  write_text_file(fs::path(options.out_dir) / (base + ".pgm"),
                  evalm::heatmap_to_pgm(heat));
  std::cout << "diagonality " << evalm::diagonality_score(heat) << " for "
            << utt.utterance_id << "\n";
  return 0;
}

int cmd_pca(const AppConfig& config, const CliOptions& options) {
  if (options.checkpoint_path.empty()) {
    throw ConfigError("pca requires --checkpoint PATH");
  }
  LoadedData data = load_data(config, options.data_dir);
  models::GraftedModel model = models::load_checkpoint(options.checkpoint_path);
  const auto& split = pick_split(data, options.split_name);
  const std::size_t take = std::min<std::size_t>(split.size(), 24);
  if (take == 0) throw ConfigError("pca: split is empty");

  std::vector<Tensor> blocks;
  std::vector<std::string> tags;
  for (std::size_t u = 0; u < take; ++u) {
    const synth::Utterance& utt = split[u];
    cif::FrameSequence frames = models::encode_acoustic(
        utt.raw_frames, utt.raw_hop_ms, utt.utterance_id, model.acoustic);
    cif::AlignmentWeights alpha = cif::predict_weights(frames, model.predictor);
    cif::AlignmentWeights scaled =
        cif::scale_weights(alpha, utt.token_ids.size());
    cif::FiredAlignment fired =
        cif::integrate_and_fire(frames, scaled, model.cif_config);
    blocks.push_back(fired.aligned);
    for (std::size_t i = 0; i < fired.aligned.rows(); ++i)
      tags.push_back("aligned");
  }
  for (std::size_t u = 0; u < take; ++u) {
    const synth::Utterance& utt = split[u];
    blocks.push_back(
        model.linguistic.layer_output(utt.token_ids, model.graft_depth));
    for (std::size_t i = 0; i < utt.token_ids.size(); ++i)
      tags.push_back("linguistic");
  }
  const evalm::PcaProjection projection = evalm::pca_project(concat_rows(blocks));
  fs::create_directories(options.out_dir);
  write_text_file(fs::path(options.out_dir) / "pca.csv",
                  evalm::pca_to_csv(projection, tags));
  std::cout << "pca explained variance " << projection.explained_variance[0]
            << ", " << projection.explained_variance[1] << "\n";
  return 0;
}

int cmd_ablate(const AppConfig& config, const CliOptions& options) {
  LoadedData data = load_data(config, options.data_dir);

  struct Job {
    std::size_t depth;
    losses::AlignMode mode;
  };
  std::vector<Job> jobs;
  for (std::size_t depth : {3, 6, 9, 12}) {
    for (losses::AlignMode mode :
         {losses::AlignMode::Cosine, losses::AlignMode::InfoNce}) {
      jobs.push_back({depth, mode});
    }
  }
  std::vector<AblationRow> rows(jobs.size());

  std::size_t workers = 1;
  if (const char* env = std::getenv("WABERT_THREADS")) {
    workers = std::max<std::size_t>(1, std::strtoull(env, nullptr, 10));
  }
  workers = std::min(workers, jobs.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) return;
      const Job& job = jobs[j];
      AblationRow row;
      row.depth = job.depth;
      row.mode = align_mode_name(job.mode);
      const fs::path run_dir = fs::path(options.out_dir) /
                               ("depth" + std::to_string(job.depth) + "_" +
                                row.mode);
      try {
        AppConfig run_config = config;
        run_config.model.graft_depth = job.depth;
        run_config.train.loss.align_mode = job.mode;
        models::GraftedModel model = build_model(run_config);
        train::TrainLog log =
            train::train_align(data.split.train, model, run_config.train);
        fs::create_directories(run_dir);
        models::save_checkpoint((run_dir / "checkpoint.wabt").string(), model);
        write_text_file(run_dir / "train_log.csv", log.to_csv());
        train::EvalReport report =
            train::evaluate_checkpoint(data.split.dev, model);
        write_text_file(run_dir / "metrics.json", report.to_json());
        row.report = report;
      } catch (const std::exception& e) {
        std::cerr << "ablate depth " << job.depth << " " << row.mode
                  << " failed: " << e.what() << "\n";
      }
      rows[j] = std::move(row);
    }
  };

  std::vector<std::thread> pool;
  for (std::size_t w = 0; w + 1 < workers; ++w) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  const ComparisonTable table = compare_table(rows);
  fs::create_directories(options.out_dir);
  write_text_file(fs::path(options.out_dir) / "ablation_table.txt", table.text);
  write_text_file(fs::path(options.out_dir) / "ablation_table.csv", table.csv);
  std::cout << table.text;
  return 0;
}

int cmd_gradcheck(const AppConfig& config, const CliOptions& options);

}  // namespace

ComparisonTable compare_table(const std::vector<AblationRow>& rows) {
  if (rows.empty()) throw ConfigError("compare_table: no rows");

  auto fmt = [](const std::optional<double>& v, const char* spec) {
    if (!v) return std::string("n/a");
    char buf[40];
    std::snprintf(buf, sizeof(buf), spec, *v);
    return std::string(buf);
  };

  const char* header[11] = {"depth",   "mode",    "mae_ms",  "median_ms",
                            "acc_50",  "acc_100", "acc_500", "acc_1000",
                            "diagonality", "recall_weighted", "f1_weighted"};
  std::vector<std::vector<std::string>> cells;
  for (const AblationRow& row : rows) {
    std::vector<std::string> line;
    line.push_back(std::to_string(row.depth));
    line.push_back(row.mode);
    if (row.report) {
      const train::EvalReport& r = *row.report;
      line.push_back(fmt(r.mae_ms, "%.3f"));
      line.push_back(fmt(r.median_ms, "%.3f"));
      line.push_back(fmt(r.acc_50, "%.4f"));
      line.push_back(fmt(r.acc_100, "%.4f"));
      line.push_back(fmt(r.acc_500, "%.4f"));
      line.push_back(fmt(r.acc_1000, "%.4f"));
      line.push_back(fmt(r.diagonality, "%.4f"));
      line.push_back(fmt(r.recall_weighted, "%.4f"));
      line.push_back(fmt(r.f1_weighted, "%.4f"));
    } else {
      for (int i = 0; i < 9; ++i) line.push_back("n/a");
    }
    cells.push_back(std::move(line));
  }

  std::size_t width[11];
  for (int c = 0; c < 11; ++c) {
    width[c] = std::string(header[c]).size();
    for (const auto& line : cells) width[c] = std::max(width[c], line[c].size());
  }

  ComparisonTable table;
  for (int c = 0; c < 11; ++c) {
    table.text += std::string(header[c]);
    table.text += std::string(width[c] - std::string(header[c]).size(), ' ');
    table.text += (c + 1 < 11) ? "  " : "";
    table.csv += header[c];
    if (c + 1 < 11) table.csv += ",";
  }
  table.text += "\n";
  table.csv += "\n";
  for (const auto& line : cells) {
    for (int c = 0; c < 11; ++c) {
      table.text += line[c] + std::string(width[c] - line[c].size(), ' ');
      table.text += (c + 1 < 11) ? "  " : "";
      table.csv += line[c];
      if (c + 1 < 11) table.csv += ",";
    }
    table.text += "\n";
    table.csv += "\n";
  }
  return table;
}

namespace {

// Firing signature of the plain recurrence: which frame each token fires
// at, plus whether the tail fired. Used to exclude finite-difference
// probes that cross a firing boundary.
std::vector<std::size_t> firing_signature(const std::vector<double>& alpha,
                                          double beta) {
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

int cmd_gradcheck(const AppConfig& config, const CliOptions& options) {
  Rng rng(config.seed);
  std::vector<std::string> lines;
  bool all_ok = true;
  const double tol = 1e-4;

  auto random_matrix = [&rng](std::size_t n, std::size_t d) {
    Tensor t = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.next_gaussian();
    return t;
  };
  auto record = [&](const std::string& name, const GradReport& r) {
    char buf[160];
    const bool ok = r.max_abs_rel_error < tol;
    all_ok = all_ok && ok;
    std::snprintf(buf, sizeof(buf),
                  "%-34s max_rel_err %.3e over %zu coords (%zu excluded)  %s\n",
                  name.c_str(), r.max_abs_rel_error, r.coords_checked,
                  r.coords_excluded, ok ? "PASS" : "FAIL");
    lines.push_back(buf);
  };

  record("cosine_similarity",
         finite_diff_check(
             [](std::vector<Tensor>& p) {
               return cosine_similarity(p[0], p[1]);
             },
             {Tensor::from({1.0, 0.0}, {2}), Tensor::from({1.0, 1.0}, {2})},
             1e-5));
  record("cosine_align_loss",
         finite_diff_check(
             [](std::vector<Tensor>& p) {
               return losses::cosine_align_loss(p[0], p[1],
                                                losses::Reduction::Sum);
             },
             {random_matrix(4, 8), random_matrix(4, 8)}, 1e-5));
  record("info_nce",
         finite_diff_check(
             [&](std::vector<Tensor>& p) {
               return losses::info_nce(p[0], p[1], config.train.loss.tau);
             },
             {random_matrix(4, 8), random_matrix(4, 8)}, 1e-5));
  record("aligned_token_similarity_loss",
         finite_diff_check(
             [&](std::vector<Tensor>& p) {
               return losses::aligned_token_similarity_loss(
                   p[0], p[1], config.train.loss.tau);
             },
             {random_matrix(4, 8), random_matrix(4, 8)}, 1e-5));
  {
    std::vector<std::size_t> ids = {3, 1, 4, 1};
    record("subword_loss",
           finite_diff_check(
               [ids](std::vector<Tensor>& p) {
                 return losses::subword_loss(p[0], p[1], ids);
               },
               {random_matrix(4, 8), random_matrix(16, 8)}, 1e-5));
  }

  // Composed CIF objective on a tiny model.
  {
    models::ModelConfig tiny;
    tiny.d_in = 4;
    tiny.d_model = 8;
    tiny.d_ff = 16;
    tiny.vocab = 16;
    tiny.layers = 12;
    tiny.graft_depth = 3;
    tiny.seed = config.seed;
    models::GraftedModel model = models::GraftedModel::init(tiny);
    model.cif_config = config.cif;

    synth::Utterance utt;
    utt.utterance_id = "gradcheck";
    utt.token_ids = {1, 2, 3};
    utt.raw_hop_ms = 5.0;
    utt.raw_frames = random_matrix(16, 4);

    auto trainable = model.trainable_params();
    std::vector<Tensor> params;
    for (auto& [name, t] : trainable) params.push_back(*t);

    auto objective = [&](std::vector<Tensor>&) {
      return train::alignment_forward(utt, model, config.train.loss)
          .bundle.total;
    };
    auto signature_now = [&]() {
      cif::FrameSequence frames = models::encode_acoustic(
          utt.raw_frames, utt.raw_hop_ms, utt.utterance_id, model.acoustic);
      cif::AlignmentWeights alpha =
          cif::predict_weights(frames, model.predictor);
      cif::AlignmentWeights scaled =
          cif::scale_weights(alpha, utt.token_ids.size());
      std::vector<double> values(scaled.alpha.numel());
      for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = scaled.alpha.at(i);
      return firing_signature(values, model.cif_config.beta);
    };
    const double eps = 1e-5;
    auto exclude = [&](std::size_t pi, std::size_t ci) {
      Tensor& p = params[pi];
      const double saved = p.at(ci);
      const bool had_grad = p.requires_grad;
      p.set_requires_grad(false);
      p.at(ci) = saved + eps;
      const auto up = signature_now();
      p.at(ci) = saved - eps;
      const auto down = signature_now();
      p.at(ci) = saved;
      p.set_requires_grad(had_grad);
      return up != down;
    };
    record("cif_composed_total",
           finite_diff_check(objective, params, eps, exclude));
  }

  std::string text;
  for (const std::string& line : lines) text += line;
  fs::create_directories(options.out_dir);
  write_text_file(fs::path(options.out_dir) / "gradcheck.txt", text);
  std::cout << text;
  return all_ok ? 0 : 3;
}

}  // namespace

int run(const CliOptions& options) {
  try {
    const AppConfig config = resolve_config(options);
    if (options.subcommand == "gen-data") return cmd_gen_data(config, options);
    if (options.subcommand == "train-align")
      return cmd_train_align(config, options);
    if (options.subcommand == "finetune") return cmd_finetune(config, options);
    if (options.subcommand == "eval") return cmd_eval(config, options);
    if (options.subcommand == "heatmap") return cmd_heatmap(config, options);
    if (options.subcommand == "pca") return cmd_pca(config, options);
    if (options.subcommand == "ablate") return cmd_ablate(config, options);
    if (options.subcommand == "gradcheck")
      return cmd_gradcheck(config, options);
    throw ConfigError("unknown subcommand '" + options.subcommand + "'");
  } catch (const ConfigError& e) {
    std::cerr << "wabert: config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "wabert: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "wabert: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace wabert::cli
