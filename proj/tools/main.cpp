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

#include <CLI11.hpp>

#include "cli.hpp"

namespace {

std::string config_key_listing() {
  std::string out = "Config keys (via --config file or --set KEY=VALUE):\n";
  for (const wabert::cli::ConfigKey& key : wabert::cli::config_keys()) {
    out += "  " + key.key;
    if (key.key.size() < 34) out += std::string(34 - key.key.size(), ' ');
    out += " default " + key.default_value + "  " + key.description + "\n";
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wabert: CIF speech-text alignment with contrastive training"};
  app.require_subcommand(1);
  app.footer(config_key_listing());

  wabert::cli::CliOptions options;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", options.config_path, "JSON config file");
    cmd->add_option("--seed", options.seed, "global RNG seed");
    cmd->add_option("--out", options.out_dir, "output directory")
        ->capture_default_str();
    cmd->add_option("--set", options.overrides,
                    "config override KEY=VALUE (repeatable)")
        ->take_all();
    cmd->add_option("--align-mode", options.align_mode, "cos | infonce")
        ->check(CLI::IsMember({"cos", "infonce"}));
    cmd->add_option("--graft-depth", options.graft_depth, "3 | 6 | 9 | 12")
        ->check(CLI::IsMember({3, 6, 9, 12}));
    cmd->add_option("--tau", options.tau, "InfoNCE temperature");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  add_common(gen);
  gen->add_option("--count", options.count, "utterance count");

  CLI::App* train_cmd =
      app.add_subcommand("train-align", "train the CIF alignment");
  add_common(train_cmd);
  train_cmd->add_option("--data", options.data_dir, "corpus directory")
      ->required();

  CLI::App* finetune =
      app.add_subcommand("finetune", "fine-tune the 3-class head");
  add_common(finetune);
  finetune->add_option("--data", options.data_dir, "corpus directory")
      ->required();
  finetune->add_option("--checkpoint", options.checkpoint_path,
                       "alignment checkpoint")->required();

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd);
  eval_cmd->add_option("--data", options.data_dir, "corpus directory")
      ->required();
  eval_cmd->add_option("--checkpoint", options.checkpoint_path, "checkpoint")
      ->required();
  eval_cmd->add_option("--split", options.split_name, "train | dev | test")
      ->capture_default_str();

  CLI::App* heatmap = app.add_subcommand(
      "heatmap", "similarity heatmap for one utterance (CSV + PGM)");
  add_common(heatmap);
  heatmap->add_option("--data", options.data_dir, "corpus directory")
      ->required();
  heatmap->add_option("--checkpoint", options.checkpoint_path, "checkpoint")
      ->required();
  heatmap->add_option("--split", options.split_name, "train | dev | test")
      ->capture_default_str();
  heatmap->add_option("--utt", options.utterance_index,
                      "utterance index within the split")
      ->capture_default_str();

  CLI::App* pca = app.add_subcommand(
      "pca", "project aligned and linguistic tokens to 2-D");
  add_common(pca);
  pca->add_option("--data", options.data_dir, "corpus directory")->required();
  pca->add_option("--checkpoint", options.checkpoint_path, "checkpoint")
      ->required();
  pca->add_option("--split", options.split_name, "train | dev | test")
      ->capture_default_str();

  CLI::App* ablate = app.add_subcommand(
      "ablate", "train + eval over depths {3,6,9,12} x {cos,infonce}");
  add_common(ablate);
  ablate->add_option("--data", options.data_dir, "corpus directory")
      ->required();

  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference checks of every training objective");
  add_common(gradcheck);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    // CLI11 returns 0 for --help; anything else is a usage error.
    return code == 0 ? 0 : 2;
  }

  for (CLI::App* sub : app.get_subcommands()) {
    options.subcommand = sub->get_name();
  }
  return wabert::cli::run(options);
}
