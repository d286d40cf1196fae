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

#include "wabert/cif.hpp"
#include "wabert/models.hpp"
#include "wabert/synthdata.hpp"
#include "wabert/train.hpp"

namespace wabert::cli {

// Resolved configuration for every subsystem, assembled from defaults, an
// optional config file, --set overrides, then the dedicated flags.
struct AppConfig {
  std::uint64_t seed = 7;
  std::size_t count = 500;  // gen-data utterance count
  synth::SynthConfig synth;
  models::ModelConfig model;
  train::TrainConfig train;
  cif::CifConfig cif;
  double split_train = 0.8;
  double split_dev = 0.1;
  double split_test = 0.1;

  // Propagates the shared fields (seed, vocab, d_in) and validates.
  void finalize();
};

struct ConfigKey {
  std::string key;
  std::string default_value;
  std::string description;
};

// Every recognized config key with its default, for --help and validation.
std::vector<ConfigKey> config_keys();

// Applies "key=value"; throws ConfigError for unknown keys or bad values.
void apply_override(AppConfig& config, const std::string& key,
                    const std::string& value);

// Loads a JSON config file (nested sections or flat dotted keys).
void apply_config_file(AppConfig& config, const std::string& path);

struct CliOptions {
  std::string subcommand;
  std::string config_path;
  std::vector<std::string> overrides;  // KEY=VALUE strings
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> align_mode;  // cos | infonce
  std::optional<int> graft_depth;
  std::optional<double> tau;
  std::optional<std::size_t> count;
  std::string data_dir;
  std::string checkpoint_path;
  std::string split_name = "dev";
  std::size_t utterance_index = 0;
};

AppConfig resolve_config(const CliOptions& options);

// One ablation result row; report missing when the run failed.
struct AblationRow {
  std::size_t depth = 0;
  std::string mode;
  std::optional<train::EvalReport> report;
};

struct ComparisonTable {
  std::string text;  // aligned columns
  std::string csv;
};

ComparisonTable compare_table(const std::vector<AblationRow>& rows);

// Executes one subcommand; returns the process exit code
// (0 ok, 2 config error, 3 runtime failure).
int run(const CliOptions& options);

}  // namespace wabert::cli
