#pragma once

// Run configuration: a flat `key = value` text file, `#` starts a comment.

#include "acdiff/data.hpp"
#include "acdiff/diffusion.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace acdiff {

struct RunConfig {
  DatasetKind dataset = DatasetKind::two_moons_2d;
  std::string dataset_path;  // cifar10 only
  int num_classes = 5;
  int data_dim = 2;
  int samples_per_class = 200;

  int t_min = 20;
  int t_max = 200;
  double beta_min = 1e-4;
  double beta_max = 0.1;
  ScheduleKind schedule = ScheduleKind::linear;
  int bins = 32;

  int d_emb = 64;
  int hidden = 32;            // fusion heads
  int denoiser_hidden = 128;  // H_d
  int time_dim = 64;          // D_t

  double lr = 1e-3;
  int batch_size = 64;
  int steps = 5000;
  Mode train_mode = Mode::adaptive;
  std::uint64_t seed = 0;

  /// Throws ContractError naming the offending key.
  void validate() const;
  ModelConfig model_config() const;

  /// Canonical text: every key in a fixed order, doubles with 17 significant digits.
  std::string serialize() const;
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);
};

/// Training (seed = config.seed) or held-out (seed = config.seed + 1) data.
std::vector<LabeledSample> load_dataset(const RunConfig& config, std::uint64_t seed);

}  // namespace acdiff
