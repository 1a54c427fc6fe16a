#pragma once

// Flat key=value run configuration. Blank lines and lines starting with '#'
// are ignored; unknown keys and malformed values are errors.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "zsad/inference.hpp"
#include "zsad/model.hpp"

namespace zsad {

struct Config {
  // corpus
  std::string corpus_dir = "corpus";
  std::uint64_t seed = 7;
  double fps = 10.0;
  std::size_t frame_size = 64;
  std::size_t train_videos_per_scene = 6;
  double train_video_length_s = 4.0;
  double train_clip_s = 3.0;
  std::size_t eval_normal_per_scene = 1;
  std::size_t eval_anomaly_per_scene = 2;
  double eval_video_length_s = 16.0;
  double anomaly_duration_s = 5.0;

  // model
  std::size_t tsf_size = 32;
  std::size_t tsf_frames = 8;
  std::size_t patch = 8;
  std::size_t tsf_dim = 64;
  std::size_t tsf_blocks = 2;
  std::size_t dpc_size = 32;
  std::size_t dpc_frames = 30;
  std::size_t dpc_block_frames = 5;
  std::size_t latent_dim = 64;
  std::size_t embed_dim = 64;
  std::size_t context_dim = 32;
  std::size_t proj_hidden = 256;
  std::size_t proj_blocks = 4;
  double dropout = 0.1;
  std::size_t gru_hidden = 64;
  std::size_t horizons = 3;
  bool use_dpc = true;
  double gamma = 0.5;
  bool use_residual_mlp = true;
  bool use_ln_gate = true;
  bool context_to_visual = false;
  std::string freeze_profile = "paper";

  // training
  double alpha = 0.5;
  double tau = 0.07;
  double learning_rate = 1e-3;
  std::size_t batch_size = 8;
  std::size_t steps = 300;
  std::size_t warmup_steps = 30;
  double warmup_tau = 0.1;
  std::size_t neg_cap = 64;
  bool symmetric_align = false;

  // scoring and evaluation
  double lambda = 0.7;
  double window_s = 3.0;
  double stride_s = 1.0;
  double min_duration_s = 0.5;
  double target_fpr = 0.05;
  bool debug_oracle_scores = false;

  ModelConfig model_config() const;
  ScoringConfig scoring() const;
};

/// Sets one key from its text value.
void apply_setting(Config& cfg, const std::string& key, const std::string& value);
/// Every key with its current value, in documentation order.
std::vector<std::pair<std::string, std::string>> config_items(const Config& cfg);
/// One-line description of each key, same order as config_items.
std::vector<std::pair<std::string, std::string>> config_docs();

Config parse_config(const std::string& text, const std::string& origin = "<string>");
Config load_config(const std::filesystem::path& path);
std::string render_config(const Config& cfg);

}  // namespace zsad
