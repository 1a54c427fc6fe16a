#pragma once

// The three feature extractors: a divided space-time attention video
// transformer over the sparse clip ("tsf.*"), a block-wise strided conv
// encoder over the dense clip ("dpc.*"), and a tiny transformer text encoder
// over the closed scene vocabulary ("text.*").

#include <string>
#include <vector>

#include "zsad/autodiff.hpp"
#include "zsad/param_store.hpp"
#include "zsad/rng.hpp"

namespace zsad {

struct TsfConfig {
  std::size_t frames = 8;
  std::size_t image_size = 32;
  std::size_t patch = 8;
  std::size_t dim = 64;
  std::size_t blocks = 2;
  std::size_t mlp_hidden = 128;

  std::size_t patches_per_frame() const { return (image_size / patch) * (image_size / patch); }
  std::size_t patch_dim() const { return patch * patch * 3; }
};

struct TsfOptions {
  /// Replace every softmax attention map by uniform weights.
  bool uniform_attention = false;
};

void init_tsf(ParamStore& store, const TsfConfig& cfg, Rng& rng);

/// [T, H, W, 3] -> [T, P, patch·patch·3], patches in row-major grid order,
/// each flattened (y, x, channel).
Tensor patchify(const Tensor& clip, std::size_t patch);

/// Per-frame features [T, dim] from pre-cut patches [T, P, patch_dim].
ad::Var encode_tsf_patches(ad::Tape& tape, const TsfConfig& cfg, const Tensor& patches, const TsfOptions& opts = {});
ad::Var encode_tsf(ad::Tape& tape, const TsfConfig& cfg, const Tensor& clip, const TsfOptions& opts = {});

struct DpcConfig {
  std::size_t frames = 30;
  std::size_t block_frames = 5;
  std::size_t image_size = 32;
  std::size_t channels1 = 16;
  std::size_t channels2 = 32;
  std::size_t latent = 64;
  /// Latents pool the last feature map over a grid×grid partition.
  std::size_t grid = 1;

  std::size_t blocks() const { return frames / block_frames; }
};

void init_dpc(ParamStore& store, const DpcConfig& cfg, Rng& rng);

/// Block b covers frames [b·bf, (b+1)·bf). Its input stacks the block's mean
/// frame and every frame minus that mean along channels: [H, W, 3 + 3·bf].
/// Static background lands in the first three channels, motion in the rest.
Tensor dpc_block_input(const Tensor& clip, std::size_t block, std::size_t block_frames);
inline std::size_t dpc_input_channels(std::size_t block_frames) { return 3 * (block_frames + 1); }

/// Output of the first two conv stages for every block.
std::vector<ad::Var> dpc_stage2(ad::Tape& tape, const DpcConfig& cfg, const Tensor& clip);
/// Last conv stage, pooling and normalization: unit latents [blocks, latent].
ad::Var dpc_latents_from_stage2(ad::Tape& tape, const DpcConfig& cfg, const std::vector<ad::Var>& stage2);
ad::Var encode_dpc(ad::Tape& tape, const DpcConfig& cfg, const Tensor& clip);

struct TextConfig {
  std::size_t dim = 64;
  std::size_t blocks = 2;
  std::size_t mlp_hidden = 128;
  std::size_t max_tokens = 16;
  std::size_t out_dim = 64;
};

/// Index 0 is the unknown-word token.
const std::vector<std::string>& text_vocabulary();
std::vector<std::size_t> tokenize(const std::string& text);

void init_text(ParamStore& store, const TextConfig& cfg, Rng& rng);
/// Unit embedding [out_dim].
ad::Var encode_text(ad::Tape& tape, const TextConfig& cfg, const std::string& text);

}  // namespace zsad
