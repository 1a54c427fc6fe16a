#pragma once

// Scene context from a single frame ("ctx.*") and the β-gated residual that
// folds it into the text embedding ("gate.*").

#include "zsad/autodiff.hpp"
#include "zsad/param_store.hpp"
#include "zsad/rng.hpp"

namespace zsad {

struct ContextConfig {
  std::size_t image_size = 32;
  std::size_t channels1 = 8;
  std::size_t channels2 = 16;
  std::size_t dim = 32;
};

void init_context(ParamStore& store, const ContextConfig& cfg, Rng& rng);
/// frame [H, W, 3] -> context vector [dim].
ad::Var context_vector(ad::Tape& tape, const ContextConfig& cfg, const Tensor& frame);

/// Frame handed to the context network: frames/2, i.e. index 4 of an 8-frame clip.
inline std::size_t mid_frame_index(std::size_t frames) { return frames / 2; }

struct GateConfig {
  std::size_t text_dim = 64;
  std::size_t context_dim = 32;
};

void init_gate(ParamStore& store, const GateConfig& cfg, Rng& rng);

struct GateOutput {
  ad::Var residual;  // r = MLP([t, u])
  ad::Var pre_norm;  // t + tanh(β)·r
  ad::Var fused;     // unit-norm t̃
};

/// t [d] or [B, d], u [dc] or [B, dc] with matching leading shape.
GateOutput gate_fuse(ad::Tape& tape, const ad::Var& t, const ad::Var& u);

}  // namespace zsad
