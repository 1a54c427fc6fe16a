#pragma once

// Recurrent aggregator over block latents ("gru.*") and the future-latent
// prediction heads ("pred.*").
//
//   z  = σ(W_z [x, h] + b_z)
//   r  = σ(W_r [x, h] + b_r)
//   ĥ  = tanh(W_h [x, r⊙h] + b_h)
//   h' = (1 − z)⊙h + z⊙ĥ
//
// Predictions: ẑ_k = normalize(Head_k(GELU(Trunk c))) for k = 1..K.

#include <optional>
#include <vector>

#include "zsad/autodiff.hpp"
#include "zsad/param_store.hpp"
#include "zsad/rng.hpp"

namespace zsad {

struct PredictorConfig {
  std::size_t latent = 64;
  std::size_t hidden = 64;
  std::size_t trunk = 64;
  std::size_t horizons = 3;
};

void init_predictor(ParamStore& store, const PredictorConfig& cfg, Rng& rng);

/// One recurrence step; x [D_z] with h [D_h], or batched x [B, D_z] with h [B, D_h].
ad::Var gru_step(ad::Tape& tape, const PredictorConfig& cfg, const ad::Var& x, const ad::Var& h);

/// All hidden states [T, D_h] for latents [T, D_z], starting from h0 (zeros when absent).
ad::Var aggregate(ad::Tape& tape, const PredictorConfig& cfg, const ad::Var& latents,
                  const std::optional<ad::Var>& h0 = std::nullopt);

/// One unit prediction per horizon, each shaped like c with the last axis D_z.
std::vector<ad::Var> predict_heads(ad::Tape& tape, const PredictorConfig& cfg, const ad::Var& c);
/// Predictions [K, D_z] from a single state c [D_h].
ad::Var predict(ad::Tape& tape, const PredictorConfig& cfg, const ad::Var& c);

}  // namespace zsad
