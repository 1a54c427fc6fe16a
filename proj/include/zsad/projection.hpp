#pragma once

// Visual projection head. The residual variant ("proj.*"):
//   x  = concat(γ·tsf, (1−γ)·dpc)
//   h0 = GELU(LN(W_in x))
//   h  = h + Down(dropout(LN(GELU(Up h))))   for each of N blocks, Down zero-initialized
//   v  = normalize(W_out LN(h))
// The plain variant ("proj_lin.*") is v = normalize(W x).

#include "zsad/autodiff.hpp"
#include "zsad/param_store.hpp"
#include "zsad/rng.hpp"

namespace zsad {

struct ProjectionConfig {
  std::size_t tsf_dim = 64;
  std::size_t dpc_dim = 64;
  std::size_t hidden = 256;
  std::size_t out_dim = 64;
  std::size_t blocks = 4;
  double dropout = 0.1;
  bool residual_mlp = true;

  std::size_t input_dim() const { return tsf_dim + dpc_dim; }
};

void init_projection(ParamStore& store, const ProjectionConfig& cfg, Rng& rng);

struct ProjectionTrace {
  ad::Var input_proj;    // h0 (residual variant only)
  ad::Var after_blocks;  // h before the final layer norm (residual variant only)
  ad::Var output;        // unit-norm v
};

/// tsf [D_v] or [B, D_v], dpc [D_z] or [B, D_z]. Dropout is applied only when
/// training and an rng is given.
ProjectionTrace project(ad::Tape& tape, const ProjectionConfig& cfg, const ad::Var& tsf, const ad::Var& dpc,
                        double gamma, bool training, Rng* dropout_rng = nullptr);

}  // namespace zsad
