#pragma once

#include <cstdint>
#include <vector>

#include "zsad/autodiff.hpp"

namespace zsad {

/// Video→text InfoNCE over a batch: mean_i −log softmax_k(v_i·t_k/τ)[i].
/// symmetric=true averages in the text→video direction as well.
ad::Var align_loss(const ad::Var& visual, const ad::Var& text, double tau, bool symmetric = false);

/// One CPC anchor: the prediction of clip `clip` made at block `t` for block t+k.
struct CpcAnchor {
  std::size_t clip = 0;
  std::size_t t = 0;
  std::size_t k = 0;
};

/// Anchors and candidate columns for a batch whose latents are laid out as
/// row clip·blocks + t. Rows are ordered by t, then k, then clip, which is the
/// order the trainer stacks its predictions in. Candidates list the positive
/// first, then every other latent in the batch; when that pool exceeds
/// neg_cap (> 0) a uniform subset of neg_cap negatives is drawn from Rng(seed).
struct CpcPlan {
  std::vector<CpcAnchor> anchors;
  std::vector<std::vector<std::size_t>> candidates;
};
CpcPlan plan_cpc(std::size_t clips, std::size_t blocks, std::size_t horizons, std::size_t neg_cap, std::uint64_t seed);

/// mean over anchors of −log softmax over candidates of ẑ·z, positive in column 0.
/// predictions [R, D] (row r belongs to anchor r), latents [N, D].
ad::Var cpc_loss(const ad::Var& predictions, const ad::Var& latents,
                 const std::vector<std::vector<std::size_t>>& candidates);

/// α·l_align + (1 − α)·l_pred.
ad::Var total_loss(const ad::Var& l_align, const ad::Var& l_pred, double alpha);
double total_loss(double l_align, double l_pred, double alpha);

}  // namespace zsad
