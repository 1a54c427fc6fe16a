#include "zsad/losses.hpp"


#include "zsad/rng.hpp"

namespace zsad {

namespace {

ad::Var diagonal_nll(const ad::Var& logits) {
  const std::size_t b = logits.shape()[0];
  std::vector<std::vector<std::size_t>> diag(b);
  for (std::size_t i = 0; i < b; ++i) diag[i] = {i};
  return ad::scale(ad::mean(ad::gather_cols(ad::log_softmax(logits), diag)), -1.0);
}

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("alpha must lie in [0, 1]");
}

}  // namespace

ad::Var align_loss(const ad::Var& visual, const ad::Var& text, double tau, bool symmetric) {
  if (!(tau > 0.0)) throw Error("temperature must be positive");
  if (visual.value().rank() != 2 || visual.shape() != text.shape()) {
    throw ShapeError("align_loss expects matching [B, d] batches, got " + shape_str(visual.shape()) + " and " +
                     shape_str(text.shape()));
  }
  if (visual.shape()[0] < 2) throw Error("align_loss needs a batch of at least two");
  const ad::Var logits = ad::scale(ad::matmul(visual, text, false, true), 1.0 / tau);
  const ad::Var forward = diagonal_nll(logits);
  if (!symmetric) return forward;
  return ad::scale(ad::add(forward, diagonal_nll(ad::transpose(logits))), 0.5);
}

CpcPlan plan_cpc(std::size_t clips, std::size_t blocks, std::size_t horizons, std::size_t neg_cap, std::uint64_t seed) {
  const std::size_t pool = clips * blocks;
  if (pool < 2) throw Error("cpc needs at least one negative");
  CpcPlan plan;
  Rng rng(seed);
  std::vector<std::size_t> negatives;
  for (std::size_t t = 0; t < blocks; ++t) {
    for (std::size_t k = 1; k <= horizons && t + k < blocks; ++k) {
      for (std::size_t c = 0; c < clips; ++c) {
        const std::size_t pos = c * blocks + t + k;
        negatives.clear();
        for (std::size_t j = 0; j < pool; ++j) {
          if (j != pos) negatives.push_back(j);
        }
        if (neg_cap > 0 && negatives.size() > neg_cap) {
          // Partial Fisher-Yates: the first neg_cap slots become a uniform subset.
          for (std::size_t i = 0; i < neg_cap; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(negatives.size() - i));
            std::swap(negatives[i], negatives[j]);
          }
          negatives.resize(neg_cap);
        }
        std::vector<std::size_t> cand;
        cand.reserve(negatives.size() + 1);
        cand.push_back(pos);
        cand.insert(cand.end(), negatives.begin(), negatives.end());
        plan.anchors.push_back({c, t, k});
        plan.candidates.push_back(std::move(cand));
      }
    }
  }
  if (plan.anchors.empty()) throw Error("cpc needs at least one block beyond the first");
  return plan;
}

ad::Var cpc_loss(const ad::Var& predictions, const ad::Var& latents,
                 const std::vector<std::vector<std::size_t>>& candidates) {
  if (predictions.value().rank() != 2 || latents.value().rank() != 2 ||
      predictions.shape()[1] != latents.shape()[1]) {
    throw ShapeError("cpc_loss expects predictions [R, D] and latents [N, D]");
  }
  if (candidates.size() != predictions.shape()[0]) throw ShapeError("cpc_loss: one candidate list per prediction");
  for (const auto& c : candidates) {
    if (c.size() < 2) throw Error("cpc_loss: empty negative set");
  }
  const ad::Var logits = ad::matmul(predictions, latents, false, true);
  const ad::Var picked = ad::log_softmax(ad::gather_cols(logits, candidates));
  std::vector<std::vector<std::size_t>> first(candidates.size(), std::vector<std::size_t>{0});
  return ad::scale(ad::mean(ad::gather_cols(picked, first)), -1.0);
}

ad::Var total_loss(const ad::Var& l_align, const ad::Var& l_pred, double alpha) {
  check_alpha(alpha);
  return ad::add(ad::scale(l_align, alpha), ad::scale(l_pred, 1.0 - alpha));
}

double total_loss(double l_align, double l_pred, double alpha) {
  check_alpha(alpha);
  return alpha * l_align + (1.0 - alpha) * l_pred;
}

}  // namespace zsad
