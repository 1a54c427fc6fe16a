#pragma once

// Brute-force reference implementations, written from the definitions and
// sharing no code with the library.

#include <cmath>
#include <cstddef>
#include <vector>

#include "zsad/tensor.hpp"

namespace zsad::oracle {

inline double row_dot(const Tensor& a, std::size_t i, const Tensor& b, std::size_t k) {
  const std::size_t d = a.dim(1);
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) s += a[i * d + j] * b[k * d + j];
  return s;
}

/// mean_i [ log Σ_k exp(s_ik/τ) − s_ii/τ ], with the log-sum-exp stabilised by its max.
inline double align_loss(const Tensor& v, const Tensor& t, double tau) {
  const std::size_t b = v.dim(0);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double m = -1e300;
    for (std::size_t k = 0; k < b; ++k) m = std::max(m, row_dot(v, i, t, k) / tau);
    double s = 0.0;
    for (std::size_t k = 0; k < b; ++k) s += std::exp(row_dot(v, i, t, k) / tau - m);
    total += m + std::log(s) - row_dot(v, i, t, i) / tau;
  }
  return total / static_cast<double>(b);
}

/// mean over predictions of −log[exp(ẑ·z_pos) / Σ_{z ∈ candidates} exp(ẑ·z)]; candidates[r][0] is the positive.
inline double cpc_loss(const Tensor& pred, const Tensor& latents, const std::vector<std::vector<std::size_t>>& cand) {
  double total = 0.0;
  for (std::size_t r = 0; r < cand.size(); ++r) {
    double m = -1e300;
    for (std::size_t c : cand[r]) m = std::max(m, row_dot(pred, r, latents, c));
    double s = 0.0;
    for (std::size_t c : cand[r]) s += std::exp(row_dot(pred, r, latents, c) - m);
    total += m + std::log(s) - row_dot(pred, r, latents, cand[r][0]);
  }
  return total / static_cast<double>(cand.size());
}

/// Pairwise Mann–Whitney count.
inline double roc_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

/// Mean over positives of the precision at that positive's score threshold
/// (everything scoring at least as high counts as retrieved).
inline double average_precision(const std::vector<double>& s, const std::vector<int>& y) {
  double total = 0.0, positives = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    positives += 1.0;
    double retrieved = 0.0, hits = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[j] >= s[i]) {
        retrieved += 1.0;
        if (y[j] == 1) hits += 1.0;
      }
    }
    total += hits / retrieved;
  }
  return total / positives;
}

}  // namespace zsad::oracle
