#pragma once

// Shared helpers for the test binaries: random tensors and a central
// finite-difference checker.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "zsad/autodiff.hpp"
#include "zsad/model.hpp"
#include "zsad/rng.hpp"
#include "zsad/tensor.hpp"

namespace zsad::test {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline Tensor unit_rows(std::size_t rows, std::size_t dim, Rng& rng) {
  Tensor t({rows, dim});
  for (std::size_t r = 0; r < rows; ++r) {
    double n = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      t[r * dim + c] = rng.normal();
      n += t[r * dim + c] * t[r * dim + c];
    }
    n = std::sqrt(n);
    for (std::size_t c = 0; c < dim; ++c) t[r * dim + c] /= n;
  }
  return t;
}

/// Passes when |a − n| ≤ floor or |a − n| / max(|a|, |n|) < rel.
inline bool grad_close(double analytic, double numeric, double rel, double floor = 1e-8) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= floor) return true;
  return diff / std::max(std::abs(analytic), std::abs(numeric)) < rel;
}

struct FdReport {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst = 0.0;  // largest relative error among entries above the floor
  std::string first_failure;
};

inline void note(FdReport& r, const std::string& where, double a, double n, double rel, double floor) {
  ++r.checked;
  const double diff = std::abs(a - n);
  if (diff > floor) r.worst = std::max(r.worst, diff / std::max(std::abs(a), std::abs(n)));
  if (!grad_close(a, n, rel, floor)) {
    if (r.failed++ == 0) {
      r.first_failure = where + ": analytic " + std::to_string(a) + " numeric " + std::to_string(n);
    }
  }
}

/// Checks d f / d inputs for a function of free variables.
inline FdReport check_inputs(const std::function<ad::Var(const std::vector<ad::Var>&)>& f, std::vector<Tensor> inputs,
                             double rel = 1e-4, double h = 1e-5, double floor = 1e-8) {
  std::vector<ad::Var> vars;
  for (const auto& t : inputs) vars.push_back(ad::variable(t));
  const ad::Var out = f(vars);
  ad::backward(out);
  std::vector<Tensor> analytic;
  for (const auto& v : vars) analytic.push_back(v.grad().empty() ? Tensor(v.shape(), 0.0) : v.grad());

  auto eval = [&](const std::vector<Tensor>& xs) {
    std::vector<ad::Var> cs;
    for (const auto& t : xs) cs.push_back(ad::constant(t));
    return f(cs).value().item();
  };
  FdReport report;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double x0 = inputs[i][j];
      inputs[i][j] = x0 + h;
      const double up = eval(inputs);
      inputs[i][j] = x0 - h;
      const double down = eval(inputs);
      inputs[i][j] = x0;
      note(report, "input " + std::to_string(i) + "[" + std::to_string(j) + "]", analytic[i][j],
           (up - down) / (2.0 * h), rel, floor);
    }
  }
  return report;
}

/// Checks gradients of a scalar loss with respect to the parameters selected
/// by `pick`. At most `per_param` entries of each tensor are probed (spread
/// evenly); 0 probes every entry.
inline FdReport check_params(ParamStore& store, const std::function<ad::Var(ad::Tape&)>& f,
                             const std::function<bool(const std::string&)>& pick, std::size_t per_param = 0,
                             double rel = 1e-4, double h = 1e-5, double floor = 1e-8) {
  ad::GradMap grads;
  {
    ad::Tape tape(store, pick);
    grads = ad::grad(f(tape), tape);
  }
  auto eval = [&] {
    ad::Tape tape = ad::Tape::inference(store);
    return f(tape).value().item();
  };
  FdReport report;
  for (const auto& name : store.names()) {
    if (!pick(name)) continue;
    Tensor& value = store.mutable_value(name);
    const std::size_t n = value.size();
    const std::size_t probes = per_param == 0 ? n : std::min(per_param, n);
    const auto it = grads.find(name);
    for (std::size_t p = 0; p < probes; ++p) {
      const std::size_t j = probes == n ? p : (p * n) / probes + (n / probes) / 2;
      const double x0 = value[j];
      value[j] = x0 + h;
      const double up = eval();
      value[j] = x0 - h;
      const double down = eval();
      value[j] = x0;
      const double a = it == grads.end() ? 0.0 : it->second[j];
      note(report, name + "[" + std::to_string(j) + "]", a, (up - down) / (2.0 * h), rel, floor);
    }
  }
  return report;
}

/// A small model for gradient and plumbing tests.
inline ModelConfig tiny_model_config() {
  ModelConfig c;
  c.tsf.image_size = 16;
  c.tsf.patch = 8;
  c.tsf.dim = 8;
  c.tsf.blocks = 1;
  c.tsf.mlp_hidden = 16;
  c.dpc.frames = 10;
  c.dpc.block_frames = 5;
  c.dpc.image_size = 16;
  c.dpc.channels1 = 4;
  c.dpc.channels2 = 4;
  c.dpc.latent = 8;
  c.text.dim = 8;
  c.text.blocks = 1;
  c.text.mlp_hidden = 16;
  c.text.out_dim = 8;
  c.context.image_size = 16;
  c.context.channels1 = 4;
  c.context.channels2 = 4;
  c.context.dim = 6;
  c.gate.text_dim = 8;
  c.gate.context_dim = 6;
  c.proj.tsf_dim = 8;
  c.proj.dpc_dim = 8;
  c.proj.hidden = 12;
  c.proj.out_dim = 8;
  c.proj.blocks = 2;
  c.pred.latent = 8;
  c.pred.hidden = 6;
  c.pred.trunk = 6;
  c.pred.horizons = 1;
  return c;
}

}  // namespace zsad::test
