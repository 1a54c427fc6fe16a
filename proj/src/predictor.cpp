#include "zsad/predictor.hpp"

#include "zsad/layers.hpp"

namespace zsad {

void init_predictor(ParamStore& store, const PredictorConfig& cfg, Rng& rng) {
  if (cfg.horizons == 0) throw Error("predictor needs at least one horizon");
  const std::size_t in = cfg.latent + cfg.hidden;
  nn::add_linear(store, "gru.update", in, cfg.hidden, rng);
  nn::add_linear(store, "gru.reset", in, cfg.hidden, rng);
  nn::add_linear(store, "gru.candidate", in, cfg.hidden, rng);
  nn::add_linear(store, "pred.trunk", cfg.hidden, cfg.trunk, rng);
  for (std::size_t k = 1; k <= cfg.horizons; ++k) {
    nn::add_linear(store, "pred.head" + std::to_string(k), cfg.trunk, cfg.latent, rng);
  }
}

ad::Var gru_step(ad::Tape& tape, const PredictorConfig& cfg, const ad::Var& x, const ad::Var& h) {
  if (x.shape().back() != cfg.latent || h.shape().back() != cfg.hidden || x.value().rank() != h.value().rank()) {
    throw ShapeError("gru_step: x " + shape_str(x.shape()) + " and h " + shape_str(h.shape()) +
                     " do not match the config");
  }
  const std::size_t axis = x.value().rank() - 1;
  const ad::Var xh = ad::concat({x, h}, axis);
  const ad::Var z = ad::sigmoid(nn::linear(tape, "gru.update", xh));
  const ad::Var r = ad::sigmoid(nn::linear(tape, "gru.reset", xh));
  const ad::Var cand = ad::tanh(nn::linear(tape, "gru.candidate", ad::concat({x, ad::mul(r, h)}, axis)));
  return ad::add(h, ad::mul(z, ad::sub(cand, h)));
}

ad::Var aggregate(ad::Tape& tape, const PredictorConfig& cfg, const ad::Var& latents, const std::optional<ad::Var>& h0) {
  if (latents.value().rank() != 2 || latents.shape()[1] != cfg.latent) {
    throw ShapeError("aggregate expects latents [T, " + std::to_string(cfg.latent) + "], got " +
                     shape_str(latents.shape()));
  }
  const std::size_t steps = latents.shape()[0];
  ad::Var h = h0 ? *h0 : ad::constant(Tensor({cfg.hidden}, 0.0));
  std::vector<ad::Var> states;
  states.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    h = gru_step(tape, cfg, ad::reshape(ad::slice(latents, t, t + 1), {cfg.latent}), h);
    states.push_back(ad::reshape(h, {1, cfg.hidden}));
  }
  return ad::concat(states, 0);
}

std::vector<ad::Var> predict_heads(ad::Tape& tape, const PredictorConfig& cfg, const ad::Var& c) {
  if (c.shape().back() != cfg.hidden) throw ShapeError("predict: state width does not match the config");
  const ad::Var trunk = ad::gelu(nn::linear(tape, "pred.trunk", c));
  std::vector<ad::Var> out;
  for (std::size_t k = 1; k <= cfg.horizons; ++k) {
    out.push_back(ad::l2_normalize(nn::linear(tape, "pred.head" + std::to_string(k), trunk)));
  }
  return out;
}

ad::Var predict(ad::Tape& tape, const PredictorConfig& cfg, const ad::Var& c) {
  if (c.value().rank() != 1) throw ShapeError("predict expects a single state [D_h]");
  std::vector<ad::Var> rows;
  for (const auto& p : predict_heads(tape, cfg, c)) rows.push_back(ad::reshape(p, {1, cfg.latent}));
  return ad::concat(rows, 0);
}

}  // namespace zsad
