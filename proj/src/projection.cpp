#include "zsad/projection.hpp"

#include "zsad/layers.hpp"

namespace zsad {

void init_projection(ParamStore& store, const ProjectionConfig& cfg, Rng& rng) {
  if (!cfg.residual_mlp) {
    nn::add_linear(store, "proj_lin.out", cfg.input_dim(), cfg.out_dim, rng);
    return;
  }
  nn::add_linear(store, "proj.in", cfg.input_dim(), cfg.out_dim, rng);
  nn::add_layer_norm(store, "proj.ln_in", cfg.out_dim);
  for (std::size_t i = 0; i < cfg.blocks; ++i) {
    const std::string b = "proj.block" + std::to_string(i);
    nn::add_linear(store, b + ".up", cfg.out_dim, cfg.hidden, rng);
    nn::add_layer_norm(store, b + ".ln", cfg.hidden);
    nn::add_linear(store, b + ".down", cfg.hidden, cfg.out_dim, rng, 1.0, /*zero=*/true);
  }
  nn::add_layer_norm(store, "proj.ln_final", cfg.out_dim);
  nn::add_linear(store, "proj.out", cfg.out_dim, cfg.out_dim, rng);
}

ProjectionTrace project(ad::Tape& tape, const ProjectionConfig& cfg, const ad::Var& tsf, const ad::Var& dpc,
                        double gamma, bool training, Rng* dropout_rng) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error("gamma must lie in [0, 1]");
  if (tsf.shape().back() != cfg.tsf_dim || dpc.shape().back() != cfg.dpc_dim) {
    throw ShapeError("projection inputs " + shape_str(tsf.shape()) + " and " + shape_str(dpc.shape()) +
                     " do not match the config");
  }
  const std::size_t axis = tsf.value().rank() - 1;
  const ad::Var x = ad::concat({ad::scale(tsf, gamma), ad::scale(dpc, 1.0 - gamma)}, axis);

  ProjectionTrace trace;
  if (!cfg.residual_mlp) {
    trace.output = ad::l2_normalize(nn::linear(tape, "proj_lin.out", x));
    return trace;
  }
  ad::Var h = ad::gelu(nn::layer_norm(tape, "proj.ln_in", nn::linear(tape, "proj.in", x)));
  trace.input_proj = h;
  for (std::size_t i = 0; i < cfg.blocks; ++i) {
    const std::string b = "proj.block" + std::to_string(i);
    ad::Var r = nn::layer_norm(tape, b + ".ln", ad::gelu(nn::linear(tape, b + ".up", h)));
    if (training && dropout_rng && cfg.dropout > 0.0) r = ad::dropout(r, cfg.dropout, *dropout_rng);
    h = ad::add(h, nn::linear(tape, b + ".down", r));
  }
  trace.after_blocks = h;
  trace.output = ad::l2_normalize(nn::linear(tape, "proj.out", nn::layer_norm(tape, "proj.ln_final", h)));
  return trace;
}

}  // namespace zsad
