#include "zsad/context_gate.hpp"

#include "zsad/layers.hpp"

namespace zsad {

void init_context(ParamStore& store, const ContextConfig& cfg, Rng& rng) {
  nn::add_conv(store, "ctx.conv1", 3, 3, cfg.channels1, rng);
  nn::add_conv(store, "ctx.conv2", 3, cfg.channels1, cfg.channels2, rng);
  nn::add_linear(store, "ctx.out", cfg.channels2, cfg.dim, rng);
}

ad::Var context_vector(ad::Tape& tape, const ContextConfig& cfg, const Tensor& frame) {
  if (frame.rank() != 3 || frame.dim(0) != cfg.image_size || frame.dim(1) != cfg.image_size || frame.dim(2) != 3) {
    throw ShapeError("context frame must be [" + std::to_string(cfg.image_size) + ", " +
                     std::to_string(cfg.image_size) + ", 3], got " + shape_str(frame.shape()));
  }
  ad::Var x = ad::gelu(nn::conv(tape, "ctx.conv1", ad::constant(frame), 3, 2, 1));
  x = ad::gelu(nn::conv(tape, "ctx.conv2", x, 3, 2, 1));
  return nn::linear(tape, "ctx.out", nn::global_avg_pool(x));
}

void init_gate(ParamStore& store, const GateConfig& cfg, Rng& rng) {
  nn::add_linear(store, "gate.in", cfg.text_dim + cfg.context_dim, cfg.text_dim, rng);
  nn::add_layer_norm(store, "gate.ln", cfg.text_dim);
  nn::add_linear(store, "gate.out", cfg.text_dim, cfg.text_dim, rng);
  store.add("gate.beta", Tensor::scalar(0.0));
}

GateOutput gate_fuse(ad::Tape& tape, const ad::Var& t, const ad::Var& u) {
  if (t.value().rank() != u.value().rank()) throw ShapeError("gate_fuse: text and context ranks differ");
  const std::size_t axis = t.value().rank() - 1;
  GateOutput out;
  ad::Var h = nn::linear(tape, "gate.in", ad::concat({t, u}, axis));
  h = ad::gelu(nn::layer_norm(tape, "gate.ln", h));
  out.residual = nn::linear(tape, "gate.out", h);
  out.pre_norm = ad::add(t, ad::scale_by(out.residual, ad::tanh(tape.param("gate.beta"))));
  // t is unit norm, so this normalizes; with tanh(β) = 0 it returns t bit for bit.
  out.fused = ad::rescale_to_norm(out.pre_norm, t);
  return out;
}

}  // namespace zsad
