#pragma once

// Parameter registration and the small building blocks shared by the model
// components. A layer called "foo" owns "foo.weight" and "foo.bias" (or
// "foo.gain"/"foo.bias" for layer norm).

#include <string>

#include "zsad/autodiff.hpp"
#include "zsad/param_store.hpp"
#include "zsad/rng.hpp"

namespace zsad::nn {

Tensor normal_tensor(Shape shape, double stddev, Rng& rng);

/// weight [in, out] ~ N(0, gain²/in), zero bias. zero=true zeroes the weight too.
void add_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                double gain = 1.0, bool zero = false);
void add_layer_norm(ParamStore& store, const std::string& name, std::size_t dim);
/// weight [k·k·cin, cout] in im2col layout.
void add_conv(ParamStore& store, const std::string& name, std::size_t kernel, std::size_t cin, std::size_t cout,
              Rng& rng);
/// Single-head attention projections q, k, v, out at width dim.
void add_attention(ParamStore& store, const std::string& name, std::size_t dim, Rng& rng);

ad::Var linear(ad::Tape& tape, const std::string& name, const ad::Var& x);
ad::Var layer_norm(ad::Tape& tape, const std::string& name, const ad::Var& x);
ad::Var conv(ad::Tape& tape, const std::string& name, const ad::Var& x, std::size_t kernel, std::size_t stride,
             std::size_t pad);

/// Single-head self-attention within each group of x [G, N, D]. With
/// uniform=true the attention weights are fixed at 1/N.
ad::Var self_attention(ad::Tape& tape, const std::string& name, const ad::Var& x, bool uniform = false);

/// Global average pool of an [H, W, C] map to [C].
ad::Var global_avg_pool(const ad::Var& x);
/// Averages each cell of a grid×grid partition of [H, W, C]; cells in
/// row-major order, concatenated: [grid·grid·C].
ad::Var grid_avg_pool(const ad::Var& x, std::size_t grid);

}  // namespace zsad::nn
