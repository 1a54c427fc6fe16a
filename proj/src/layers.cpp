#include "zsad/layers.hpp"

#include <cmath>

namespace zsad::nn {

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = stddev * rng.normal();
  return t;
}

void add_linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng, double gain,
                bool zero) {
  Tensor w = zero ? Tensor({in, out}, 0.0) : normal_tensor({in, out}, gain / std::sqrt(static_cast<double>(in)), rng);
  store.add(name + ".weight", std::move(w));
  store.add(name + ".bias", Tensor({out}, 0.0));
}

void add_layer_norm(ParamStore& store, const std::string& name, std::size_t dim) {
  store.add(name + ".gain", Tensor({dim}, 1.0));
  store.add(name + ".bias", Tensor({dim}, 0.0));
}

void add_conv(ParamStore& store, const std::string& name, std::size_t kernel, std::size_t cin, std::size_t cout,
              Rng& rng) {
  const std::size_t fan_in = kernel * kernel * cin;
  store.add(name + ".weight", normal_tensor({fan_in, cout}, std::sqrt(2.0 / static_cast<double>(fan_in)), rng));
  store.add(name + ".bias", Tensor({cout}, 0.0));
}

void add_attention(ParamStore& store, const std::string& name, std::size_t dim, Rng& rng) {
  for (const char* p : {".q", ".k", ".v", ".out"}) add_linear(store, name + p, dim, dim, rng);
}

ad::Var linear(ad::Tape& tape, const std::string& name, const ad::Var& x) {
  return ad::linear(x, tape.param(name + ".weight"), tape.param(name + ".bias"));
}

ad::Var layer_norm(ad::Tape& tape, const std::string& name, const ad::Var& x) {
  return ad::layer_norm(x, tape.param(name + ".gain"), tape.param(name + ".bias"));
}

ad::Var conv(ad::Tape& tape, const std::string& name, const ad::Var& x, std::size_t kernel, std::size_t stride,
             std::size_t pad) {
  return ad::conv2d(x, tape.param(name + ".weight"), tape.param(name + ".bias"), kernel, stride, pad);
}

ad::Var self_attention(ad::Tape& tape, const std::string& name, const ad::Var& x, bool uniform) {
  if (x.value().rank() != 3) throw ShapeError("self_attention expects [groups, tokens, dim]");
  const std::size_t g = x.shape()[0];
  const std::size_t n = x.shape()[1];
  const std::size_t d = x.shape()[2];
  const ad::Var flat = ad::reshape(x, {g * n, d});
  const ad::Var v = ad::reshape(linear(tape, name + ".v", flat), {g, n, d});
  ad::Var weights;
  if (uniform) {
    weights = ad::constant(Tensor({g, n, n}, 1.0 / static_cast<double>(n)));
  } else {
    const ad::Var q = ad::reshape(linear(tape, name + ".q", flat), {g, n, d});
    const ad::Var k = ad::reshape(linear(tape, name + ".k", flat), {g, n, d});
    const ad::Var scores = ad::scale(ad::matmul(q, k, false, true), 1.0 / std::sqrt(static_cast<double>(d)));
    weights = ad::softmax(scores);
  }
  const ad::Var mixed = ad::reshape(ad::matmul(weights, v), {g * n, d});
  return ad::reshape(linear(tape, name + ".out", mixed), {g, n, d});
}

ad::Var global_avg_pool(const ad::Var& x) {
  if (x.value().rank() != 3) throw ShapeError("global_avg_pool expects [H, W, C]");
  const auto& s = x.shape();
  return ad::mean_axis(ad::reshape(x, {s[0] * s[1], s[2]}), 0);
}

ad::Var grid_avg_pool(const ad::Var& x, std::size_t grid) {
  if (x.value().rank() != 3) throw ShapeError("grid_avg_pool expects [H, W, C]");
  const auto& s = x.shape();
  if (grid == 0 || s[0] % grid != 0 || s[1] % grid != 0) throw ShapeError("grid does not divide the feature map");
  const ad::Var flat = ad::reshape(x, {s[0] * s[1], s[2]});
  const std::size_t ch = s[0] / grid;
  const std::size_t cw = s[1] / grid;
  std::vector<ad::Var> cells;
  for (std::size_t gy = 0; gy < grid; ++gy) {
    for (std::size_t gx = 0; gx < grid; ++gx) {
      std::vector<std::size_t> rows;
      for (std::size_t y = gy * ch; y < (gy + 1) * ch; ++y) {
        for (std::size_t xx = gx * cw; xx < (gx + 1) * cw; ++xx) rows.push_back(y * s[1] + xx);
      }
      cells.push_back(ad::mean_axis(ad::gather_rows(flat, rows), 0));
    }
  }
  return ad::concat(cells, 0);
}

}  // namespace zsad::nn
