#include "zsad/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include "zsad/kernels.hpp"

namespace zsad::ad {

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

namespace {

using Backward = std::function<void(Node&)>;

Var make(Tensor value, const char* op, const std::vector<Var>& inputs, Backward bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  bool req = false;
  for (const auto& v : inputs) req = req || v.requires_grad();
  if (req) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (const auto& v : inputs) n->inputs.push_back(v.node());
    n->backward = std::move(bw);
  }
  return Var(std::move(n));
}

// Gradient buffer of input i, or nullptr when that input needs no gradient.
Tensor* in_grad(Node& self, std::size_t i) {
  auto& in = self.inputs[i];
  return in->requires_grad ? &in->grad_buffer() : nullptr;
}

enum class Broadcast { same, last_dim };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::same;
  if (b.rank() == 1 && a.rank() >= 1 && b.size() == a.shape().back()) return Broadcast::last_dim;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

std::size_t last_dim(const Tensor& t) { return t.shape().back(); }

double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

template <typename F, typename D>
Var unary(const Var& x, const char* op, F f, D dfdx_from_xy) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  if (checked_mode()) out.check_finite(op);
  return make(std::move(out), op, {x}, [dfdx_from_xy](Node& self) {
    Tensor* gx = in_grad(self, 0);
    if (!gx) return;
    const Tensor& xv = self.inputs[0]->value;
    for (std::size_t i = 0; i < xv.size(); ++i) (*gx)[i] += self.grad[i] * dfdx_from_xy(xv[i], self.value[i]);
  });
}

}  // namespace

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = "constant";
  return Var(std::move(n));
}

Var variable(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = "variable";
  n->requires_grad = true;
  return Var(std::move(n));
}

void backward(const Var& output) {
  if (!output) throw Error("backward on empty Var");
  if (output.size() != 1) {
    throw ShapeError("backward needs a scalar output, got " + shape_str(output.shape()));
  }
  if (!output.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(output.node().get(), 0);
  seen.insert(output.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) n->grad = Tensor();
  output.node()->grad = Tensor(output.shape(), 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->differentiable) throw UnsupportedPrimitive("no gradient rule for primitive '" + n->op + "'");
    if (!n->backward || n->grad.empty()) continue;
    n->backward(*n);
  }
}

Tape::Tape(const ParamStore& store)
    : store_(store), trainable_([&store](const std::string& name) { return store.trainable(name); }) {}

Tape::Tape(const ParamStore& store, Predicate trainable) : store_(store), trainable_(std::move(trainable)) {}

Tape Tape::inference(const ParamStore& store) {
  return Tape(store, [](const std::string&) { return false; });
}

Var Tape::param(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  auto n = std::make_shared<Node>();
  n->value = store_.value(name);
  n->op = "param";
  n->param_name = name;
  n->requires_grad = trainable_(name);
  Var v(std::move(n));
  bound_.emplace(name, v);
  return v;
}

GradMap grad(const Var& output, const Tape& tape) {
  backward(output);
  GradMap out;
  for (const auto& [name, v] : tape.bound()) {
    if (!v.requires_grad()) continue;
    out[name] = v.grad().empty() ? Tensor(v.shape(), 0.0) : v.grad();
  }
  return out;
}

// ---- linear algebra --------------------------------------------------------

Var matmul(const Var& a, const Var& b, bool trans_a, bool trans_b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != bv.rank() || (av.rank() != 2 && av.rank() != 3)) {
    throw ShapeError("matmul expects two 2-D or two 3-D tensors, got " + shape_str(av.shape()) + " and " +
                     shape_str(bv.shape()));
  }
  const bool batched = av.rank() == 3;
  const std::size_t groups = batched ? av.dim(0) : 1;
  if (batched && bv.dim(0) != groups) throw ShapeError("matmul batch mismatch");
  const std::size_t o = batched ? 1 : 0;
  const std::size_t m = trans_a ? av.dim(o + 1) : av.dim(o);
  const std::size_t k = trans_a ? av.dim(o) : av.dim(o + 1);
  const std::size_t kb = trans_b ? bv.dim(o + 1) : bv.dim(o);
  const std::size_t n = trans_b ? bv.dim(o) : bv.dim(o + 1);
  if (k != kb) {
    throw ShapeError("matmul inner dims differ: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
  }
  Shape out_shape = batched ? Shape{groups, m, n} : Shape{m, n};
  Tensor out(out_shape);
  const kernels::GemmShape gs{trans_a, trans_b, m, n, k};
  for (std::size_t g = 0; g < groups; ++g) {
    kernels::gemm(gs, av.ptr() + g * m * k, bv.ptr() + g * k * n, out.ptr() + g * m * n, false);
  }
  return make(std::move(out), "matmul", {a, b}, [=](Node& self) {
    const Tensor& av = self.inputs[0]->value;
    const Tensor& bv = self.inputs[1]->value;
    const double* g = self.grad.ptr();
    if (Tensor* ga = in_grad(self, 0)) {
      for (std::size_t i = 0; i < groups; ++i) {
        const double* gi = g + i * m * n;
        const double* bi = bv.ptr() + i * k * n;
        double* dai = ga->ptr() + i * m * k;
        if (!trans_a) {
          kernels::gemm({false, !trans_b, m, k, n}, gi, bi, dai, true);
        } else {
          kernels::gemm({trans_b, true, k, m, n}, bi, gi, dai, true);
        }
      }
    }
    if (Tensor* gb = in_grad(self, 1)) {
      for (std::size_t i = 0; i < groups; ++i) {
        const double* gi = g + i * m * n;
        const double* ai = av.ptr() + i * m * k;
        double* dbi = gb->ptr() + i * k * n;
        if (!trans_b) {
          kernels::gemm({!trans_a, false, k, n, m}, ai, gi, dbi, true);
        } else {
          kernels::gemm({true, trans_a, n, k, m}, gi, ai, dbi, true);
        }
      }
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (x.value().rank() == 1) {
    Var row = reshape(x, {1, x.size()});
    Var y = add(matmul(row, weight), bias);
    return reshape(y, {y.size()});
  }
  return add(matmul(x, weight), bias);
}

// ---- elementwise -----------------------------------------------------------

Var add(const Var& a, const Var& b) {
  const auto kind = broadcast_kind(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  const std::size_t d = kind == Broadcast::same ? out.size() : bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % d];
  return make(std::move(out), "add", {a, b}, [kind](Node& self) {
    if (Tensor* ga = in_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i];
    }
    if (Tensor* gb = in_grad(self, 1)) {
      const std::size_t d = kind == Broadcast::same ? self.grad.size() : gb->size();
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gb)[i % d] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  const auto kind = broadcast_kind(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  const std::size_t d = kind == Broadcast::same ? out.size() : bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i % d];
  return make(std::move(out), "sub", {a, b}, [kind](Node& self) {
    if (Tensor* ga = in_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i];
    }
    if (Tensor* gb = in_grad(self, 1)) {
      const std::size_t d = kind == Broadcast::same ? self.grad.size() : gb->size();
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gb)[i % d] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  const auto kind = broadcast_kind(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  const std::size_t d = kind == Broadcast::same ? out.size() : bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i % d];
  return make(std::move(out), "mul", {a, b}, [kind](Node& self) {
    const Tensor& av = self.inputs[0]->value;
    const Tensor& bv = self.inputs[1]->value;
    const std::size_t d = kind == Broadcast::same ? av.size() : bv.size();
    if (Tensor* ga = in_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i] * bv[i % d];
    }
    if (Tensor* gb = in_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gb)[i % d] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return make(std::move(out), "scale", {a}, [factor](Node& self) {
    if (Tensor* ga = in_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += factor * self.grad[i];
    }
  });
}

Var scale_by(const Var& a, const Var& s) {
  if (s.size() != 1) throw ShapeError("scale_by expects a one-element scale, got " + shape_str(s.shape()));
  const double f = s.value()[0];
  Tensor out = a.value();
  for (auto& v : out.data()) v *= f;
  return make(std::move(out), "scale_by", {a, s}, [](Node& self) {
    const Tensor& av = self.inputs[0]->value;
    const double f = self.inputs[1]->value[0];
    if (Tensor* ga = in_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += f * self.grad[i];
    }
    if (Tensor* gs = in_grad(self, 1)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * av[i];
      (*gs)[0] += acc;
    }
  });
}

Var add_scalar(const Var& a, double c) {
  Tensor out = a.value();
  for (auto& v : out.data()) v += c;
  return make(std::move(out), "add_scalar", {a}, [](Node& self) {
    if (Tensor* ga = in_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*ga)[i] += self.grad[i];
    }
  });
}

Var exp(const Var& x) {
  return unary(x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(const Var& x) {
  return unary(x, "log", [](double v) { return std::log(v); }, [](double xv, double) { return 1.0 / xv; });
}

Var tanh(const Var& x) {
  return unary(x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& x) {
  return unary(
      x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var gelu(const Var& x) {
  return unary(
      x, "gelu", [](double v) { return v * normal_cdf(v); },
      [](double xv, double) { return normal_cdf(xv) + xv * normal_pdf(xv); });
}

// ---- row-wise --------------------------------------------------------------

Var softmax(const Var& x) {
  const Tensor& xv = x.value();
  const std::size_t d = last_dim(xv);
  const std::size_t rows = xv.size() / d;
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.ptr() + r * d;
    double* o = out.ptr() + r * d;
    const double mx = *std::max_element(in, in + d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < d; ++j) o[j] /= z;
  }
  return make(std::move(out), "softmax", {x}, [d, rows](Node& self) {
    Tensor* gx = in_grad(self, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.ptr() + r * d;
      const double* g = self.grad.ptr() + r * d;
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += g[j] * y[j];
      double* dx = gx->ptr() + r * d;
      for (std::size_t j = 0; j < d; ++j) dx[j] += y[j] * (g[j] - s);
    }
  });
}

Var log_softmax(const Var& x) {
  const Tensor& xv = x.value();
  const std::size_t d = last_dim(xv);
  const std::size_t rows = xv.size() / d;
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.ptr() + r * d;
    double* o = out.ptr() + r * d;
    const double mx = *std::max_element(in, in + d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += std::exp(in[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < d; ++j) o[j] = in[j] - lse;
  }
  return make(std::move(out), "log_softmax", {x}, [d, rows](Node& self) {
    Tensor* gx = in_grad(self, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.ptr() + r * d;
      const double* g = self.grad.ptr() + r * d;
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += g[j];
      double* dx = gx->ptr() + r * d;
      for (std::size_t j = 0; j < d; ++j) dx[j] += g[j] - std::exp(y[j]) * s;
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Tensor& xv = x.value();
  const std::size_t d = last_dim(xv);
  if (gain.value().shape() != Shape{d} || bias.value().shape() != Shape{d}) {
    throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(d) + "], got " +
                     shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
  }
  if (!(eps > 0.0)) throw Error("layer_norm: eps must be positive");
  const std::size_t rows = xv.size() / d;
  auto xhat = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  Tensor out(xv.shape());
  const Tensor& g = gain.value();
  const Tensor& b = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.ptr() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (in[j] - mu) * inv;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * g[j] + b[j];
    }
  }
  return make(std::move(out), "layer_norm", {x, gain, bias}, [d, rows, xhat, inv_std](Node& self) {
    const Tensor& g = self.inputs[1]->value;
    Tensor* gx = in_grad(self, 0);
    Tensor* gg = in_grad(self, 1);
    Tensor* gb = in_grad(self, 2);
    std::vector<double> dxhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* dy = self.grad.ptr() + r * d;
      const double* h = xhat->ptr() + r * d;
      if (gg) {
        for (std::size_t j = 0; j < d; ++j) (*gg)[j] += dy[j] * h[j];
      }
      if (gb) {
        for (std::size_t j = 0; j < d; ++j) (*gb)[j] += dy[j];
      }
      if (gx) {
        double mean_dh = 0.0;
        double mean_dh_h = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          dxhat[j] = dy[j] * g[j];
          mean_dh += dxhat[j];
          mean_dh_h += dxhat[j] * h[j];
        }
        mean_dh /= static_cast<double>(d);
        mean_dh_h /= static_cast<double>(d);
        double* dx = gx->ptr() + r * d;
        const double inv = (*inv_std)[r];
        for (std::size_t j = 0; j < d; ++j) dx[j] += inv * (dxhat[j] - mean_dh - h[j] * mean_dh_h);
      }
    }
  });
}

Var l2_normalize(const Var& x) {
  const Tensor& xv = x.value();
  const std::size_t d = last_dim(xv);
  const std::size_t rows = xv.size() / d;
  auto norms = std::make_shared<std::vector<double>>(rows);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.ptr() + r * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += in[j] * in[j];
    const double n = std::sqrt(s);
    (*norms)[r] = n;
    if (n == 0.0) {
      if (checked_mode()) throw Error("l2_normalize of a zero vector");
      continue;
    }
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = in[j] / n;
  }
  return make(std::move(out), "l2_normalize", {x}, [d, rows, norms](Node& self) {
    Tensor* gx = in_grad(self, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double n = (*norms)[r];
      if (n == 0.0) continue;
      const double* y = self.value.ptr() + r * d;
      const double* g = self.grad.ptr() + r * d;
      double yg = 0.0;
      for (std::size_t j = 0; j < d; ++j) yg += y[j] * g[j];
      double* dx = gx->ptr() + r * d;
      for (std::size_t j = 0; j < d; ++j) dx[j] += (g[j] - y[j] * yg) / n;
    }
  });
}

Var rescale_to_norm(const Var& x, const Var& ref) {
  const Tensor& xv = x.value();
  const Tensor& rv = ref.value();
  if (xv.shape() != rv.shape()) throw ShapeError("rescale_to_norm: shapes differ");
  const std::size_t d = last_dim(xv);
  const std::size_t rows = xv.size() / d;
  auto row_norm = [d](const double* p) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += p[j] * p[j];
    return std::sqrt(s);
  };
  // Per row: the norm of x and the single ratio ‖ref‖/‖x‖, so x == ref gives exactly x back.
  auto stats = std::make_shared<std::vector<std::pair<double, double>>>(rows);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double nx = row_norm(xv.ptr() + r * d);
    if (nx == 0.0) throw Error("rescale_to_norm of a zero vector");
    const double c = row_norm(rv.ptr() + r * d) / nx;
    (*stats)[r] = {nx, c};
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xv[r * d + j] * c;
  }
  return make(std::move(out), "rescale_to_norm", {x, ref}, [d, rows, stats](Node& self) {
    const Tensor& xv = self.inputs[0]->value;
    const Tensor& rv = self.inputs[1]->value;
    Tensor* gx = in_grad(self, 0);
    Tensor* gr = in_grad(self, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto [nx, c] = (*stats)[r];
      const double* x = xv.ptr() + r * d;
      const double* g = self.grad.ptr() + r * d;
      double xg = 0.0;
      for (std::size_t j = 0; j < d; ++j) xg += x[j] * g[j];
      if (gx) {
        for (std::size_t j = 0; j < d; ++j) (*gx)[r * d + j] += c * (g[j] - x[j] * xg / (nx * nx));
      }
      if (gr) {
        const double nr = c * nx;
        if (nr == 0.0) continue;
        for (std::size_t j = 0; j < d; ++j) (*gr)[r * d + j] += xg / nx * rv[r * d + j] / nr;
      }
    }
  });
}

// ---- structural ------------------------------------------------------------

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw ShapeError("concat shape mismatch: " + shape_str(s) + " vs " + shape_str(first));
      }
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_row = out_shape[axis] * inner;
  Tensor out(out_shape);
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.value().ptr() + o * w, w, out.ptr() + o * out_row + offset);
    }
    widths.push_back(w);
    offset += w;
  }
  return make(std::move(out), "concat", parts, [outer, out_row, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      if (Tensor* gp = in_grad(self, i)) {
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = self.grad.ptr() + o * out_row + off;
          double* dst = gp->ptr() + o * widths[i];
          for (std::size_t j = 0; j < widths[i]; ++j) dst[j] += src[j];
        }
      }
      off += widths[i];
    }
  });
}

Var slice(const Var& x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  if (xv.rank() < 1 || begin >= end || end > xv.dim(0)) {
    throw ShapeError("slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                     shape_str(xv.shape()));
  }
  const std::size_t row = xv.size() / xv.dim(0);
  Shape s = xv.shape();
  s[0] = end - begin;
  Tensor out(s, std::vector<double>(xv.ptr() + begin * row, xv.ptr() + end * row));
  return make(std::move(out), "slice", {x}, [begin, row](Node& self) {
    Tensor* gx = in_grad(self, 0);
    if (!gx) return;
    double* dst = gx->ptr() + begin * row;
    for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
  });
}

Var gather_rows(const Var& x, const std::vector<std::size_t>& rows) {
  const Tensor& xv = x.value();
  if (rows.empty()) throw ShapeError("gather_rows with no indices");
  const std::size_t row = xv.size() / xv.dim(0);
  Shape s = xv.shape();
  s[0] = rows.size();
  Tensor out(s);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= xv.dim(0)) throw ShapeError("gather_rows index out of range");
    std::copy_n(xv.ptr() + rows[i] * row, row, out.ptr() + i * row);
  }
  return make(std::move(out), "gather_rows", {x}, [rows, row](Node& self) {
    Tensor* gx = in_grad(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double* src = self.grad.ptr() + i * row;
      double* dst = gx->ptr() + rows[i] * row;
      for (std::size_t j = 0; j < row; ++j) dst[j] += src[j];
    }
  });
}

Var gather_cols(const Var& x, const std::vector<std::vector<std::size_t>>& cols) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || cols.size() != xv.dim(0) || cols.empty() || cols[0].empty()) {
    throw ShapeError("gather_cols expects one non-empty index row per row of a 2-D tensor");
  }
  const std::size_t n = cols[0].size();
  const std::size_t width = xv.dim(1);
  Tensor out({cols.size(), n});
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i].size() != n) throw ShapeError("gather_cols rows must have equal length");
    for (std::size_t j = 0; j < n; ++j) {
      if (cols[i][j] >= width) throw ShapeError("gather_cols index out of range");
      out[i * n + j] = xv[i * width + cols[i][j]];
    }
  }
  return make(std::move(out), "gather_cols", {x}, [cols, n, width](Node& self) {
    Tensor* gx = in_grad(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < cols.size(); ++i) {
      for (std::size_t j = 0; j < n; ++j) (*gx)[i * width + cols[i][j]] += self.grad[i * n + j];
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make(std::move(out), "reshape", {x}, [](Node& self) {
    Tensor* gx = in_grad(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += self.grad[i];
  });
}

Var transpose(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw ShapeError("transpose expects a 2-D tensor");
  const std::size_t r = xv.dim(0);
  const std::size_t c = xv.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  }
  return make(std::move(out), "transpose", {x}, [r, c](Node& self) {
    Tensor* gx = in_grad(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += self.grad[j * r + i];
    }
  });
}

Var swap01(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3) throw ShapeError("swap01 expects a 3-D tensor");
  const std::size_t a = xv.dim(0);
  const std::size_t b = xv.dim(1);
  const std::size_t c = xv.dim(2);
  Tensor out({b, a, c});
  for (std::size_t i = 0; i < a; ++i) {
    for (std::size_t j = 0; j < b; ++j) std::copy_n(xv.ptr() + (i * b + j) * c, c, out.ptr() + (j * a + i) * c);
  }
  return make(std::move(out), "swap01", {x}, [a, b, c](Node& self) {
    Tensor* gx = in_grad(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < a; ++i) {
      for (std::size_t j = 0; j < b; ++j) {
        const double* src = self.grad.ptr() + (j * a + i) * c;
        double* dst = gx->ptr() + (i * b + j) * c;
        for (std::size_t k = 0; k < c; ++k) dst[k] += src[k];
      }
    }
  });
}

// ---- reductions ------------------------------------------------------------

Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return make(Tensor::scalar(s), "sum", {x}, [](Node& self) {
    Tensor* gx = in_grad(self, 0);
    if (!gx) return;
    const double g = self.grad[0];
    for (auto& v : gx->data()) v += g;
  });
}

Var mean(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const double n = static_cast<double>(x.size());
  return make(Tensor::scalar(s / n), "mean", {x}, [n](Node& self) {
    Tensor* gx = in_grad(self, 0);
    if (!gx) return;
    const double g = self.grad[0] / n;
    for (auto& v : gx->data()) v += g;
  });
}

Var mean_axis(const Var& x, std::size_t axis) {
  const Tensor& xv = x.value();
  if (axis >= xv.rank()) throw ShapeError("mean_axis axis out of range");
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= xv.dim(i);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < xv.rank(); ++i) inner *= xv.dim(i);
  const std::size_t len = xv.dim(axis);
  Shape s;
  for (std::size_t i = 0; i < xv.rank(); ++i) {
    if (i != axis) s.push_back(xv.dim(i));
  }
  if (s.empty()) s.push_back(1);
  Tensor out(s);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t l = 0; l < len; ++l) {
      const double* src = xv.ptr() + (o * len + l) * inner;
      double* dst = out.ptr() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(len);
  for (auto& v : out.data()) v *= inv;
  return make(std::move(out), "mean_axis", {x}, [outer, inner, len, inv](Node& self) {
    Tensor* gx = in_grad(self, 0);
    if (!gx) return;
    for (std::size_t o = 0; o < outer; ++o) {
      const double* g = self.grad.ptr() + o * inner;
      for (std::size_t l = 0; l < len; ++l) {
        double* dst = gx->ptr() + (o * len + l) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += g[i] * inv;
      }
    }
  });
}

// ---- convolution / regularisation -----------------------------------------

Var conv2d(const Var& x, const Var& weight, const Var& bias, std::size_t kernel, std::size_t stride,
           std::size_t pad) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3) throw ShapeError("conv2d expects [H,W,C], got " + shape_str(xv.shape()));
  const kernels::ConvGeometry geo{xv.dim(0), xv.dim(1), xv.dim(2), kernel, stride, pad};
  if (geo.height + 2 * pad < kernel || geo.width + 2 * pad < kernel || stride == 0) {
    throw ShapeError("conv2d kernel does not fit input " + shape_str(xv.shape()));
  }
  const Tensor& wv = weight.value();
  if (wv.rank() != 2 || wv.dim(0) != geo.patch_size()) {
    throw ShapeError("conv2d weight must be [" + std::to_string(geo.patch_size()) + ",Cout], got " +
                     shape_str(wv.shape()));
  }
  const std::size_t cout = wv.dim(1);
  if (bias.value().shape() != Shape{cout}) throw ShapeError("conv2d bias shape mismatch");
  const std::size_t positions = geo.out_height() * geo.out_width();
  auto col = std::make_shared<Tensor>(Shape{positions, geo.patch_size()});
  kernels::im2col(geo, xv.ptr(), col->ptr());
  Tensor out({geo.out_height(), geo.out_width(), cout});
  kernels::gemm({false, false, positions, cout, geo.patch_size()}, col->ptr(), wv.ptr(), out.ptr(), false);
  const Tensor& bv = bias.value();
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t c = 0; c < cout; ++c) out[p * cout + c] += bv[c];
  }
  return make(std::move(out), "conv2d", {x, weight, bias}, [geo, positions, cout, col](Node& self) {
    const double* g = self.grad.ptr();
    if (Tensor* gw = in_grad(self, 1)) {
      kernels::gemm({true, false, geo.patch_size(), cout, positions}, col->ptr(), g, gw->ptr(), true);
    }
    if (Tensor* gb = in_grad(self, 2)) {
      for (std::size_t p = 0; p < positions; ++p) {
        for (std::size_t c = 0; c < cout; ++c) (*gb)[c] += g[p * cout + c];
      }
    }
    if (Tensor* gx = in_grad(self, 0)) {
      Tensor dcol({positions, geo.patch_size()});
      kernels::gemm({false, true, positions, geo.patch_size(), cout}, g, self.inputs[1]->value.ptr(), dcol.ptr(),
                    false);
      kernels::col2im(geo, dcol.ptr(), gx->ptr());
    }
  });
}

Var dropout(const Var& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw Error("dropout rate must be in [0,1)");
  if (rate == 0.0) return x;
  auto mask = std::make_shared<std::vector<double>>(x.size());
  const double keep = 1.0 / (1.0 - rate);
  for (auto& m : *mask) m = rng.uniform() >= rate ? keep : 0.0;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*mask)[i];
  return make(std::move(out), "dropout", {x}, [mask](Node& self) {
    Tensor* gx = in_grad(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += self.grad[i] * (*mask)[i];
  });
}

Var opaque(const std::string& name, Tensor value, const std::vector<Var>& inputs) {
  Var v = make(std::move(value), "opaque", inputs, nullptr);
  v.node()->op = name;
  v.node()->differentiable = false;
  return v;
}

}  // namespace zsad::ad
