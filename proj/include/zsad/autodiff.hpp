#pragma once

// Reverse-mode automatic differentiation over Tensor.
//
// Every op builds a graph node holding its value. A node keeps its inputs and
// a backward closure only when some input requires a gradient, so inference
// over frozen parameters allocates no graph. Ops reduce over the last axis
// unless stated otherwise.

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "zsad/param_store.hpp"
#include "zsad/rng.hpp"
#include "zsad/tensor.hpp"

namespace zsad::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool differentiable = true;
  std::string op = "leaf";
  std::string param_name;
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-allocated on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  /// Gradient accumulated by the last backward() through this node.
  const Tensor& grad() const { return node_->grad; }
  const NodePtr& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
};

class UnsupportedPrimitive : public Error {
 public:
  using Error::Error;
};

Var constant(Tensor value);
/// A free leaf that requires a gradient (used for gradient checks on inputs).
Var variable(Tensor value);

/// Runs reverse accumulation from a single-element output.
void backward(const Var& output);

/// Binds parameters from a store into graph leaves for one forward pass.
class Tape {
 public:
  using Predicate = std::function<bool(const std::string&)>;

  /// Leaves follow the store's trainable mask.
  explicit Tape(const ParamStore& store);
  /// Leaves require gradients where `trainable` says so.
  Tape(const ParamStore& store, Predicate trainable);
  /// A tape that binds every parameter as a constant.
  static Tape inference(const ParamStore& store);

  Var param(const std::string& name);
  const ParamStore& store() const { return store_; }
  const std::unordered_map<std::string, Var>& bound() const { return bound_; }

 private:
  const ParamStore& store_;
  Predicate trainable_;
  std::unordered_map<std::string, Var> bound_;
};

using GradMap = std::map<std::string, Tensor>;

/// Gradients of a scalar output with respect to every trainable parameter
/// bound on the tape. Frozen parameters never appear in the result.
GradMap grad(const Var& output, const Tape& tape);

// ---- primitives -----------------------------------------------------------

/// 2-D ([m,k]x[k,n]) or batched 3-D ([g,m,k]x[g,k,n]) product with optional
/// transposition of the trailing two axes of either operand.
Var matmul(const Var& a, const Var& b, bool trans_a = false, bool trans_b = false);
/// x·W + b for x [n,in] or [in], W [in,out], b [out].
Var linear(const Var& x, const Var& weight, const Var& bias);

/// Elementwise when shapes match; b may also be a vector over a's last axis.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
/// s·a for a one-element s.
Var scale_by(const Var& a, const Var& s);
Var add_scalar(const Var& a, double c);

Var exp(const Var& x);
Var log(const Var& x);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
/// Exact x·Φ(x) with Φ the standard normal CDF (erf form).
Var gelu(const Var& x);

Var softmax(const Var& x);
Var log_softmax(const Var& x);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
/// Unit L2 norm along the last axis. A zero row maps to zero (and throws in checked mode).
Var l2_normalize(const Var& x);
/// Row-wise x·‖ref‖/‖x‖.
Var rescale_to_norm(const Var& x, const Var& ref);

Var concat(const std::vector<Var>& parts, std::size_t axis);
/// Rows [begin, end) along axis 0.
Var slice(const Var& x, std::size_t begin, std::size_t end);
/// Selects rows of x along axis 0.
Var gather_rows(const Var& x, const std::vector<std::size_t>& rows);
/// out[i][j] = x[i][cols[i][j]] for a 2-D x; every row of cols has the same length.
Var gather_cols(const Var& x, const std::vector<std::vector<std::size_t>>& cols);
Var reshape(const Var& x, Shape shape);
/// Transpose of a 2-D tensor.
Var transpose(const Var& x);
/// Swaps the first two axes of a 3-D tensor.
Var swap01(const Var& x);

Var sum(const Var& x);
Var mean(const Var& x);
/// Mean over one axis (the axis is removed).
Var mean_axis(const Var& x, std::size_t axis);

/// 2-D convolution of x [H,W,Cin] with weight [k*k*Cin, Cout] and bias [Cout].
Var conv2d(const Var& x, const Var& weight, const Var& bias, std::size_t kernel, std::size_t stride,
           std::size_t pad);

/// Inverted dropout with a mask drawn from rng.
Var dropout(const Var& x, double rate, Rng& rng);

/// A node with no gradient rule. Differentiating through it throws
/// UnsupportedPrimitive.
Var opaque(const std::string& name, Tensor value, const std::vector<Var>& inputs);

}  // namespace zsad::ad
