#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "llapa/parameters.hpp"
#include "llapa/tensor.hpp"

namespace llapa {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order and replayed
/// backwards; gradients are only materialized for nodes that depend on a
/// trainable parameter.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a stored parameter. Repeated calls return the same node.
  Var parameter(ParameterStore& store, const std::string& name);

  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.param ? n.param->value : n.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  // Gradient buffer of `id`, zero-allocated on first use.
  Tensor& grad_buffer(std::size_t id);

  void backward(const Var& loss);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

/// Runs the tape backwards from a scalar loss and accumulates gradients into
/// every trainable parameter of `store` that the loss touched.
void backward(const Var& loss, ParameterStore& store);

// Recording operations. All operands are rank-2.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var add_row(const Var& a, const Var& row);  // row is 1 x cols, broadcast over rows
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var scale_rows(const Var& a, std::vector<double> weights);  // row r times weights[r]
Var sum(const Var& a);
Var mean(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var gelu(const Var& a);
Var softmax_lastdim(const Var& a);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t count);
Var gather_rows(const Var& table, std::vector<std::size_t> indices);
Var mean_rows(const Var& a);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var linear(const Var& x, const Var& weight, const Var& bias);

/// Multi-head scaled dot-product attention, heads laid out as contiguous
/// column blocks of q/k/v. `bias` (rows(q) x rows(k)) is added to the logits
/// of every head; pass nullptr for none. When `probs` is non-null it receives
/// the per-head softmax matrices.
Var attention(const Var& q, const Var& k, const Var& v, std::size_t heads,
              std::shared_ptr<const Tensor> bias, std::vector<Tensor>* probs = nullptr);

/// Mean negative log-likelihood of `targets` under row-wise softmax(logits).
Var cross_entropy(const Var& logits, const std::vector<std::size_t>& targets);

/// Mean binary cross-entropy with probabilities clamped to [1e-12, 1 - 1e-12].
Var binary_cross_entropy(const Var& probs, const std::vector<double>& labels);

// Plain kernels shared with the non-recording inference path.
namespace kernels {
void attention_forward(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, const Tensor* bias,
                       Tensor& out, std::vector<Tensor>* probs);
void layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps, Tensor& out);
double gelu(double x);
}  // namespace kernels

}  // namespace llapa
