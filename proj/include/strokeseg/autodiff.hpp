#pragma once

// Reverse-mode tape autodiff over Tensor values.
//
// A Tape records every operation in execution order. Each recorded node keeps
// its output value, the ids of its inputs and a closure holding whatever the
// backward rule needs. backward() replays the nodes in reverse, so the tape is
// acyclic by construction.

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "strokeseg/tensor.hpp"

namespace strokeseg {

/// A named model tensor. Non-trainable entries hold buffers such as batch-norm
/// running statistics; they are saved and snapshotted but never optimized.
struct Parameter {
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

/// Insertion-ordered, name-addressed collection of parameters.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Parameter param;
  };

  std::size_t add(std::string name, Tensor init, bool trainable = true);

  Parameter& at(std::size_t index) { return entries_.at(index).param; }
  const Parameter& at(std::size_t index) const { return entries_.at(index).param; }
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  const Parameter* find(std::string_view name) const;
  Parameter* find(std::string_view name);

  std::size_t size() const noexcept { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  /// Number of scalar trainable weights.
  std::size_t trainable_count() const;
  /// Copy of all values (trainable and buffers) in store order.
  std::vector<Tensor> snapshot() const;

 private:
  std::deque<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const noexcept { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that receives a gradient, readable through grad().
  Var variable(Tensor value);
  /// Leaf bound to a model parameter. When trainable, backward() adds the
  /// leaf's gradient into param.grad.
  Var parameter(Parameter& param, bool trainable = true);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient of the last backward() root w.r.t. v; zeros when untouched.
  Tensor grad(Var v) const;
  std::string_view op(Var v) const { return nodes_.at(v.id).op; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t count_op(std::string_view op) const;

  /// Propagates d(loss)/d(node) for every node that requires a gradient.
  void backward(Var loss);

  // Used by operation implementations.
  Var record(const char* op, std::vector<int> inputs, Tensor value, BackwardFn fn);
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  const Tensor& value_of(int id) const { return nodes_[id].value; }
  const Tensor& grad_of(int id) const { return nodes_[id].grad; }
  /// Gradient accumulator of a node, allocated as zeros on first use.
  Tensor& grad_buffer(int id);
  int input(int id, std::size_t k) const { return nodes_[id].inputs[k]; }

 private:
  struct Node {
    const char* op = "";
    std::vector<int> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

// ---------------------------------------------------------------------------
// Operations. All return new nodes on the tape that owns their first input.

enum class BatchNormMode {
  kTrain,          // batch statistics, running statistics updated
  kTrainNoUpdate,  // batch statistics, running statistics left untouched
  kEval,           // running statistics
};

struct BatchNormOptions {
  double epsilon = 1e-5;
  double momentum = 0.1;
};

/// Per-output-cell flat within-plane argmax positions of a max pooling.
struct IndexMap {
  Shape pooled;
  int in_h = 0;
  int in_w = 0;
  std::vector<std::int32_t> index;
};

struct PoolResult {
  Var out;
  IndexMap indices;
};

Var conv2d(Var x, Var weight, Var bias, int stride, int pad);
Var batchnorm2d(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var,
                BatchNormMode mode, const BatchNormOptions& options = {});
Var relu(Var x);
Var leaky_relu(Var x, real slope = real(0.2));
Var sigmoid(Var x);
/// Softmax across the channel axis at every pixel.
Var softmax_channels(Var x);
/// Non-overlapping k x k max pooling; ties go to the smallest flat index.
PoolResult maxpool2d_indices(Var x, int k = 2);
Var max_unpool2d(Var y, const IndexMap& indices, int out_h, int out_w);
Var concat_channels(Var a, Var b);
/// Mean per-pixel cross entropy of channel-softmax(logits) against labels.
Var cross_entropy(Var logits, const LabelMap& target);
/// Mean binary cross entropy; probabilities are clamped to [1e-7, 1 - 1e-7].
Var binary_cross_entropy(Var p, const Tensor& target);
Var global_avg_pool(Var x);
Var select_channel(Var x, int channel);
/// Per-sample channel permutation: out channel j of sample n is input channel
/// perms[n][j].
Var permute_channels(Var x, const std::vector<std::vector<int>>& perms);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, real factor);
Var sum(Var x);
/// Copy of x's value as a gradient-free constant.
Var detach(Var x);

}  // namespace strokeseg
