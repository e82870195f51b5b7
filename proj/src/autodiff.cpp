#include "strokeseg/autodiff.hpp"

#include <algorithm>
#include <cstring>

namespace strokeseg {

std::size_t ParamStore::add(std::string name, Tensor init, bool trainable) {
  require(!index_.contains(name), ErrorKind::kInvalidArgument, "duplicate parameter name " + name);
  const std::size_t idx = entries_.size();
  index_.emplace(name, idx);
  Parameter p;
  p.grad = Tensor(init.shape());
  p.value = std::move(init);
  p.trainable = trainable;
  entries_.push_back({std::move(name), std::move(p)});
  return idx;
}

Parameter& ParamStore::get(std::string_view name) {
  Parameter* p = find(name);
  require(p != nullptr, ErrorKind::kInvalidArgument, "no parameter named " + std::string(name));
  return *p;
}

const Parameter& ParamStore::get(std::string_view name) const {
  const Parameter* p = find(name);
  require(p != nullptr, ErrorKind::kInvalidArgument, "no parameter named " + std::string(name));
  return *p;
}

const Parameter* ParamStore::find(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second].param;
}

Parameter* ParamStore::find(std::string_view name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second].param;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.param.grad.fill(real(0));
}

std::size_t ParamStore::trainable_count() const {
  std::size_t total = 0;
  for (const auto& e : entries_) {
    if (e.param.trainable) total += e.param.value.numel();
  }
  return total;
}

std::vector<Tensor> ParamStore::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.param.value);
  return out;
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.op = "variable";
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& param, bool trainable) {
  Node n;
  n.op = "parameter";
  n.value = param.value;
  n.requires_grad = trainable && param.trainable;
  n.param = n.requires_grad ? &param : nullptr;
  return push(std::move(n));
}

Var Tape::record(const char* op, std::vector<int> inputs, Tensor value, BackwardFn fn) {
  Node n;
  n.op = op;
  for (int id : inputs) {
    require(id >= 0 && id < static_cast<int>(nodes_.size()), ErrorKind::kInvalidArgument,
            std::string(op) + ": input is not on this tape");
    n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
  }
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

Tensor& Tape::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (n.grad.shape() != n.value.shape() || n.grad.numel() != n.value.numel()) {
    n.grad = Tensor(n.value.shape());
  }
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.numel() == n.value.numel() && n.grad.shape() == n.value.shape()) return n.grad;
  return Tensor(n.value.shape());
}

std::size_t Tape::count_op(std::string_view op) const {
  return static_cast<std::size_t>(std::count_if(
      nodes_.begin(), nodes_.end(), [&](const Node& n) { return op == n.op; }));
}

void Tape::backward(Var loss) {
  require(loss.tape == this, ErrorKind::kInvalidArgument, "backward: root is not on this tape");
  const Node& root = nodes_.at(loss.id);
  require(root.value.numel() == 1, ErrorKind::kShape,
          "backward: root must be a scalar, got " + root.value.shape().str());
  for (auto& n : nodes_) n.grad = Tensor();
  if (!root.requires_grad) return;
  grad_buffer(loss.id)[0] = real(1);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr) {
      Tensor& g = n.param->grad;
      if (g.shape() != n.value.shape()) g = Tensor(n.value.shape());
      real* dst = g.data();
      const real* src = n.grad.data();
      for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
    }
  }
}

}  // namespace strokeseg
