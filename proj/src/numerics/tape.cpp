#include "orgpose/numerics/tape.hpp"

#include "orgpose/error.hpp"

namespace orgpose::nn {

const Tensor& Var::value() const { return tape->value(id); }
const Tensor& Var::grad() const { return tape->grad(id); }
bool Var::requires_grad() const { return tape->requires_grad(id); }

void SelectionLog::start_recording() {
  mode_ = Mode::kRecord;
  entries_.clear();
  cursor_ = 0;
}

void SelectionLog::start_replay() {
  mode_ = Mode::kReplay;
  cursor_ = 0;
}

void SelectionLog::record(std::vector<std::size_t> entry) { entries_.push_back(std::move(entry)); }

const std::vector<std::size_t>& SelectionLog::next(std::size_t expected_size) {
  if (cursor_ >= entries_.size()) throw Error("selection replay ran past the recorded pass");
  const auto& entry = entries_[cursor_++];
  if (entry.size() != expected_size) throw Error("selection replay diverged from the recorded pass");
  return entry;
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& parameter) {
  Node n;
  n.parameter = &parameter;
  n.requires_grad = parameter.trainable;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  const std::size_t self = nodes_.size();
  for (auto in : inputs) {
    if (in >= self) throw Error("internal error: tape input does not precede its consumer");
    n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, self};
}

const Tensor& Tape::grad(std::size_t id) const {
  if (nodes_[id].grad.empty()) throw Error("node has no gradient; call backward() on a loss that depends on it");
  return nodes_[id].grad;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor::zeros_like(value(id));
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape != this) throw Error("backward root belongs to another tape");
  if (value(root.id).size() != 1) {
    throw DimensionError("backward root must be scalar, got " + shape_string(value(root.id).shape()));
  }
  if (backward_done_) throw Error("backward() may only run once per tape");
  backward_done_ = true;
  grad_buffer(root.id)[0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad) continue;
    if (n.grad.empty()) n.grad = Tensor::zeros_like(value(i));
    if (n.backward) n.backward(*this, i);
    if (n.parameter) {
      auto g = n.parameter->grad.mat();
      g += n.grad.mat();
    }
  }
}

}  // namespace orgpose::nn
