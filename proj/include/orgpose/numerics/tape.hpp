#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

#include "orgpose/numerics/parameters.hpp"
#include "orgpose/numerics/tensor.hpp"

namespace orgpose::nn {

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
  bool requires_grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Records the discrete choices a forward pass makes (k-NN neighbor sets,
/// max-pool winners, ReLU and abs activity patterns) and can replay them on a
/// later pass. Replaying freezes the piecewise structure of the network, which
/// is what a finite-difference check of the backward pass needs.
class SelectionLog {
 public:
  enum class Mode { kOff, kRecord, kReplay };

  Mode mode() const noexcept { return mode_; }
  void start_recording();
  void start_replay();
  void stop() noexcept { mode_ = Mode::kOff; }

  void record(std::vector<std::size_t> entry);
  /// Next recorded entry in replay order; throws if the replayed pass
  /// diverges from the recorded one.
  const std::vector<std::size_t>& next(std::size_t expected_size);
  std::size_t entry_count() const noexcept { return entries_.size(); }

 private:
  Mode mode_ = Mode::kOff;
  std::vector<std::vector<std::size_t>> entries_;
  std::size_t cursor_ = 0;
};

/// Reverse-mode computation tape. Nodes are appended in execution order, so the
/// node vector is already a topological order and backward() is one reverse
/// sweep.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Leaf bound to a parameter; backward() accumulates into parameter.grad.
  Var parameter(Parameter& parameter);

  /// Appends an operation node. requires_grad is inherited from the inputs;
  /// the backward function is dropped when no input needs a gradient.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  /// Populates gradients for every node reachable from a scalar root and
  /// accumulates them into bound parameters.
  void backward(Var root);

  const Tensor& value(std::size_t id) const {
    const auto& n = nodes_[id];
    return n.parameter ? n.parameter->value : n.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  const Tensor& grad(std::size_t id) const;
  /// Gradient buffer of a node, allocated as zeros on first access.
  Tensor& grad_buffer(std::size_t id);

  std::size_t size() const noexcept { return nodes_.size(); }

  SelectionLog* selections() const noexcept { return selections_; }
  void set_selections(SelectionLog* log) noexcept { selections_ = log; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* parameter = nullptr;
    bool requires_grad = false;
  };

  // deque: appending a node never moves the values of earlier ones.
  std::deque<Node> nodes_;
  SelectionLog* selections_ = nullptr;
  bool backward_done_ = false;
};

}  // namespace orgpose::nn
