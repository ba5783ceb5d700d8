// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cfgnn/tensor.hpp"

namespace cfgnn::numerics {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// owning tape is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  bool tracked() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run reverse-mode tape. Nodes are appended in evaluation order, so
/// reverse insertion order is a reverse topological order.
class Tape {
 public:
  /// Receives the gradient of the node being processed and pushes
  /// contributions to its parents through Tape::accumulate.
  using BackwardRule = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Tracked leaf: receives a gradient on backward().
  Var parameter(Tensor value);

  /// Records a derived node. The node is tracked iff any parent is tracked;
  /// the rule is dropped for untracked nodes.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardRule rule);
  Var record(Tensor value, std::span<const Var> parents, BackwardRule rule);

  /// Seeds d(output)/d(output) = 1 and propagates to every tracked node.
  void backward(const Var& output);

  /// Adds `g` to the gradient of `target` (no-op for untracked nodes).
  void accumulate(const Var& target, const Tensor& g);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const;
  bool tracked(std::size_t id) const { return nodes_[id].tracked; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool tracked = false;
    bool has_grad = false;
    BackwardRule rule;
  };

  std::vector<Node> nodes_;
};

// Differentiable counterparts of the Tensor kernels. All operands must live
// on the same tape.

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, std::vector<std::size_t> shape);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
/// Subgradient 0 at x == 0.
Var relu(const Var& a);
Var log2(const Var& a);
Var square(const Var& a);
/// Gradient taken as 0 at x == 0, where the derivative is unbounded.
Var sqrt(const Var& a);
/// kMax routes the gradient to the first maximal element.
Var reduce(const Var& a, ReduceOp op, int axis);
Var sum_all(const Var& a);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var gather_rows(const Var& a, std::span<const std::size_t> index);
Var group_reduce(const Var& a, std::span<const std::size_t> group_of_row, std::size_t groups, ReduceOp op);

}  // namespace cfgnn::numerics
