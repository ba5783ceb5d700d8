// SPDX-License-Identifier: Apache-2.0
#include "cfgnn/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace cfgnn::numerics {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }
bool Var::tracked() const { return tape_->tracked(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardRule rule) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(rule));
}

Var Tape::record(Tensor value, std::span<const Var> parents, BackwardRule rule) {
  bool tracked = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw std::invalid_argument("Tape::record: operand belongs to another tape");
    tracked = tracked || nodes_[p.id()].tracked;
  }
  nodes_.push_back(Node{std::move(value), {}, tracked, false, tracked ? std::move(rule) : BackwardRule{}});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(const Var& target, const Tensor& g) {
  Node& node = nodes_[target.id()];
  if (!node.tracked) return;
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape());
    node.has_grad = true;
  }
  for (std::size_t i = 0; i < g.size(); ++i) node.grad[i] += g[i];
}

const Tensor& Tape::grad(std::size_t id) const {
  Node& node = const_cast<Node&>(nodes_[id]);
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape());
    node.has_grad = true;
  }
  return node.grad;
}

void Tape::backward(const Var& output) {
  if (output.tape() != this) throw std::invalid_argument("Tape::backward: output belongs to another tape");
  if (nodes_[output.id()].value.size() != 1) {
    throw ShapeError("Tape::backward: output must be a scalar, got " +
                     nodes_[output.id()].value.shape_string());
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  accumulate(output, Tensor(nodes_[output.id()].value.shape(), 1.0));
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.tracked || !node.has_grad || !node.rule) continue;
    node.rule(*this, node.grad);
  }
}

namespace {

// Sums a gradient of the broadcast result back to the shape of operand `b`.
Tensor unbroadcast(const Tensor& g, const Tensor& b) {
  if (g.same_shape(b)) return g;
  Tensor out(b.shape());
  if (b.size() == 1) {
    for (double x : g.values()) out[0] += x;
    return out;
  }
  const std::size_t cols = g.cols();
  for (std::size_t i = 0; i < g.size(); ++i) out[i % cols] += g[i];
  return out;
}

template <typename Kernel, typename Rule>
Var unary_op(const Var& a, Kernel kernel, Rule rule) {
  Tape& tape = *a.tape();
  return tape.record(kernel(a.value()), {a}, [a, rule](Tape& t, const Tensor& g) {
    const Tensor& x = a.value();
    Tensor ga(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] = g[i] * rule(x[i]);
    t.accumulate(a, ga);
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& tape = *a.tape();
  return tape.record(matmul(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (a.tracked()) t.accumulate(a, matmul(g, transpose(b.value())));
    if (b.tracked()) t.accumulate(b, matmul(transpose(a.value()), g));
  });
}

Var transpose(const Var& a) {
  Tape& tape = *a.tape();
  return tape.record(transpose(a.value()), {a}, [a](Tape& t, const Tensor& g) {
    t.accumulate(a, transpose(g).reshaped(a.value().shape()));
  });
}

Var reshape(const Var& a, std::vector<std::size_t> shape) {
  Tape& tape = *a.tape();
  return tape.record(a.value().reshaped(std::move(shape)), {a}, [a](Tape& t, const Tensor& g) {
    t.accumulate(a, g.reshaped(a.value().shape()));
  });
}

Var add(const Var& a, const Var& b) {
  Tape& tape = *a.tape();
  return tape.record(add(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (b.tracked()) t.accumulate(b, unbroadcast(g, b.value()));
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& tape = *a.tape();
  return tape.record(sub(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    if (b.tracked()) t.accumulate(b, unbroadcast(scale(g, -1.0), b.value()));
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& tape = *a.tape();
  return tape.record(mul(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (a.tracked()) t.accumulate(a, mul(g, b.value()));
    if (b.tracked()) {
      Tensor full(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) full[i] = g[i] * a.value()[i];
      t.accumulate(b, unbroadcast(full, b.value()));
    }
  });
}

Var div(const Var& a, const Var& b) {
  Tape& tape = *a.tape();
  return tape.record(div(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (a.tracked()) t.accumulate(a, div(g, b.value()));
    if (b.tracked()) {
      // d(a/b)/db = -a / b^2, evaluated on the broadcast grid.
      const Tensor& av = a.value();
      const Tensor& bv = b.value();
      const std::size_t cols = av.cols();
      Tensor full(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double bi = av.same_shape(bv) ? bv[i] : bv.size() == 1 ? bv[0] : bv[i % cols];
        full[i] = -g[i] * av[i] / (bi * bi);
      }
      t.accumulate(b, unbroadcast(full, bv));
    }
  });
}

Var scale(const Var& a, double factor) {
  return unary_op(
      a, [factor](const Tensor& x) { return scale(x, factor); }, [factor](double) { return factor; });
}

Var relu(const Var& a) {
  return unary_op(
      a, [](const Tensor& x) { return relu(x); }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var log2(const Var& a) {
  return unary_op(
      a, [](const Tensor& x) { return log2(x); }, [](double x) { return 1.0 / (x * std::numbers::ln2); });
}

Var square(const Var& a) {
  return unary_op(
      a, [](const Tensor& x) { return square(x); }, [](double x) { return 2.0 * x; });
}

Var sqrt(const Var& a) {
  return unary_op(
      a, [](const Tensor& x) { return sqrt(x); },
      [](double x) { return x > 0.0 ? 0.5 / std::sqrt(x) : 0.0; });
}

Var reduce(const Var& a, ReduceOp op, int axis) {
  Tape& tape = *a.tape();
  return tape.record(reduce(a.value(), op, axis), {a}, [a, op, axis](Tape& t, const Tensor& g) {
    const Tensor& x = a.value();
    const std::size_t r = x.rows(), c = x.cols();
    const std::size_t extent = axis == 0 ? r : c;
    Tensor ga(x.shape());
    auto at = [&](std::size_t e, std::size_t o) -> std::size_t { return axis == 0 ? e * c + o : o * c + e; };
    for (std::size_t o = 0; o < g.size(); ++o) {
      if (op == ReduceOp::kMax) {
        std::size_t best = 0;
        for (std::size_t e = 1; e < extent; ++e)
          if (x[at(e, o)] > x[at(best, o)]) best = e;
        ga[at(best, o)] += g[o];
      } else {
        const double w = op == ReduceOp::kMean ? g[o] / static_cast<double>(extent) : g[o];
        for (std::size_t e = 0; e < extent; ++e) ga[at(e, o)] += w;
      }
    }
    t.accumulate(a, ga);
  });
}

Var sum_all(const Var& a) {
  Tape& tape = *a.tape();
  return tape.record(sum_all(a.value()), {a}, [a](Tape& t, const Tensor& g) {
    t.accumulate(a, Tensor(a.value().shape(), g[0]));
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const Var& p : parts) values.push_back(p.value());
  Tape& tape = *parts.front().tape();
  std::vector<Var> owned(parts.begin(), parts.end());
  return tape.record(concat_rows(values), parts, [owned](Tape& t, const Tensor& g) {
    std::size_t offset = 0;
    for (const Var& p : owned) {
      const Tensor& pv = p.value();
      if (p.tracked()) {
        std::vector<double> slice(g.values().begin() + offset, g.values().begin() + offset + pv.size());
        t.accumulate(p, Tensor(pv.shape(), std::move(slice)));
      }
      offset += pv.size();
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const Var& p : parts) values.push_back(p.value());
  Tape& tape = *parts.front().tape();
  std::vector<Var> owned(parts.begin(), parts.end());
  return tape.record(concat_cols(values), parts, [owned](Tape& t, const Tensor& g) {
    std::size_t col = 0;
    for (const Var& p : owned) {
      const Tensor& pv = p.value();
      const std::size_t pc = pv.cols();
      if (p.tracked()) {
        Tensor gp(pv.shape());
        for (std::size_t i = 0; i < pv.rows(); ++i)
          for (std::size_t j = 0; j < pc; ++j) gp[i * pc + j] = g(i, col + j);
        t.accumulate(p, gp);
      }
      col += pc;
    }
  });
}

Var gather_rows(const Var& a, std::span<const std::size_t> index) {
  Tape& tape = *a.tape();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return tape.record(gather_rows(a.value(), index), {a}, [a, idx](Tape& t, const Tensor& g) {
    const Tensor& x = a.value();
    Tensor ga(x.shape());
    const std::size_t c = x.cols();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) ga[idx[i] * c + j] += g(i, j);
    t.accumulate(a, ga);
  });
}

Var group_reduce(const Var& a, std::span<const std::size_t> group_of_row, std::size_t groups, ReduceOp op) {
  Tape& tape = *a.tape();
  std::vector<std::size_t> gid(group_of_row.begin(), group_of_row.end());
  return tape.record(group_reduce(a.value(), group_of_row, groups, op), {a},
                     [a, gid, groups, op](Tape& t, const Tensor& g) {
                       const Tensor& x = a.value();
                       const std::size_t c = x.cols();
                       Tensor ga(x.shape());
                       if (op == ReduceOp::kMax) {
                         const auto arg = group_argmax(x, gid, groups);
                         for (std::size_t k = 0; k < groups; ++k)
                           for (std::size_t j = 0; j < c; ++j) {
                             const std::size_t row = arg[k * c + j];
                             if (row < x.rows()) ga[row * c + j] += g(k, j);
                           }
                       } else {
                         std::vector<std::size_t> count(groups, 0);
                         for (std::size_t r : gid) ++count[r];
                         for (std::size_t i = 0; i < x.rows(); ++i) {
                           const double w = op == ReduceOp::kMean ? 1.0 / static_cast<double>(count[gid[i]]) : 1.0;
                           for (std::size_t j = 0; j < c; ++j) ga[i * c + j] = w * g(gid[i], j);
                         }
                       }
                       t.accumulate(a, ga);
                     });
}

}  // namespace cfgnn::numerics
