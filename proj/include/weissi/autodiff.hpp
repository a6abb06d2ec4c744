/*
 * Copyright 2026 The weissi Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "weissi/tensor.hpp"

namespace weissi {

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
};

/// Append-only record of primitive operations for reverse-mode
/// differentiation.
///
/// Nodes are stored in insertion order, which is a topological order.
/// backward() walks the record once from the root down to the first node.
/// A tape can be differentiated once; call reset() to reuse it.
class Tape {
 public:
  /// Receives the node id and its accumulated output adjoint.
  using BackwardFn = std::function<void(Tape&, std::size_t, const std::vector<double>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable leaf. Its gradient is accumulated into t.grad on backward(),
  /// and only if the loss actually depends on it.
  Var param(Tensor& t) {
    Node n;
    n.external = &t;
    n.param = &t;
    n.requires_grad = true;
    n.op = "param";
    return push(std::move(n));
  }

  /// Leaf referencing caller-owned data without copying. With requires_grad
  /// the adjoint can be read back through grad().
  Var input(const Tensor& t, bool requires_grad = false) {
    Node n;
    n.external = &t;
    n.requires_grad = requires_grad;
    n.op = "input";
    return push(std::move(n));
  }

  Var constant(Tensor t) {
    Node n;
    n.value = std::move(t);
    n.op = "constant";
    return push(std::move(n));
  }

  /// Appends the result of a primitive op. The node requires a gradient iff
  /// one of its parents does.
  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn fn,
             const char* op) {
    Node n;
    n.value = std::move(value);
    for (std::size_t p : parents) n.requires_grad = n.requires_grad || nodes_.at(p).requires_grad;
    n.parents = std::move(parents);
    if (n.requires_grad) n.backward = std::move(fn);
    n.op = op;
    return push(std::move(n));
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.external ? *n.external : n.value;
  }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const char* op_name(std::size_t id) const { return nodes_.at(id).op; }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool differentiated() const noexcept { return done_; }

  /// Adjoint buffer of a node, zero-initialized on first access.
  std::vector<double>& adjoint(std::size_t id) {
    auto& a = adjoints_.at(id);
    if (a.empty()) a.assign(value(id).size(), 0.0);
    return a;
  }

  void backward(Var root) {
    if (root.tape != this) throw ContractError("backward: root is not on this tape");
    if (done_) throw ContractError("backward: tape already differentiated; call reset()");
    if (value(root.id).size() != 1) {
      throw ShapeError("backward: root must be scalar, got " + shape_str(value(root.id).shape));
    }
    done_ = true;
    if (!nodes_[root.id].requires_grad) return;
    adjoint(root.id)[0] = 1.0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (adjoints_[i].empty()) continue;
      if (n.backward) n.backward(*this, i, adjoints_[i]);
      if (n.param) {
        auto& g = adjoints_[i];
        if (!n.param->grad) {
          n.param->grad = g;
        } else {
          auto& dst = *n.param->grad;
          for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g[k];
        }
      }
      if (!n.param && n.external == nullptr) adjoints_[i].clear();
    }
  }

  /// Gradient of a leaf after backward(); empty when the loss does not
  /// depend on it.
  std::optional<Tensor> grad(Var v) const {
    const auto& a = adjoints_.at(v.id);
    if (a.empty()) return std::nullopt;
    return Tensor(value(v.id).shape, a);
  }

  void reset() {
    nodes_.clear();
    adjoints_.clear();
    done_ = false;
  }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor* param = nullptr;
    bool requires_grad = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    const char* op = "";
  };

  Var push(Node n) {
    if (done_) throw ContractError("tape already differentiated; call reset()");
    nodes_.push_back(std::move(n));
    adjoints_.emplace_back();
    return Var{this, nodes_.size() - 1};
  }

  std::deque<Node> nodes_;
  std::deque<std::vector<double>> adjoints_;
  bool done_ = false;
};

inline const Tensor& Var::value() const { return tape->value(id); }

}  // namespace weissi
