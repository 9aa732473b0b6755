#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "crowdcast/error.hpp"
#include "crowdcast/tensor.hpp"

namespace crowdcast::nn {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Records primitive operations during a forward pass and replays them in
/// reverse to accumulate gradients. Gradient buffers are only allocated for
/// nodes that (transitively) depend on a leaf marked as requiring gradients.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& out_grad)>;

  Var leaf(Tensor<T> value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), std::nullopt, requires_grad, {}});
    return Var{nodes_.size() - 1};
  }
  Var parameter(Tensor<T> value) { return leaf(std::move(value), true); }
  Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

  /// Appends an op output. `backward` is dropped when no input requires grad.
  Var record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (Var v : inputs) needs = needs || nodes_.at(v.id).requires_grad;
    nodes_.push_back(
        Node{std::move(value), std::nullopt, needs, needs ? std::move(backward) : BackwardFn{}});
    return Var{nodes_.size() - 1};
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool has_grad_buffer(Var v) const { return nodes_.at(v.id).grad.has_value(); }
  std::size_t size() const noexcept { return nodes_.size(); }

  std::size_t grad_buffer_count() const {
    std::size_t n = 0;
    for (const auto& node : nodes_) n += node.grad.has_value();
    return n;
  }

  /// Gradient of the last backward() root w.r.t. `v`; zeros when unreached.
  Tensor<T> grad(Var v) const {
    const Node& node = nodes_.at(v.id);
    return node.grad ? *node.grad : Tensor<T>::zeros_like(node.value);
  }

  /// Mutable gradient buffer for `v`, allocated on first use. Null when `v`
  /// does not require gradients.
  Tensor<T>* grad_buffer(Var v) {
    Node& node = nodes_.at(v.id);
    if (!node.requires_grad) return nullptr;
    if (!node.grad) node.grad = Tensor<T>::zeros_like(node.value);
    return &*node.grad;
  }

  void accumulate(Var v, const Tensor<T>& g) {
    Tensor<T>* buf = grad_buffer(v);
    if (!buf) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*buf)[i] += g[i];
  }

  /// Reverse-mode sweep from a scalar root. Nodes are visited strictly in
  /// reverse recording order, which is a reverse topological order.
  void backward(Var root) {
    Node& r = nodes_.at(root.id);
    if (!r.requires_grad) throw Error("backward: root does not depend on any parameter");
    if (r.value.size() != 1) throw Error("backward: root must be a scalar");
    for (auto& node : nodes_) node.grad.reset();
    r.grad = Tensor<T>(r.value.shape(), T{1});
    visit_log_.clear();
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& node = nodes_[i];
      if (!node.grad || !node.backward) continue;
      visit_log_.push_back(i);
      // The callback may allocate sibling buffers; nodes_ does not grow here,
      // so references stay valid.
      node.backward(*this, *node.grad);
    }
  }

  /// Node ids whose backward callbacks ran during the last sweep, in order.
  const std::vector<std::size_t>& visit_log() const noexcept { return visit_log_; }

 private:
  struct Node {
    Tensor<T> value;
    std::optional<Tensor<T>> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<std::size_t> visit_log_;
};

}  // namespace crowdcast::nn
