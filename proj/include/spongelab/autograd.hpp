#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "spongelab/tensor.hpp"

namespace spongelab::ag {

/// Handle to a value in a reverse-mode computation graph. Copies share the
/// underlying node. Leaves created with requires_grad=false are constants:
/// no gradient is propagated into them.
class Node {
 public:
  Node() = default;

  static Node leaf(Tensor value, bool requires_grad = true);

  const Tensor& value() const { return impl_->value; }
  const Tensor& grad() const { return impl_->grad; }
  bool requires_grad() const { return impl_->requires_grad; }
  bool valid() const { return impl_ != nullptr; }

  /// Replace the value of a leaf in place (parameter updates).
  Tensor& mutable_value() { return impl_->value; }

 private:
  struct Impl {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Impl>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Impl&)> backward;
  };

  explicit Node(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  static Node make_op(Tensor value, std::vector<Node> parents,
                      std::function<void(Impl&)> backward, const char* name);

  std::shared_ptr<Impl> impl_;

  friend Node matmul(const Node&, const Node&);
  friend Node add_bias(const Node&, const Node&);
  friend Node relu(const Node&);
  friend Node softmax_cross_entropy(const Node&, std::span<const int>);
  friend Node sum(const Node&);
  friend Node mean(const Node&);
  friend Node add(const Node&, const Node&);
  friend Node sub(const Node&, const Node&);
  friend Node scale(const Node&, double);
  friend Node select_rows(const Node&, std::span<const std::size_t>);
  friend Node l0_approx(const Node&, double);
  friend void backward(const Node&);
};

Node matmul(const Node& a, const Node& b);
Node add_bias(const Node& x, const Node& bias);
/// max(0, v); the subgradient at exactly 0 is 0.
Node relu(const Node& x);
/// Mean over rows of -log softmax(logits)[label], row-max stabilized.
Node softmax_cross_entropy(const Node& logits, std::span<const int> labels);
Node sum(const Node& x);
Node mean(const Node& x);
/// Scalar + scalar.
Node add(const Node& a, const Node& b);
/// Scalar - scalar.
Node sub(const Node& a, const Node& b);
Node scale(const Node& x, double factor);
Node select_rows(const Node& x, std::span<const std::size_t> rows);
/// Elementwise smooth nonzero indicator v²/(v²+σ), values in [0, 1).
Node l0_approx(const Node& x, double sigma);

/// Zeroes every reachable grad, seeds the scalar root with 1 and propagates
/// in reverse topological order.
void backward(const Node& loss);

}  // namespace spongelab::ag
