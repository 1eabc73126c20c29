#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hoit::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Reverse rule of a primitive. Reads `self.grad` and accumulates into the
// grad buffers of `self.inputs` that require gradients.
using BackwardFn = std::function<void(Node& self)>;

// One value in the computation graph. Leaves (parameters, inputs) have no
// backward rule; every other node was produced by exactly one primitive.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  BackwardFn backward;
  std::string_view op = "leaf";

  std::vector<double>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

// Dense row-major double-precision array with reverse-mode differentiation.
// Copies share the underlying node; use `clone()` for an independent value.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  // In-place access for optimizers and initializers. Never use on a tensor
  // whose value was saved by a pending backward rule.
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t flat_index) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;
  // Empty span if no gradient has been accumulated.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Populates d(this)/d(leaf) for every leaf that requires gradients.
  // Requires a single-element tensor.
  void backward() const;

  Tensor detach() const;
  Tensor clone() const;

  const NodePtr& node() const { return node_; }
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

 private:
  NodePtr node_;
};

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

// Builds the output node of a primitive. The backward rule is only kept when
// grad mode is on and at least one input requires gradients.
Tensor make_result(Shape shape, std::vector<double> value,
                   std::vector<Tensor> inputs, std::string_view op,
                   BackwardFn backward);

// Reverse-topological ordering of the graph reachable from a root.
class ComputationTape {
 public:
  explicit ComputationTape(const Tensor& root);

  // Nodes in execution order; every node appears after its inputs.
  const std::vector<Node*>& order() const { return order_; }

  // Seeds the root gradient with 1 and replays reverse rules in reverse order.
  void replay_backward();

 private:
  std::vector<Node*> order_;
  Node* root_;
};

}  // namespace hoit::ad
