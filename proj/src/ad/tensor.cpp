#include "hoit/ad/tensor.hpp"

#include <numeric>
#include <sstream>
#include <unordered_set>

#include "hoit/errors.hpp"

namespace hoit::ad {

namespace {
thread_local bool g_grad_mode = true;
}

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (ad::numel(shape) != values.size()) {
    throw ShapeError("tensor of shape " + to_string(shape) + " given " +
                     std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = ad::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::size(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     to_string(node_->shape));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const double> Tensor::values() const { return node_->value; }

std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
  if (node_->value.size() != 1) {
    throw ContractError("item() on tensor of shape " + to_string(shape()));
  }
  return node_->value[0];
}

double Tensor::operator[](std::size_t flat_index) const {
  return node_->value.at(flat_index);
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }

bool Tensor::is_leaf() const { return !node_->backward; }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() { return node_->grad_buffer(); }

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
  if (!defined() || node_->value.size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " +
                        (defined() ? to_string(shape()) : std::string("<undefined>")));
  }
  ComputationTape tape(*this);
  tape.replay_backward();
}

Tensor Tensor::detach() const {
  return Tensor(node_->shape, node_->value, false);
}

Tensor Tensor::clone() const {
  return Tensor(node_->shape, node_->value, node_->requires_grad);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }

bool grad_mode_enabled() { return g_grad_mode; }

Tensor make_result(Shape shape, std::vector<double> value,
                   std::vector<Tensor> inputs, std::string_view op,
                   BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (g_grad_mode) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->backward = std::move(backward);
      node->inputs.reserve(inputs.size());
      for (auto& t : inputs) node->inputs.push_back(t.node());
    }
  }
  return Tensor(std::move(node));
}

ComputationTape::ComputationTape(const Tensor& root) : root_(root.node().get()) {
  // Iterative post-order DFS; a node is emitted once all its inputs are.
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root_, 0);
  visited.insert(root_);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

void ComputationTape::replay_backward() {
  if (!root_->requires_grad) return;
  root_->grad_buffer()[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

}  // namespace hoit::ad
