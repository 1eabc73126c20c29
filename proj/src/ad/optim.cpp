#include "hoit/ad/optim.hpp"

#include <cmath>

#include "hoit/errors.hpp"

namespace hoit::ad {

void adamw_step(std::span<double> param, std::span<const double> grad,
                Moments& moments, std::size_t step, double lr,
                const AdamWSettings& settings) {
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw ConfigError("adamw: learning rate must be positive, got " + std::to_string(lr));
  }
  if (step == 0) throw ContractError("adamw: step count is 1-based");
  if (grad.size() != param.size()) {
    throw ShapeError("adamw: parameter has " + std::to_string(param.size()) +
                     " values but gradient has " + std::to_string(grad.size()));
  }
  if (moments.first.size() != param.size()) moments.first.assign(param.size(), 0.0);
  if (moments.second.size() != param.size()) moments.second.assign(param.size(), 0.0);

  const double b1 = settings.beta1, b2 = settings.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step));
  const double decay = 1.0 - lr * settings.weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    double& m = moments.first[i];
    double& v = moments.second[i];
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    param[i] = param[i] * decay - lr * m_hat / (std::sqrt(v_hat) + settings.eps);
  }
}

AdamW::AdamW(AdamWSettings settings) : settings_(settings) {}

void AdamW::add_group(std::string name, std::vector<NamedTensor> params, double lr) {
  if (lr < 0.0) throw ConfigError("adamw: negative learning rate for group " + name);
  Group group{std::move(name), lr, {}};
  for (auto& p : params) group.slots.push_back({std::move(p), {}});
  groups_.push_back(std::move(group));
}

void AdamW::set_group_lr(std::size_t group, double lr) {
  if (lr < 0.0) throw ConfigError("adamw: negative learning rate");
  groups_.at(group).lr = lr;
}

void AdamW::step() {
  ++step_;
  for (auto& group : groups_) {
    if (group.lr == 0.0) continue;
    for (auto& slot : group.slots) {
      Tensor& t = slot.param.tensor;
      std::vector<double> zeros;
      std::span<const double> grad = t.grad();
      if (grad.size() != t.numel()) {
        zeros.assign(t.numel(), 0.0);
        grad = zeros;
      }
      adamw_step(t.mutable_values(), grad, slot.moments, step_, group.lr, settings_);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& group : groups_) {
    for (auto& slot : group.slots) slot.param.tensor.zero_grad();
  }
}

Moments& AdamW::moments(const std::string& name) {
  for (auto& group : groups_) {
    for (auto& slot : group.slots) {
      if (slot.param.name == name) return slot.moments;
    }
  }
  throw ContractError("adamw: unknown parameter " + name);
}

std::vector<std::string> AdamW::parameter_names() const {
  std::vector<std::string> names;
  for (const auto& group : groups_) {
    for (const auto& slot : group.slots) names.push_back(slot.param.name);
  }
  return names;
}

double clip_grad_norm(std::span<const NamedTensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / (norm + 1e-6);
    for (const auto& p : params) {
      Tensor t = p.tensor;
      if (t.grad().empty()) continue;
      for (double& g : t.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

}  // namespace hoit::ad
