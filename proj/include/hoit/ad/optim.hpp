#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hoit/ad/tensor.hpp"

namespace hoit::ad {

struct AdamWSettings {
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct Moments {
  std::vector<double> first;
  std::vector<double> second;
};

// One decoupled-weight-decay Adam update of a single parameter. `step` is the
// 1-based count used for bias correction. Throws ConfigError for lr <= 0.
void adamw_step(std::span<double> param, std::span<const double> grad,
                Moments& moments, std::size_t step, double lr,
                const AdamWSettings& settings);

// Named parameter handle shared with the model.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// AdamW over parameter groups with individual learning rates. A group whose
// learning rate is exactly zero is frozen: neither parameters nor moments move.
class AdamW {
 public:
  explicit AdamW(AdamWSettings settings = {});

  void add_group(std::string name, std::vector<NamedTensor> params, double lr);

  std::size_t group_count() const { return groups_.size(); }
  double group_lr(std::size_t group) const { return groups_.at(group).lr; }
  void set_group_lr(std::size_t group, double lr);

  // Applies one update from the accumulated gradients.
  void step();
  void zero_grad();

  std::size_t step_count() const { return step_; }
  void set_step_count(std::size_t step) { step_ = step; }
  const AdamWSettings& settings() const { return settings_; }

  // Moments addressed by parameter name, for checkpointing.
  Moments& moments(const std::string& name);
  std::vector<std::string> parameter_names() const;

 private:
  struct Slot {
    NamedTensor param;
    Moments moments;
  };
  struct Group {
    std::string name;
    double lr = 0.0;
    std::vector<Slot> slots;
  };
  AdamWSettings settings_;
  std::vector<Group> groups_;
  std::size_t step_ = 0;
};

// Rescales all gradients so their joint L2 norm is at most `max_norm`.
// Returns the norm before clipping.
double clip_grad_norm(std::span<const NamedTensor> params, double max_norm);

}  // namespace hoit::ad
