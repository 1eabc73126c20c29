#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hoit/ad/tensor.hpp"
#include "hoit/geometry/box.hpp"
#include "hoit/model/prediction.hpp"

namespace hoit::matching {

// A labelled human-object pair. The human class is always foreground.
struct GroundTruthHoi {
  std::size_t object_class = 0;
  std::size_t interaction_class = 0;
  geometry::Box human_box;
  geometry::Box object_box;

  bool operator==(const GroundTruthHoi&) const = default;
};

struct MatchWeights {
  double alpha_h = 1.0;
  double alpha_o = 1.0;
  double alpha_r = 2.0;
  double beta1 = 2.0;
  double beta2 = 1.0;
  double giou_w = 2.0;
  double l1_w = 5.0;
  // Loss-only multiplier on the classification terms of padding slots.
  double background_weight = 0.1;

  // Throws ConfigError naming the first negative or non-finite weight.
  void validate() const;
  // Every weight multiplied by `factor`, except background_weight.
  MatchWeights scaled(double factor) const;
};

class CostMatrix {
 public:
  CostMatrix() = default;
  explicit CostMatrix(std::size_t n, double fill = 0.0) : n_(n), data_(n * n, fill) {}

  std::size_t size() const { return n_; }
  double& at(std::size_t row, std::size_t col) { return data_[row * n_ + col]; }
  double at(std::size_t row, std::size_t col) const { return data_[row * n_ + col]; }

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

// sigma[i] is the prediction assigned to ground-truth slot i.
using Assignment = std::vector<std::size_t>;

// Matching cost of one prediction against a ground truth, or against the
// padding element when `gt` is null.
double pair_cost(const GroundTruthHoi* gt, const model::HoiPrediction& pred,
                 const MatchWeights& w);

// Rows 0..M-1 are the ground truths, rows M..N-1 padding.
// Throws ConfigError when there are more ground truths than predictions.
CostMatrix build_cost_matrix(std::span<const GroundTruthHoi> gts,
                             std::span<const model::HoiPrediction> preds,
                             const MatchWeights& w);

// Exact minimum-cost perfect matching, O(N^3).
// Throws NumericError on a non-finite entry.
Assignment hungarian(const CostMatrix& cost);

double assignment_cost(const CostMatrix& cost, const Assignment& sigma);

// Builds the cost matrix from the current head values and solves it.
Assignment match(std::span<const GroundTruthHoi> gts, const model::HeadOutputs& heads,
                 const MatchWeights& w);

// The loss split into its classification and box parts (box is undefined
// when there are no ground truths). Both are already divided by max(M, 1).
struct LossTerms {
  ad::Tensor total;
  ad::Tensor classification;
  ad::Tensor box;
};

LossTerms hoi_loss_terms(std::span<const GroundTruthHoi> gts, const model::HeadOutputs& heads,
                         const Assignment& sigma, const MatchWeights& w);

// Differentiable training loss over matched pairs, divided by max(M, 1).
// Throws ContractError if sigma is not a permutation of the N queries.
ad::Tensor hoi_loss(std::span<const GroundTruthHoi> gts, const model::HeadOutputs& heads,
                    const Assignment& sigma, const MatchWeights& w);

}  // namespace hoit::matching
