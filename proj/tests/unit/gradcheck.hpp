#pragma once

// Central finite-difference oracle. Independent of every reverse rule: it
// only perturbs leaf values and re-evaluates the forward pass.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "hoit/ad/tensor.hpp"

namespace hoit::testing {

inline ad::Tensor random_tensor(std::mt19937_64& rng, ad::Shape shape,
                                bool requires_grad = true, double lo = -1.0,
                                double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(ad::numel(shape));
  for (auto& x : v) x = dist(rng);
  return ad::Tensor(std::move(shape), std::move(v), requires_grad);
}

struct GradCheckOptions {
  double step = 1e-5;
  // Coordinates checked per leaf; all when the leaf is smaller.
  std::size_t max_coords = std::numeric_limits<std::size_t>::max();
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  // Worst norm-wise relative error ||analytic - numeric|| /
  // max(||analytic||, ||numeric||, 1e-8) over the leaves.
  double worst_leaf = 0.0;
  // The same measure over all checked coordinates taken together.
  double overall = 0.0;
};

inline GradCheckReport gradcheck_report(const std::function<ad::Tensor()>& f,
                                        std::vector<ad::Tensor> leaves,
                                        const GradCheckOptions& opts = {}) {
  for (auto& leaf : leaves) leaf.zero_grad();
  f().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves) {
    auto g = leaf.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().size() != leaf.numel()) analytic.back().assign(leaf.numel(), 0.0);
  }

  std::mt19937_64 rng(opts.seed);
  GradCheckReport report;
  double total_diff = 0.0, total_a = 0.0, total_n = 0.0;
  ad::NoGradGuard no_grad;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto values = leaves[l].mutable_values();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > opts.max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords);
    }
    double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
    for (std::size_t i : coords) {
      const double orig = values[i];
      values[i] = orig + opts.step;
      const double up = f().item();
      values[i] = orig - opts.step;
      const double down = f().item();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double a = analytic[l][i];
      diff_sq += (a - numeric) * (a - numeric);
      a_sq += a * a;
      n_sq += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a_sq), std::sqrt(n_sq), 1e-8});
    report.worst_leaf = std::max(report.worst_leaf, std::sqrt(diff_sq) / denom);
    total_diff += diff_sq;
    total_a += a_sq;
    total_n += n_sq;
  }
  report.overall = std::sqrt(total_diff) / std::max({std::sqrt(total_a), std::sqrt(total_n), 1e-8});
  return report;
}

inline double gradcheck(const std::function<ad::Tensor()>& f, std::vector<ad::Tensor> leaves,
                        const GradCheckOptions& opts = {}) {
  return gradcheck_report(f, std::move(leaves), opts).worst_leaf;
}

}  // namespace hoit::testing
