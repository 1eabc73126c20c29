#include "hoit/matching/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hoit/ad/ops.hpp"
#include "hoit/errors.hpp"

namespace hoit::matching {

namespace {

double cross_entropy(const std::vector<double>& logits, std::size_t target) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - mx);
  return mx + std::log(s) - logits.at(target);
}

double box_cost(const geometry::Box& pred, const geometry::Box& gt, const MatchWeights& w) {
  return w.giou_w * (1.0 - geometry::giou(pred, gt)) + w.l1_w * geometry::box_l1(pred, gt);
}

}  // namespace

void MatchWeights::validate() const {
  const std::pair<const char*, double> fields[] = {
      {"alpha_h", alpha_h}, {"alpha_o", alpha_o}, {"alpha_r", alpha_r},
      {"beta1", beta1},     {"beta2", beta2},     {"giou_w", giou_w},
      {"l1_w", l1_w},       {"background_weight", background_weight}};
  for (const auto& [name, value] : fields) {
    if (!std::isfinite(value) || value < 0.0) {
      throw ConfigError(std::string("match.") + name + ": must be a finite non-negative number");
    }
  }
}

MatchWeights MatchWeights::scaled(double factor) const {
  MatchWeights s = *this;
  s.alpha_h *= factor;
  s.alpha_o *= factor;
  s.alpha_r *= factor;
  s.beta1 *= factor;
  s.beta2 *= factor;
  s.giou_w *= factor;
  s.l1_w *= factor;
  return s;
}

double pair_cost(const GroundTruthHoi* gt, const model::HoiPrediction& p, const MatchWeights& w) {
  const std::size_t human_bg = p.human_logits.size() - 1;
  const std::size_t object_bg = p.object_logits.size() - 1;
  const std::size_t interaction_bg = p.interaction_logits.size() - 1;
  if (gt == nullptr) {
    return w.beta1 * (w.alpha_h * cross_entropy(p.human_logits, human_bg) +
                      w.alpha_o * cross_entropy(p.object_logits, object_bg) +
                      w.alpha_r * cross_entropy(p.interaction_logits, interaction_bg));
  }
  if (gt->object_class >= object_bg || gt->interaction_class >= interaction_bg) {
    throw InputError("ground truth class outside the prediction's category range");
  }
  const double cls = w.alpha_h * cross_entropy(p.human_logits, 0) +
                     w.alpha_o * cross_entropy(p.object_logits, gt->object_class) +
                     w.alpha_r * cross_entropy(p.interaction_logits, gt->interaction_class);
  const double box = box_cost(p.human_box, gt->human_box, w) +
                     box_cost(p.object_box, gt->object_box, w);
  return w.beta1 * cls + w.beta2 * box;
}

CostMatrix build_cost_matrix(std::span<const GroundTruthHoi> gts,
                             std::span<const model::HoiPrediction> preds,
                             const MatchWeights& w) {
  const std::size_t n = preds.size();
  if (gts.size() > n) {
    throw ConfigError("image has " + std::to_string(gts.size()) + " ground-truth pairs but only " +
                      std::to_string(n) + " queries; raise num_queries");
  }
  CostMatrix cost(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double empty = pair_cost(nullptr, preds[j], w);
    for (std::size_t i = 0; i < n; ++i) {
      cost.at(i, j) = i < gts.size() ? pair_cost(&gts[i], preds[j], w) : empty;
    }
  }
  return cost;
}

Assignment hungarian(const CostMatrix& cost) {
  const std::size_t n = cost.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(cost.at(i, j))) {
        throw NumericError("cost matrix entry (" + std::to_string(i) + ", " + std::to_string(j) +
                           ") is not finite");
      }
    }
  }
  // Shortest augmenting paths with row/column potentials; index 0 is a
  // sentinel column, rows and columns are 1-based below.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Assignment sigma(n);
  for (std::size_t j = 1; j <= n; ++j) sigma[p[j] - 1] = j - 1;
  return sigma;
}

double assignment_cost(const CostMatrix& cost, const Assignment& sigma) {
  double total = 0.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) total += cost.at(i, sigma[i]);
  return total;
}

Assignment match(std::span<const GroundTruthHoi> gts, const model::HeadOutputs& heads,
                 const MatchWeights& w) {
  const auto preds = heads.predictions();
  return hungarian(build_cost_matrix(gts, preds, w));
}

LossTerms hoi_loss_terms(std::span<const GroundTruthHoi> gts, const model::HeadOutputs& heads,
                         const Assignment& sigma, const MatchWeights& w) {
  const std::size_t n = heads.size();
  const std::size_t m = gts.size();
  if (sigma.size() != n) {
    throw ContractError("assignment has " + std::to_string(sigma.size()) + " slots for " +
                        std::to_string(n) + " queries");
  }
  std::vector<bool> seen(n, false);
  for (std::size_t j : sigma) {
    if (j >= n || seen[j]) throw ContractError("assignment is not a permutation");
    seen[j] = true;
  }
  if (m > n) throw ConfigError("more ground-truth pairs than queries; raise num_queries");

  const std::size_t object_bg = heads.object_logits.size(1) - 1;
  const std::size_t interaction_bg = heads.interaction_logits.size(1) - 1;
  std::vector<std::size_t> human_t(n), object_t(n), interaction_t(n);
  std::vector<double> slot_w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool real = i < m;
    human_t[i] = real ? 0 : 1;
    object_t[i] = real ? gts[i].object_class : object_bg;
    interaction_t[i] = real ? gts[i].interaction_class : interaction_bg;
    if (real && (object_t[i] >= object_bg || interaction_t[i] >= interaction_bg)) {
      throw InputError("ground truth class outside the prediction's category range");
    }
    slot_w[i] = w.beta1 * (real ? 1.0 : w.background_weight);
  }
  auto scaled_weights = [&](double alpha) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = slot_w[i] * alpha;
    return out;
  };
  const auto hw = scaled_weights(w.alpha_h);
  const auto ow = scaled_weights(w.alpha_o);
  const auto rw = scaled_weights(w.alpha_r);

  const double inv_m = 1.0 / static_cast<double>(std::max<std::size_t>(m, 1));
  LossTerms terms;
  terms.classification =
      ad::cross_entropy(ad::embedding_lookup(heads.human_logits, sigma), human_t, hw) +
      ad::cross_entropy(ad::embedding_lookup(heads.object_logits, sigma), object_t, ow) +
      ad::cross_entropy(ad::embedding_lookup(heads.interaction_logits, sigma), interaction_t, rw);

  if (m > 0) {
    const std::span<const std::size_t> matched(sigma.data(), m);
    std::vector<geometry::Box> gh, go;
    for (const auto& g : gts) {
      gh.push_back(g.human_box);
      go.push_back(g.object_box);
    }
    auto box_term = [&](const ad::Tensor& pred_boxes, const std::vector<geometry::Box>& target) {
      const ad::Tensor pred = ad::embedding_lookup(pred_boxes, matched);
      const ad::Tensor tgt = geometry::boxes_to_tensor(target.data(), target.size());
      const ad::Tensor giou_term =
          ad::scale(ad::add_scalar(ad::scale(ad::sum(geometry::giou(pred, tgt)), -1.0),
                                   static_cast<double>(m)),
                    w.giou_w);
      return giou_term + ad::scale(ad::sum(geometry::box_l1(pred, tgt)), w.l1_w);
    };
    terms.box = ad::scale(box_term(heads.human_boxes, gh) + box_term(heads.object_boxes, go),
                          w.beta2 * inv_m);
  }
  terms.classification = ad::scale(terms.classification, inv_m);
  terms.total = terms.box.defined() ? terms.classification + terms.box : terms.classification;
  return terms;
}

ad::Tensor hoi_loss(std::span<const GroundTruthHoi> gts, const model::HeadOutputs& heads,
                    const Assignment& sigma, const MatchWeights& w) {
  return hoi_loss_terms(gts, heads, sigma, w).total;
}

}  // namespace hoit::matching
