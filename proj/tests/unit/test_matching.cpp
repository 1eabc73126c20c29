#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "hoit/ad/ops.hpp"
#include "hoit/errors.hpp"
#include "hoit/matching/matching.hpp"
#include "hoit/model/hoi_transformer.hpp"
#include "unit/gradcheck.hpp"

using namespace hoit;
using geometry::Box;
using matching::CostMatrix;
using matching::GroundTruthHoi;
using matching::MatchWeights;
using model::HoiPrediction;

namespace {

constexpr std::size_t kObj = 4;
constexpr std::size_t kInt = 3;

Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> c(0.2, 0.8), s(0.05, 0.4);
  return {c(rng), c(rng), s(rng), s(rng)};
}

std::vector<double> random_logits(std::mt19937_64& rng, std::size_t k) {
  std::normal_distribution<double> n(0.0, 2.0);
  std::vector<double> v(k);
  for (auto& x : v) x = n(rng);
  return v;
}

HoiPrediction random_prediction(std::mt19937_64& rng) {
  return {random_logits(rng, 2), random_logits(rng, kObj + 1), random_logits(rng, kInt + 1),
          random_box(rng), random_box(rng)};
}

GroundTruthHoi random_gt(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> o(0, kObj - 1), r(0, kInt - 1);
  return {o(rng), r(rng), random_box(rng), random_box(rng)};
}

std::vector<double> one_hot(std::size_t k, std::size_t hot, double margin) {
  std::vector<double> v(k, 0.0);
  v[hot] = margin;
  return v;
}

CostMatrix random_matrix(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 10.0);
  CostMatrix c(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) c.at(i, j) = u(rng);
  return c;
}

double brute_force_min(const CostMatrix& c) {
  std::vector<std::size_t> perm(c.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    best = std::min(best, matching::assignment_cost(c, perm));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Builds head tensors (as leaves) from a list of predictions.
model::HeadOutputs to_heads(const std::vector<HoiPrediction>& preds, bool requires_grad) {
  std::vector<double> h, o, r, hb, ob;
  for (const auto& p : preds) {
    h.insert(h.end(), p.human_logits.begin(), p.human_logits.end());
    o.insert(o.end(), p.object_logits.begin(), p.object_logits.end());
    r.insert(r.end(), p.interaction_logits.begin(), p.interaction_logits.end());
    hb.insert(hb.end(), {p.human_box.cx, p.human_box.cy, p.human_box.w, p.human_box.h});
    ob.insert(ob.end(), {p.object_box.cx, p.object_box.cy, p.object_box.w, p.object_box.h});
  }
  const std::size_t n = preds.size();
  return {ad::Tensor({n, 2}, h, requires_grad), ad::Tensor({n, kObj + 1}, o, requires_grad),
          ad::Tensor({n, kInt + 1}, r, requires_grad), ad::Tensor({n, 4}, hb, requires_grad),
          ad::Tensor({n, 4}, ob, requires_grad)};
}

}  // namespace

TEST_CASE("pair cost of a perfect prediction vanishes") {
  const GroundTruthHoi g{2, 1, {0.3, 0.4, 0.2, 0.5}, {0.6, 0.5, 0.1, 0.1}};
  const HoiPrediction p{one_hot(2, 0, 60.0), one_hot(kObj + 1, 2, 60.0), one_hot(kInt + 1, 1, 60.0),
                        g.human_box, g.object_box};
  CHECK(matching::pair_cost(&g, p, {}) < 1e-20);
}

TEST_CASE("pair cost of uniform logits is the closed form") {
  const GroundTruthHoi g{5, 7, {0.3, 0.4, 0.2, 0.5}, {0.6, 0.5, 0.1, 0.1}};
  const HoiPrediction p{std::vector<double>(2, 0.0), std::vector<double>(81, 0.0),
                        std::vector<double>(118, 0.0), g.human_box, g.object_box};
  const double expected = 2.0 * (std::log(2.0) + std::log(81.0) + 2.0 * std::log(118.0));
  CHECK(matching::pair_cost(&g, p, {}) == doctest::Approx(expected).epsilon(1e-13));
  CHECK(expected == doctest::Approx(29.2579).epsilon(1e-5));
  // Padding sees the same uniform distribution.
  CHECK(matching::pair_cost(nullptr, p, {}) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("pair cost is linear in the box group weight") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    const auto g = random_gt(rng);
    const auto p = random_prediction(rng);
    MatchWeights w;
    MatchWeights no_box = w;
    no_box.beta2 = 0.0;
    MatchWeights twice = w;
    twice.beta2 = 2.0 * w.beta2;
    const double cls = matching::pair_cost(&g, p, no_box);
    const double box1 = matching::pair_cost(&g, p, w) - cls;
    const double box2 = matching::pair_cost(&g, p, twice) - cls;
    CHECK(box2 == doctest::Approx(2.0 * box1).epsilon(1e-12));
  }
}

TEST_CASE("cost matrix rows follow the padded ground truth list") {
  std::mt19937_64 rng(2);
  std::vector<HoiPrediction> preds;
  for (int i = 0; i < 6; ++i) preds.push_back(random_prediction(rng));
  std::vector<GroundTruthHoi> gts{random_gt(rng), random_gt(rng)};
  const MatchWeights w;
  const auto c = matching::build_cost_matrix(gts, preds, w);
  REQUIRE(c.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      const double expect =
          matching::pair_cost(i < gts.size() ? &gts[i] : nullptr, preds[j], w);
      CHECK(c.at(i, j) == expect);
      if (i >= gts.size()) CHECK(c.at(i, j) == c.at(gts.size(), j));
    }
  }

  const auto empty = matching::build_cost_matrix({}, preds, w);
  const auto sigma = matching::hungarian(empty);
  std::vector<std::size_t> perm{5, 4, 3, 2, 1, 0};
  CHECK(matching::assignment_cost(empty, perm) ==
        doctest::Approx(matching::assignment_cost(empty, sigma)).epsilon(1e-12));

  std::vector<GroundTruthHoi> full;
  for (int i = 0; i < 6; ++i) full.push_back(random_gt(rng));
  const auto c_full = matching::build_cost_matrix(full, preds, w);
  for (std::size_t j = 0; j < 6; ++j) CHECK(c_full.at(5, j) == matching::pair_cost(&full[5], preds[j], w));

  full.push_back(random_gt(rng));
  CHECK_THROWS_AS(matching::build_cost_matrix(full, preds, w), ConfigError);
}

TEST_CASE("hungarian examples") {
  CostMatrix a(2);
  a.at(0, 0) = 1; a.at(0, 1) = 2; a.at(1, 0) = 2; a.at(1, 1) = 1;
  CHECK(matching::hungarian(a) == matching::Assignment{0, 1});
  CHECK(matching::assignment_cost(a, matching::hungarian(a)) == 2.0);

  CostMatrix b(3);
  const double v[3][3] = {{4, 1, 3}, {2, 0, 5}, {3, 2, 2}};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) b.at(i, j) = v[i][j];
  const auto s = matching::hungarian(b);
  CHECK(s == matching::Assignment{1, 0, 2});
  CHECK(matching::assignment_cost(b, s) == 5.0);

  CHECK(matching::hungarian(CostMatrix(0)).empty());
  CostMatrix bad(2, 1.0);
  bad.at(1, 0) = std::nan("");
  CHECK_THROWS_AS(matching::hungarian(bad), NumericError);
  bad.at(1, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(matching::hungarian(bad), NumericError);
}

TEST_CASE("hungarian equals brute force for small matrices") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 1 + t % 7;
    const auto c = random_matrix(rng, n);
    const auto s = matching::hungarian(c);
    CHECK(matching::assignment_cost(c, s) == brute_force_min(c));
  }
}

TEST_CASE("hungarian beats random permutations") {
  std::mt19937_64 rng(4);
  const auto c = random_matrix(rng, 16);
  const double best = matching::assignment_cost(c, matching::hungarian(c));
  std::vector<std::size_t> perm(16);
  std::iota(perm.begin(), perm.end(), 0);
  for (int t = 0; t < 1000; ++t) {
    std::shuffle(perm.begin(), perm.end(), rng);
    CHECK(best <= matching::assignment_cost(c, perm));
  }
}

TEST_CASE("row shift moves the optimum by exactly the shift") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 100; ++t) {
    // Integer costs keep the shifted totals exact.
    std::uniform_int_distribution<int> u(0, 20);
    CostMatrix c(6);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) c.at(i, j) = u(rng);
    const double before = matching::assignment_cost(c, matching::hungarian(c));
    CostMatrix shifted = c;
    const std::size_t row = t % 6;
    for (std::size_t j = 0; j < 6; ++j) shifted.at(row, j) += 7.0;
    const auto s = matching::hungarian(shifted);
    CHECK(matching::assignment_cost(shifted, s) == before + 7.0);
    CHECK(matching::assignment_cost(c, s) == before);
  }
}

TEST_CASE("correct interaction wins the match") {
  // One ground truth; prediction 0 has the right interaction and tight boxes,
  // prediction 1 the wrong interaction with the same object confidence.
  const GroundTruthHoi g{1, 2, {0.3, 0.5, 0.2, 0.6}, {0.55, 0.5, 0.1, 0.1}};
  HoiPrediction right{{2.0, 0.0}, one_hot(kObj + 1, 1, 3.0), one_hot(kInt + 1, 2, 3.0),
                      {0.31, 0.5, 0.2, 0.58}, {0.56, 0.5, 0.1, 0.11}};
  HoiPrediction wrong{{2.0, 0.0}, one_hot(kObj + 1, 1, 3.0), one_hot(kInt + 1, 0, 3.0),
                      {0.35, 0.52, 0.22, 0.6}, {0.58, 0.52, 0.12, 0.1}};
  for (int order = 0; order < 2; ++order) {
    std::vector<HoiPrediction> preds = order == 0 ? std::vector{right, wrong} : std::vector{wrong, right};
    const auto sigma = matching::hungarian(matching::build_cost_matrix(std::vector{g}, preds, {}));
    CHECK(sigma[0] == static_cast<std::size_t>(order == 0 ? 0 : 1));
  }
}

TEST_CASE("scaling all weights leaves the assignment unchanged") {
  std::mt19937_64 rng(6);
  for (int t = 0; t < 100; ++t) {
    std::vector<HoiPrediction> preds;
    for (int i = 0; i < 8; ++i) preds.push_back(random_prediction(rng));
    std::vector<GroundTruthHoi> gts;
    for (int i = 0; i < 1 + t % 4; ++i) gts.push_back(random_gt(rng));
    const MatchWeights w;
    // Padding rows are identical, so only the real rows and the set of
    // predictions left to padding are determined.
    auto canonical = [&](matching::Assignment s) {
      std::sort(s.begin() + static_cast<std::ptrdiff_t>(gts.size()), s.end());
      return s;
    };
    const auto base = canonical(matching::hungarian(matching::build_cost_matrix(gts, preds, w)));
    for (double f : {0.25, 3.0, 10.0}) {
      CHECK(canonical(matching::hungarian(matching::build_cost_matrix(gts, preds, w.scaled(f)))) ==
            base);
    }
  }
}

TEST_CASE("weights validation") {
  MatchWeights w;
  CHECK_NOTHROW(w.validate());
  w.alpha_r = -1.0;
  CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("loss equals the matched cost when padding is not down-weighted") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 50; ++t) {
    std::vector<HoiPrediction> preds;
    for (int i = 0; i < 6; ++i) preds.push_back(random_prediction(rng));
    std::vector<GroundTruthHoi> gts;
    for (int i = 0; i < t % 4; ++i) gts.push_back(random_gt(rng));
    MatchWeights w;
    w.background_weight = 1.0;
    const auto cost = matching::build_cost_matrix(gts, preds, w);
    const auto sigma = matching::hungarian(cost);
    const auto loss = matching::hoi_loss(gts, to_heads(preds, false), sigma, w);
    const double expect = matching::assignment_cost(cost, sigma) /
                          static_cast<double>(std::max<std::size_t>(gts.size(), 1));
    CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("padding classification terms carry the background weight") {
  std::mt19937_64 rng(8);
  std::vector<HoiPrediction> preds;
  for (int i = 0; i < 4; ++i) preds.push_back(random_prediction(rng));
  std::vector<GroundTruthHoi> gts{random_gt(rng)};
  MatchWeights w;
  const matching::Assignment sigma{2, 0, 1, 3};
  const auto heads = to_heads(preds, false);
  double expect = matching::pair_cost(&gts[0], preds[2], w);
  for (std::size_t j : {0, 1, 3}) expect += 0.1 * matching::pair_cost(nullptr, preds[j], w);
  CHECK(matching::hoi_loss(gts, heads, sigma, w).item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("perfect matched predictions give near-zero loss") {
  const GroundTruthHoi g{1, 2, {0.3, 0.5, 0.2, 0.6}, {0.55, 0.5, 0.1, 0.1}};
  std::vector<HoiPrediction> preds{
      {one_hot(2, 1, 60.0), one_hot(kObj + 1, kObj, 60.0), one_hot(kInt + 1, kInt, 60.0),
       {0.5, 0.5, 0.1, 0.1}, {0.5, 0.5, 0.1, 0.1}},
      {one_hot(2, 0, 60.0), one_hot(kObj + 1, 1, 60.0), one_hot(kInt + 1, 2, 60.0), g.human_box,
       g.object_box}};
  const auto heads = to_heads(preds, false);
  const auto sigma = matching::match(std::vector{g}, heads, {});
  CHECK(sigma[0] == 1);
  CHECK(matching::hoi_loss(std::vector{g}, heads, sigma, {}).item() < 1e-12);
}

TEST_CASE("loss rejects non-permutations") {
  std::mt19937_64 rng(9);
  std::vector<HoiPrediction> preds{random_prediction(rng), random_prediction(rng)};
  const auto heads = to_heads(preds, false);
  CHECK_THROWS_AS(matching::hoi_loss({}, heads, {0, 0}, {}), ContractError);
  CHECK_THROWS_AS(matching::hoi_loss({}, heads, {0}, {}), ContractError);
  CHECK_THROWS_AS(matching::hoi_loss({}, heads, {0, 2}, {}), ContractError);
}

TEST_CASE("loss gradient with respect to head outputs") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<HoiPrediction> preds;
    for (int i = 0; i < 5; ++i) preds.push_back(random_prediction(rng));
    std::vector<GroundTruthHoi> gts;
    for (std::uint64_t i = 0; i < 1 + seed % 3; ++i) gts.push_back(random_gt(rng));
    const auto heads = to_heads(preds, true);
    const auto sigma = matching::match(gts, heads, {});
    const double err = testing::gradcheck(
        [&] { return matching::hoi_loss(gts, heads, sigma, {}); },
        {heads.human_logits, heads.object_logits, heads.interaction_logits, heads.human_boxes,
         heads.object_boxes});
    CHECK(err < 1e-4);
  }
}

TEST_CASE("loss is invariant to permuting the predictions") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(100 + seed);
    std::vector<HoiPrediction> preds;
    for (int i = 0; i < 7; ++i) preds.push_back(random_prediction(rng));
    std::vector<GroundTruthHoi> gts;
    for (std::uint64_t i = 0; i < seed % 5; ++i) gts.push_back(random_gt(rng));
    const auto heads = to_heads(preds, false);
    const double base = matching::hoi_loss(gts, heads, matching::match(gts, heads, {}), {}).item();
    std::shuffle(preds.begin(), preds.end(), rng);
    const auto shuffled = to_heads(preds, false);
    const double again =
        matching::hoi_loss(gts, shuffled, matching::match(gts, shuffled, {}), {}).item();
    CHECK(again == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("full model loss gradient on the tiny configuration") {
  model::ModelConfig c;
  c.d_model = 16;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.heads = 2;
  c.ffn_dim = 24;
  c.num_queries = 3;
  c.num_object_classes = kObj;
  c.num_interaction_classes = kInt;
  c.backbone.channels = {4, 8};
  c.backbone.downsample = 4;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    std::mt19937_64 rng(seed);
    model::HoiTransformer m(c, seed);
    const auto img = testing::random_tensor(rng, {16, 16, 3}, false);
    const std::vector<GroundTruthHoi> gts{random_gt(rng), random_gt(rng)};
    const auto sigma = matching::match(gts, m.forward(img).heads, {});
    auto f = [&] { return matching::hoi_loss(gts, m.forward(img).heads, sigma, {}); };
    std::vector<ad::Tensor> leaves;
    for (const auto& p : m.parameters()) {
      if (p.name.find("k_proj.bias") == std::string::npos) leaves.push_back(p.tensor);
    }
    testing::GradCheckOptions opts;
    opts.max_coords = 6;
    opts.seed = seed;
    CHECK(testing::gradcheck(f, leaves, opts) < 1e-4);
  }
}
