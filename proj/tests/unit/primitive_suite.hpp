#pragma once

// Randomized finite-difference checks, one per autodiff primitive. Shared by
// the unit tests and the acceptance runner.

#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gradcheck.hpp"
#include "hoit/ad/attention.hpp"
#include "hoit/ad/ops.hpp"

namespace hoit::testing {

struct PrimitiveCase {
  std::string name;
  std::function<double(std::uint64_t seed)> check;
};

namespace detail {

inline std::size_t dim_in(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Reduces any output to a scalar through a fixed random projection so every
// output coordinate contributes to the checked gradient.
inline ad::Tensor project(const ad::Tensor& out, const ad::Tensor& weights) {
  return ad::sum(ad::mul(out, weights));
}

inline double unary_case(std::uint64_t seed,
                         const std::function<ad::Tensor(const ad::Tensor&)>& op,
                         double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  ad::Shape shape{dim_in(rng, 1, 4), dim_in(rng, 1, 5)};
  auto x = random_tensor(rng, shape, true, lo, hi);
  auto w = random_tensor(rng, shape, false);
  return gradcheck([&] { return project(op(x), w); }, {x});
}

inline double binary_case(std::uint64_t seed,
                          const std::function<ad::Tensor(const ad::Tensor&, const ad::Tensor&)>& op,
                          double blo = -1.0, double bhi = 1.0) {
  std::mt19937_64 rng(seed);
  ad::Shape shape{dim_in(rng, 1, 4), dim_in(rng, 1, 5)};
  auto a = random_tensor(rng, shape);
  auto b = random_tensor(rng, shape, true, blo, bhi);
  auto w = random_tensor(rng, shape, false);
  return gradcheck([&] { return project(op(a, b), w); }, {a, b});
}

}  // namespace detail

inline std::vector<PrimitiveCase> primitive_cases() {
  using namespace detail;
  std::vector<PrimitiveCase> cases;
  cases.push_back({"add", [](std::uint64_t s) { return binary_case(s, ad::add); }});
  cases.push_back({"sub", [](std::uint64_t s) { return binary_case(s, ad::sub); }});
  cases.push_back({"mul", [](std::uint64_t s) { return binary_case(s, ad::mul); }});
  cases.push_back({"div", [](std::uint64_t s) { return binary_case(s, ad::div, 0.5, 2.0); }});
  cases.push_back({"maximum", [](std::uint64_t s) { return binary_case(s, ad::maximum); }});
  cases.push_back({"minimum", [](std::uint64_t s) { return binary_case(s, ad::minimum); }});
  cases.push_back({"scale", [](std::uint64_t s) {
                     return unary_case(s, [](const ad::Tensor& x) { return ad::scale(x, -1.7); });
                   }});
  cases.push_back({"add_scalar", [](std::uint64_t s) {
                     return unary_case(s, [](const ad::Tensor& x) { return ad::add_scalar(x, 0.3); });
                   }});
  cases.push_back({"relu", [](std::uint64_t s) {
                     return unary_case(s, [](const ad::Tensor& x) { return ad::relu(x); });
                   }});
  cases.push_back({"sigmoid", [](std::uint64_t s) {
                     return unary_case(s, [](const ad::Tensor& x) { return ad::sigmoid(x); }, -4, 4);
                   }});
  cases.push_back({"exp", [](std::uint64_t s) {
                     return unary_case(s, [](const ad::Tensor& x) { return ad::exp(x); });
                   }});
  cases.push_back({"log", [](std::uint64_t s) {
                     return unary_case(s, [](const ad::Tensor& x) { return ad::log(x); }, 0.2, 3.0);
                   }});
  cases.push_back({"abs", [](std::uint64_t s) {
                     return unary_case(s, [](const ad::Tensor& x) { return ad::abs(x); });
                   }});
  cases.push_back({"mean", [](std::uint64_t s) {
                     std::mt19937_64 rng(s);
                     auto x = random_tensor(rng, {dim_in(rng, 1, 4), dim_in(rng, 1, 4)});
                     return gradcheck([&] { return ad::scale(ad::mean(ad::mul(x, x)), 3.0); }, {x});
                   }});
  cases.push_back({"sum_last", [](std::uint64_t s) {
                     std::mt19937_64 rng(s);
                     const std::size_t r = dim_in(rng, 1, 4), c = dim_in(rng, 1, 5);
                     auto x = random_tensor(rng, {r, c});
                     auto w = random_tensor(rng, {r}, false);
                     return gradcheck([&] { return project(ad::sum_last(x), w); }, {x});
                   }});
  cases.push_back({"matmul", [](std::uint64_t s) {
                     std::mt19937_64 rng(s);
                     const std::size_t m = dim_in(rng, 1, 5), k = dim_in(rng, 1, 5), n = dim_in(rng, 1, 5);
                     auto a = random_tensor(rng, {m, k});
                     auto b = random_tensor(rng, {k, n});
                     auto w = random_tensor(rng, {m, n}, false);
                     return gradcheck([&] { return project(ad::matmul(a, b), w); }, {a, b});
                   }});
  cases.push_back({"transpose", [](std::uint64_t s) {
                     std::mt19937_64 rng(s);
                     const std::size_t m = dim_in(rng, 1, 5), n = dim_in(rng, 1, 5);
                     auto x = random_tensor(rng, {m, n});
                     auto w = random_tensor(rng, {n, m}, false);
                     return gradcheck([&] { return project(ad::transpose(x), w); }, {x});
                   }});
  cases.push_back({"reshape", [](std::uint64_t s) {
                     std::mt19937_64 rng(s);
                     const std::size_t m = dim_in(rng, 1, 4), n = dim_in(rng, 1, 4);
                     auto x = random_tensor(rng, {m, n});
                     auto w = random_tensor(rng, {n * m}, false);
                     return gradcheck([&] { return project(ad::reshape(x, {n * m}), w); }, {x});
                   }});
  cases.push_back({"concat", [](std::uint64_t s) {
                     std::mt19937_64 rng(s);
                     const std::size_t axis = dim_in(rng, 0, 1);
                     const std::size_t r = dim_in(rng, 1, 4), c = dim_in(rng, 1, 4);
                     const std::size_t e1 = dim_in(rng, 1, 3), e2 = dim_in(rng, 1, 3);
                     auto a = random_tensor(rng, axis == 0 ? ad::Shape{e1, c} : ad::Shape{r, e1});
                     auto b = random_tensor(rng, axis == 0 ? ad::Shape{e2, c} : ad::Shape{r, e2});
                     auto w = random_tensor(rng, axis == 0 ? ad::Shape{e1 + e2, c} : ad::Shape{r, e1 + e2}, false);
                     return gradcheck([&] { return project(ad::concat({a, b}, axis), w); }, {a, b});
                   }});
  cases.push_back({"slice", [](std::uint64_t s) {
                     std::mt19937_64 rng(s);
                     const std::size_t r = dim_in(rng, 2, 5), c = dim_in(rng, 2, 5);
                     const std::size_t axis = dim_in(rng, 0, 1);
                     const std::size_t extent = axis == 0 ? r : c;
                     const std::size_t b = dim_in(rng, 0, extent - 1);
                     const std::size_t e = dim_in(rng, b + 1, extent);
                     auto x = random_tensor(rng, {r, c});
                     ad::Shape ws = axis == 0 ? ad::Shape{e - b, c} : ad::Shape{r, e - b};
                     auto w = random_tensor(rng, ws, false);
                     return gradcheck([&] { return project(ad::slice(x, axis, b, e), w); }, {x});
                   }});
  cases.push_back({"softmax", [](std::uint64_t s) {
                     std::mt19937_64 rng(s);
                     ad::Shape shape{dim_in(rng, 1, 3), dim_in(rng, 1, 4), dim_in(rng, 2, 4)};
                     const std::size_t axis = dim_in(rng, 0, 2);
                     auto x = random_tensor(rng, shape, true, -2, 2);
                     auto w = random_tensor(rng, shape, false);
                     return gradcheck([&] { return project(ad::softmax(x, axis), w); }, {x});
                   }});
  cases.push_back({"layer_norm", [](std::uint64_t s) {
                     std::mt19937_64 rng(s);
                     const std::size_t r = dim_in(rng, 1, 4), c = dim_in(rng, 2, 6);
                     auto x = random_tensor(rng, {r, c}, true, -2, 2);
                     auto g = random_tensor(rng, {c}, true, 0.5, 1.5);
                     auto b = random_tensor(rng, {c});
                     auto w = random_tensor(rng, {r, c}, false);
                     return gradcheck([&] { return project(ad::layer_norm(x, g, b), w); }, {x, g, b});
                   }});
  cases.push_back({"linear", [](std::uint64_t s) {
                     std::mt19937_64 rng(s);
                     const std::size_t r = dim_in(rng, 1, 4), in = dim_in(rng, 1, 5), out = dim_in(rng, 1, 5);
                     auto x = random_tensor(rng, {r, in});
                     auto wt = random_tensor(rng, {out, in});
                     auto b = random_tensor(rng, {out});
                     auto w = random_tensor(rng, {r, out}, false);
                     return gradcheck([&] { return project(ad::linear(x, wt, b), w); }, {x, wt, b});
                   }});
  cases.push_back({"embedding_lookup", [](std::uint64_t s) {
                     std::mt19937_64 rng(s);
                     const std::size_t v = dim_in(rng, 2, 6), d = dim_in(rng, 1, 4), n = dim_in(rng, 1, 6);
                     std::vector<std::size_t> idx(n);
                     for (auto& i : idx) i = dim_in(rng, 0, v - 1);
                     auto table = random_tensor(rng, {v, d});
                     auto w = random_tensor(rng, {n, d}, false);
                     return gradcheck([&] { return project(ad::embedding_lookup(table, idx), w); }, {table});
                   }});
  cases.push_back({"cross_entropy", [](std::uint64_t s) {
                     std::mt19937_64 rng(s);
                     const std::size_t r = dim_in(rng, 1, 4), k = dim_in(rng, 2, 6);
                     std::vector<std::size_t> t(r);
                     std::vector<double> wts(r);
                     for (std::size_t i = 0; i < r; ++i) {
                       t[i] = dim_in(rng, 0, k - 1);
                       wts[i] = std::uniform_real_distribution<double>(0.1, 2.0)(rng);
                     }
                     auto z = random_tensor(rng, {r, k}, true, -3, 3);
                     return gradcheck([&] { return ad::cross_entropy(z, t, wts); }, {z});
                   }});
  cases.push_back({"conv2d", [](std::uint64_t s) {
                     std::mt19937_64 rng(s);
                     const std::size_t h = dim_in(rng, 3, 6), w = dim_in(rng, 3, 6);
                     const std::size_t cin = dim_in(rng, 1, 3), cout = dim_in(rng, 1, 3);
                     const std::size_t stride = dim_in(rng, 1, 2), pad = dim_in(rng, 0, 1);
                     auto x = random_tensor(rng, {h, w, cin});
                     auto wt = random_tensor(rng, {cout, 3, 3, cin});
                     auto b = random_tensor(rng, {cout});
                     auto probe = ad::conv2d(x.detach(), wt.detach(), b.detach(), stride, pad);
                     auto proj = random_tensor(rng, probe.shape(), false);
                     return gradcheck([&] { return project(ad::conv2d(x, wt, b, stride, pad), proj); },
                                      {x, wt, b});
                   }});
  cases.push_back({"multi_head_attention", [](std::uint64_t s) {
                     std::mt19937_64 rng(s);
                     const std::size_t heads = dim_in(rng, 1, 3), dh = dim_in(rng, 1, 3);
                     const std::size_t lq = dim_in(rng, 1, 4), lk = dim_in(rng, 1, 5);
                     const std::size_t d = heads * dh;
                     auto q = random_tensor(rng, {lq, d}, true, -2, 2);
                     auto k = random_tensor(rng, {lk, d}, true, -2, 2);
                     auto v = random_tensor(rng, {lk, d});
                     auto w = random_tensor(rng, {lq, d}, false);
                     return gradcheck(
                         [&] { return project(ad::multi_head_attention(q, k, v, heads).output, w); },
                         {q, k, v});
                   }});
  return cases;
}

}  // namespace hoit::testing
