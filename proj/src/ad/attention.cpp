#include "hoit/ad/attention.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "hoit/errors.hpp"

namespace hoit::ad {

AttentionOutput multi_head_attention(const Tensor& query, const Tensor& key,
                                     const Tensor& value, std::size_t heads) {
  if (query.dim() != 2 || key.dim() != 2 || value.dim() != 2 ||
      key.shape() != value.shape() || query.size(1) != key.size(1)) {
    throw ShapeError("multi_head_attention: query " + to_string(query.shape()) +
                     ", key " + to_string(key.shape()) + ", value " +
                     to_string(value.shape()));
  }
  const std::size_t lq = query.size(0), lk = key.size(0), d = query.size(1);
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("multi_head_attention: model width " + std::to_string(d) +
                      " not divisible by " + std::to_string(heads) + " heads");
  }
  for (double v : query.values()) {
    if (!std::isfinite(v)) throw NumericError("multi_head_attention: non-finite query");
  }
  for (double v : key.values()) {
    if (!std::isfinite(v)) throw NumericError("multi_head_attention: non-finite key");
  }
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto qv = query.values();
  const auto kv = key.values();
  const auto vv = value.values();

  auto attn = std::make_shared<std::vector<double>>(heads * lq * lk);
  std::vector<double> out(lq * d, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * dh;
    for (std::size_t i = 0; i < lq; ++i) {
      double* a = attn->data() + (h * lq + i) * lk;
      const double* qi = qv.data() + i * d + c0;
      double mx = -INFINITY;
      for (std::size_t j = 0; j < lk; ++j) {
        const double* kj = kv.data() + j * d + c0;
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
        a[j] = s * scale;
        mx = std::max(mx, a[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < lk; ++j) {
        a[j] = std::exp(a[j] - mx);
        z += a[j];
      }
      double* oi = out.data() + i * d + c0;
      for (std::size_t j = 0; j < lk; ++j) {
        a[j] /= z;
        const double* vj = vv.data() + j * d + c0;
        for (std::size_t c = 0; c < dh; ++c) oi[c] += a[j] * vj[c];
      }
    }
  }

  Tensor weights({heads, lq, lk}, *attn, false);
  Tensor output = make_result(
      {lq, d}, std::move(out), {query, key, value}, "multi_head_attention",
      [=](Node& self) {
        const auto& qv = self.inputs[0]->value;
        const auto& kv = self.inputs[1]->value;
        const auto& vv = self.inputs[2]->value;
        auto grad_of = [&](std::size_t i) -> std::vector<double>* {
          Node& n = *self.inputs[i];
          return n.requires_grad ? &n.grad_buffer() : nullptr;
        };
        auto* gq = grad_of(0);
        auto* gk = grad_of(1);
        auto* gv = grad_of(2);
        const auto& g = self.grad;
        std::vector<double> dscore(lk);
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t c0 = h * dh;
          for (std::size_t i = 0; i < lq; ++i) {
            const double* a = attn->data() + (h * lq + i) * lk;
            const double* gi = g.data() + i * d + c0;
            double dot = 0.0;
            for (std::size_t j = 0; j < lk; ++j) {
              const double* vj = vv.data() + j * d + c0;
              double da = 0.0;
              for (std::size_t c = 0; c < dh; ++c) da += gi[c] * vj[c];
              dscore[j] = da;
              dot += da * a[j];
              if (gv) {
                double* dv = gv->data() + j * d + c0;
                for (std::size_t c = 0; c < dh; ++c) dv[c] += a[j] * gi[c];
              }
            }
            const double* qi = qv.data() + i * d + c0;
            for (std::size_t j = 0; j < lk; ++j) {
              const double ds = a[j] * (dscore[j] - dot) * scale;
              if (ds == 0.0) continue;
              if (gq) {
                double* dq = gq->data() + i * d + c0;
                const double* kj = kv.data() + j * d + c0;
                for (std::size_t c = 0; c < dh; ++c) dq[c] += ds * kj[c];
              }
              if (gk) {
                double* dk = gk->data() + j * d + c0;
                for (std::size_t c = 0; c < dh; ++c) dk[c] += ds * qi[c];
              }
            }
          }
        }
      });
  return {std::move(output), std::move(weights)};
}

Tensor mean_over_heads(const Tensor& weights) {
  if (weights.dim() != 3) {
    throw ShapeError("mean_over_heads: expected [heads x Lq x Lk], got " +
                     to_string(weights.shape()));
  }
  const std::size_t heads = weights.size(0), lq = weights.size(1), lk = weights.size(2);
  std::vector<double> out(lq * lk, 0.0);
  const auto wv = weights.values();
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < lq * lk; ++i) out[i] += wv[h * lq * lk + i];
  }
  for (double& v : out) v /= static_cast<double>(heads);
  return Tensor({lq, lk}, std::move(out), false);
}

}  // namespace hoit::ad
