#pragma once

// Straight-line references written against plain vectors, without the
// library's tensor, masking or trainer code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Bits = std::vector<std::uint8_t>;

inline double sgn(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

/// Top-k of |t| (ties to the lower index), then clear every group of `per`
/// entries holding fewer than `min_nonzero` ones.
inline Bits select(const Vec& t, double r, std::size_t per, std::size_t min_nonzero) {
  const std::size_t n = t.size();
  long long k = std::llround(r * static_cast<double>(n));
  k = std::max<long long>(1, std::min<long long>(k, static_cast<long long>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(t[a]) > std::abs(t[b]); });
  Bits m(n, 0);
  for (long long i = 0; i < k; ++i) m[order[static_cast<std::size_t>(i)]] = 1;
  for (std::size_t g = 0; g < n / per; ++g) {
    std::size_t ones = 0;
    for (std::size_t i = g * per; i < (g + 1) * per; ++i) ones += m[i];
    if (ones < min_nonzero) {
      for (std::size_t i = g * per; i < (g + 1) * per; ++i) m[i] = 0;
    }
  }
  return m;
}

/// t + mean|t| * sign(t) * avg
inline Vec fuse(const Vec& t, const Vec& avg) {
  double mean = 0;
  for (double x : t) mean += std::abs(x);
  mean /= static_cast<double>(t.size());
  Vec y(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) y[i] = t[i] + mean * sgn(t[i]) * avg[i];
  return y;
}

inline Vec average(const std::vector<Bits>& masks, std::size_t n) {
  Vec a(n, 0.0);
  if (masks.empty()) return a;
  for (const auto& m : masks) {
    for (std::size_t i = 0; i < n; ++i) a[i] += m[i];
  }
  for (auto& x : a) x /= static_cast<double>(masks.size());
  return a;
}

/// One linear layer of `classes` rows over `features` inputs (a conv whose
/// kernel covers the whole image), mean softmax cross-entropy.
/// Returns d loss / d v for v = w * m.
inline Vec linear_ce_grad(const Vec& w, const Bits& m, const Vec& x, const std::vector<int>& y, std::size_t classes) {
  const std::size_t f = w.size() / classes, batch = y.size();
  Vec g(w.size(), 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    Vec logit(classes, 0.0);
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t k = 0; k < f; ++k) logit[c] += w[c * f + k] * m[c * f + k] * x[b * f + k];
    }
    const double mx = *std::max_element(logit.begin(), logit.end());
    double s = 0;
    for (double v : logit) s += std::exp(v - mx);
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(logit[c] - mx) / s - (static_cast<int>(c) == y[b] ? 1.0 : 0.0);
      for (std::size_t k = 0; k < f; ++k) g[c * f + k] += p * x[b * f + k] / static_cast<double>(batch);
    }
  }
  return g;
}

struct Agent {
  Vec z;
  Bits m;
  std::vector<Bits> neighbor_masks;
  double r = 0.5;
};

struct Step {
  Vec z_half, grad;
  Bits m_half;
};

/// Gradient, half step and the intermediate mask for one agent.
inline Step half_step(const Agent& a, const Vec& w, const Vec& x, const std::vector<int>& y, std::size_t classes,
                      double lr, double lambda, std::size_t min_nonzero) {
  const std::size_t n = w.size(), per = n / classes;
  const Vec gv = linear_ce_grad(w, a.m, x, y, classes);
  Step s;
  s.grad.resize(n);
  for (std::size_t c = 0; c < classes; ++c) {
    double norm = 0;
    for (std::size_t k = 0; k < per; ++k) norm += a.z[c * per + k] * a.z[c * per + k];
    norm = std::sqrt(norm);
    for (std::size_t k = 0; k < per; ++k) {
      const std::size_t i = c * per + k;
      s.grad[i] = gv[i] * w[i] * sgn(a.z[i]) + (norm > 0 ? lambda * a.z[i] / norm : 0.0);
    }
  }
  s.z_half.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.z_half[i] = a.z[i] - lr * s.grad[i];
  s.m_half = select(fuse(s.z_half, average(a.neighbor_masks, n)), a.r, per, min_nonzero);
  return s;
}

/// Fine-tune and aggregate given the intermediate masks received from neighbors.
inline Agent finish(const Agent& a, const Step& s, const std::vector<Bits>& received, std::size_t classes, double lr,
                    std::size_t min_nonzero) {
  const std::size_t n = s.z_half.size();
  const Vec avg = average(received, n);
  Agent out = a;
  out.z.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.z[i] = s.z_half[i] - lr * s.grad[i] * avg[i];
  out.m = select(fuse(out.z, avg), a.r, n / classes, min_nonzero);
  out.neighbor_masks = received;
  return out;
}

/// Brute-force sup/inf of the per-probe max-norm distance of two output lists.
struct Extremes {
  double sup = 0.0;
  double inf = 0.0;
};

inline Extremes max_norm_extremes(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  Extremes e{0.0, INFINITY};
  for (std::size_t p = 0; p < a.size(); ++p) {
    double d = 0.0;
    for (std::size_t k = 0; k < a[p].size(); ++k) d = std::max(d, std::abs(a[p][k] - b[p][k]));
    e.sup = std::max(e.sup, d);
    e.inf = std::min(e.inf, d);
  }
  return e;
}

}  // namespace oracle
