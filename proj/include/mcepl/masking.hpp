#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "mcepl/bitmask.hpp"
#include "mcepl/error.hpp"
#include "mcepl/tensor.hpp"

namespace mcepl {

/// Real-valued surrogate z whose largest-magnitude entries define the mask.
struct MaskState {
  ParamSet z;
  double retention = 1.0;       // r in (0, 1]
  std::size_t min_nonzero = 2;  // filter-zeroing threshold
};

inline void check_retention(double r) {
  if (!(r > 0.0 && r <= 1.0)) throw ArgumentError("retention ratio must lie in (0, 1], got " + std::to_string(r));
}

/// Number of entries a layer of n entries keeps at retention r.
inline std::size_t retained_count(std::size_t n, double r) {
  check_retention(r);
  const auto k = static_cast<std::size_t>(std::llround(r * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n);
}

/// Layer-wise threshold: exactly retained_count(n, r) ones at the entries of
/// largest |z|. Equal magnitudes are ranked by ascending flat index.
inline BitMask threshold_layer(const Tensor& z, double r) {
  check_retention(r);
  const std::size_t n = z.size();
  if (n == 0) throw ArgumentError("threshold_layer: empty tensor");
  const std::size_t k = retained_count(n, r);
  BitMask out(z.shape());
  if (k == n) return BitMask(z.shape(), true);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto before = [&](std::size_t a, std::size_t b) {
    const double fa = std::abs(z[a]), fb = std::abs(z[b]);
    return fa > fb || (fa == fb && a < b);
  };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(), before);
  for (std::size_t i = 0; i < k; ++i) out.set(idx[i], true);
  return out;
}

/// Filter-zeroing rule. Groups are the slices along the leading (output
/// filter) axis: conv O x (I*H*W), linear O x I. A group holding fewer than
/// min_nonzero ones is cleared.
inline BitMask fil(const BitMask& m, std::size_t min_nonzero) {
  if (min_nonzero == 0 || m.size() == 0) return m;
  const std::size_t groups = m.shape().at(0);
  const std::size_t per = m.size() / groups;
  std::vector<std::uint8_t> bits = m.bits();
  for (std::size_t g = 0; g < groups; ++g) {
    const auto first = bits.begin() + static_cast<std::ptrdiff_t>(g * per);
    const auto last = first + static_cast<std::ptrdiff_t>(per);
    if (static_cast<std::size_t>(std::count(first, last, std::uint8_t{1})) < min_nonzero) {
      std::fill(first, last, std::uint8_t{0});
    }
  }
  return BitMask(m.shape(), std::move(bits));
}

/// Per layer Fil[Thres(t_l)] for any ranked tensor set (z, or an aggregation tensor y).
inline BitMaskSet extract_mask(const ParamSet& ranked, double r, std::size_t min_nonzero) {
  BitMaskSet out;
  for (const auto& [l, t] : ranked) out.emplace(l, fil(threshold_layer(t, r), min_nonzero));
  return out;
}

inline BitMaskSet extract_mask(const MaskState& s) { return extract_mask(s.z, s.retention, s.min_nonzero); }

// Group sparsity: one group per output filter of every masked layer.

inline double group_lasso_value(const ParamSet& z, double lambda) {
  if (lambda < 0.0) throw ArgumentError("lambda must be nonnegative");
  double total = 0.0;
  for (const auto& [l, t] : z) {
    const std::size_t groups = t.dim(0);
    const std::size_t per = t.size() / groups;
    for (std::size_t g = 0; g < groups; ++g) {
      double sq = 0.0;
      for (std::size_t i = g * per; i < (g + 1) * per; ++i) sq += t[i] * t[i];
      total += std::sqrt(sq);
    }
  }
  return lambda * total;
}

inline double group_lasso_value(const MaskState& s, double lambda) { return group_lasso_value(s.z, lambda); }

/// λ z_g / ‖z_g‖₂ per group; zero on groups of zero norm.
inline ParamSet group_lasso_grad(const ParamSet& z, double lambda) {
  if (lambda < 0.0) throw ArgumentError("lambda must be nonnegative");
  ParamSet out;
  for (const auto& [l, t] : z) {
    Tensor g(t.shape());
    const std::size_t groups = t.dim(0);
    const std::size_t per = t.size() / groups;
    for (std::size_t k = 0; k < groups; ++k) {
      double sq = 0.0;
      for (std::size_t i = k * per; i < (k + 1) * per; ++i) sq += t[i] * t[i];
      if (sq == 0.0 || lambda == 0.0) continue;
      const double scale = lambda / std::sqrt(sq);
      for (std::size_t i = k * per; i < (k + 1) * per; ++i) g[i] = scale * t[i];
    }
    out.emplace(l, std::move(g));
  }
  return out;
}

inline ParamSet group_lasso_grad(const MaskState& s, double lambda) { return group_lasso_grad(s.z, lambda); }

}  // namespace mcepl
