#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "mcepl/tensor.hpp"

namespace mcepl {

/// Binary tensor, one {0,1} entry per element of the paired parameter tensor.
/// Entries are held unpacked for arithmetic; protocol.hpp packs them for the wire.
class BitMask {
 public:
  BitMask() = default;

  explicit BitMask(Shape shape, bool value = false)
      : shape_(std::move(shape)), bits_(shape_size(shape_), value ? 1 : 0) {}

  BitMask(Shape shape, std::vector<std::uint8_t> bits) : shape_(std::move(shape)), bits_(std::move(bits)) {
    if (bits_.size() != shape_size(shape_)) {
      throw ArgumentError("mask length " + std::to_string(bits_.size()) + " does not match shape " +
                          shape_string(shape_));
    }
    for (auto& b : bits_) {
      if (b > 1) throw ArgumentError("mask entries must be 0 or 1");
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool operator[](std::size_t i) const noexcept { return bits_[i] != 0; }
  void set(std::size_t i, bool v) noexcept { bits_[i] = v ? 1 : 0; }

  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }

  friend bool operator==(const BitMask&, const BitMask&) = default;

 private:
  Shape shape_;
  std::vector<std::uint8_t> bits_;
};

using BitMaskSet = LayerMap<BitMask>;

inline BitMaskSet full_masks(const ParamSet& params, bool value = true) {
  BitMaskSet out;
  for (const auto& [layer, t] : params) out.emplace(layer, BitMask(t.shape(), value));
  return out;
}

inline std::size_t total_entries(const BitMaskSet& m) {
  std::size_t n = 0;
  for (const auto& [layer, mask] : m) n += mask.size();
  return n;
}

inline std::size_t total_ones(const BitMaskSet& m) {
  std::size_t n = 0;
  for (const auto& [layer, mask] : m) n += mask.count();
  return n;
}

/// v = w ⊙ m.
inline Tensor apply_mask(const Tensor& w, const BitMask& m) {
  if (w.shape() != m.shape()) {
    throw ArgumentError("mask shape " + shape_string(m.shape()) + " does not match parameter shape " +
                        shape_string(w.shape()));
  }
  Tensor v = w;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!m[i]) v[i] = 0.0;
  }
  return v;
}

}  // namespace mcepl
