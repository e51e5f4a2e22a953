#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "mcepl/bitmask.hpp"
#include "mcepl/error.hpp"
#include "mcepl/tensor.hpp"
#include "mcepl/topology.hpp"

namespace mcepl {

// Wire layout of a mask frame (all integers little-endian):
//
//   header   16 bytes   magic "MCPL" | version u16 | layer count u16 | sender u32 | round u32
//   segment  per layer, ascending layer index:
//              layer index u32 | entry count u32 | ceil(count/8) payload bytes
//
// Payload bits are packed LSB-first: entry k lives in bit (k % 8) of byte k / 8.
// Unused bits of the last byte must be zero.

inline constexpr std::array<std::uint8_t, 4> kFrameMagic{'M', 'C', 'P', 'L'};
inline constexpr std::uint16_t kFrameVersion = 1;
inline constexpr std::size_t kFrameHeaderBytes = 16;
inline constexpr std::size_t kSegmentHeaderBytes = 8;

/// Bytes of framing (frame header plus per-segment descriptors) for a frame of `layers` segments.
inline constexpr std::size_t frame_overhead_bytes(std::size_t layers) {
  return kFrameHeaderBytes + kSegmentHeaderBytes * layers;
}

struct MaskFrame {
  std::uint32_t sender = 0;
  std::uint32_t round = 0;
  std::vector<std::uint8_t> bytes;
  std::size_t header_bytes = 0;  // framing bytes, excluding payload
  std::size_t payload_bits = 0;  // one per mask entry, padding excluded

  friend bool operator==(const MaskFrame&, const MaskFrame&) = default;
};

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

inline std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

}  // namespace detail

inline MaskFrame encode_mask(const BitMaskSet& masks, std::uint32_t sender, std::uint32_t round) {
  if (masks.size() > 0xFFFF) throw ArgumentError("too many layers for one frame");
  MaskFrame f{sender, round, {}, frame_overhead_bytes(masks.size()), 0};
  std::size_t total = f.header_bytes;
  for (const auto& [l, m] : masks) total += (m.size() + 7) / 8;
  f.bytes.reserve(total);
  for (auto c : kFrameMagic) f.bytes.push_back(c);
  detail::put_u16(f.bytes, kFrameVersion);
  detail::put_u16(f.bytes, static_cast<std::uint16_t>(masks.size()));
  detail::put_u32(f.bytes, sender);
  detail::put_u32(f.bytes, round);
  for (const auto& [l, m] : masks) {
    if (l > 0xFFFFFFFFu || m.size() > 0xFFFFFFFFu) throw ArgumentError("segment too large for the frame format");
    detail::put_u32(f.bytes, static_cast<std::uint32_t>(l));
    detail::put_u32(f.bytes, static_cast<std::uint32_t>(m.size()));
    const std::size_t start = f.bytes.size();
    f.bytes.resize(start + (m.size() + 7) / 8, 0);
    for (std::size_t k = 0; k < m.size(); ++k) {
      if (m[k]) f.bytes[start + k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
    }
    f.payload_bits += m.size();
  }
  return f;
}

/// Strict inverse of encode_mask. `expected` gives the shape of every layer
/// the frame must carry; anything else is a ProtocolError.
inline BitMaskSet decode_mask(const MaskFrame& frame, const LayerMap<Shape>& expected) {
  const auto& b = frame.bytes;
  if (b.size() < kFrameHeaderBytes) throw ProtocolError("frame shorter than its header");
  if (!std::equal(kFrameMagic.begin(), kFrameMagic.end(), b.begin())) throw ProtocolError("bad frame magic");
  if (detail::get_u16(&b[4]) != kFrameVersion) {
    throw ProtocolError("unsupported frame version " + std::to_string(detail::get_u16(&b[4])));
  }
  const std::size_t layers = detail::get_u16(&b[6]);
  if (layers != expected.size()) {
    throw ProtocolError("frame carries " + std::to_string(layers) + " layers, expected " +
                        std::to_string(expected.size()));
  }
  if (detail::get_u32(&b[8]) != frame.sender || detail::get_u32(&b[12]) != frame.round) {
    throw ProtocolError("frame header disagrees with envelope sender/round");
  }
  BitMaskSet out;
  std::size_t pos = kFrameHeaderBytes;
  std::size_t seg = 0;
  for (const auto& [layer, shape] : expected) {
    const std::string where = "segment " + std::to_string(seg) + " (layer " + std::to_string(layer) + ")";
    if (b.size() < pos + kSegmentHeaderBytes) throw ProtocolError(where + ": truncated descriptor");
    const std::uint32_t l = detail::get_u32(&b[pos]);
    const std::uint32_t count = detail::get_u32(&b[pos + 4]);
    pos += kSegmentHeaderBytes;
    if (l != layer) throw ProtocolError(where + ": carries layer " + std::to_string(l));
    const std::size_t want = shape_size(shape);
    if (count != want) {
      throw ProtocolError(where + ": entry count " + std::to_string(count) + " vs expected " +
                          std::to_string(want));
    }
    const std::size_t nbytes = (want + 7) / 8;
    if (b.size() < pos + nbytes) throw ProtocolError(where + ": truncated payload");
    std::vector<std::uint8_t> bits(want);
    for (std::size_t k = 0; k < want; ++k) bits[k] = (b[pos + k / 8] >> (k % 8)) & 1u;
    if (want % 8 != 0) {
      const std::uint8_t pad_mask = static_cast<std::uint8_t>(0xFFu << (want % 8));
      if (b[pos + nbytes - 1] & pad_mask) throw ProtocolError(where + ": nonzero padding bits");
    }
    pos += nbytes;
    out.emplace(layer, BitMask(shape, std::move(bits)));
    ++seg;
  }
  if (pos != b.size()) throw ProtocolError("trailing bytes after last segment");
  return out;
}

// ---------------------------------------------------------------------------
// Cost accounting
// ---------------------------------------------------------------------------

/// One bit per mask entry.
inline std::uint64_t account_mask_bits(const BitMaskSet& m) { return total_entries(m); }

/// 32 bits per real-valued parameter.
inline std::uint64_t account_real_bits(const ParamSet& p) { return 32ull * total_entries(p); }

struct Traffic {
  std::uint64_t payload_sent = 0;
  std::uint64_t payload_received = 0;
  std::uint64_t header_sent = 0;
  std::uint64_t header_received = 0;
};

/// Per-agent, per-round bit counts. A message to each neighbor is counted
/// separately (no broadcast discount).
class CommLedger {
 public:
  explicit CommLedger(std::size_t agents = 0) : agents_(agents) {}

  std::size_t agents() const noexcept { return agents_; }

  void record(std::uint32_t round, std::size_t sender, std::size_t receiver, std::uint64_t payload_bits,
              std::uint64_t header_bits) {
    if (sender >= agents_ || receiver >= agents_) throw SimulationError("ledger: agent id out of range");
    auto& row = rounds_[round];
    if (row.empty()) row.resize(agents_);
    row[sender].payload_sent += payload_bits;
    row[sender].header_sent += header_bits;
    row[receiver].payload_received += payload_bits;
    row[receiver].header_received += header_bits;
  }

  /// One copy of a message from `sender` to each of its neighbors.
  void record_broadcast(const Graph& g, std::uint32_t round, std::size_t sender, std::uint64_t payload_bits,
                        std::uint64_t header_bits) {
    for (auto j : g.neighbors(sender)) record(round, sender, j, payload_bits, header_bits);
  }

  Traffic round_traffic(std::uint32_t round, std::size_t agent) const {
    auto it = rounds_.find(round);
    if (it == rounds_.end()) return {};
    return it->second.at(agent);
  }

  Traffic round_total(std::uint32_t round) const {
    Traffic t;
    for (std::size_t a = 0; a < agents_; ++a) add(t, round_traffic(round, a));
    return t;
  }

  /// Sum over all rounds up to and including `round`.
  Traffic cumulative(std::size_t agent, std::uint32_t round) const {
    Traffic t;
    for (const auto& [r, row] : rounds_) {
      if (r > round) break;
      add(t, row.at(agent));
    }
    return t;
  }

  Traffic cumulative_total(std::uint32_t round) const {
    Traffic t;
    for (std::size_t a = 0; a < agents_; ++a) add(t, cumulative(a, round));
    return t;
  }

  Traffic total() const {
    Traffic t;
    for (const auto& [r, row] : rounds_) {
      for (const auto& x : row) add(t, x);
    }
    return t;
  }

 private:
  static void add(Traffic& t, const Traffic& x) {
    t.payload_sent += x.payload_sent;
    t.payload_received += x.payload_received;
    t.header_sent += x.header_sent;
    t.header_received += x.header_received;
  }

  std::size_t agents_ = 0;
  std::map<std::uint32_t, std::vector<Traffic>> rounds_;
};

using Outbox = std::map<std::size_t, MaskFrame>;
using Inbox = std::vector<std::vector<MaskFrame>>;

/// Synchronous delivery: every agent must have posted a frame. Agent i
/// receives the frames of exactly its neighbors, in ascending sender id.
inline Inbox exchange(const Graph& g, const Outbox& outbox, CommLedger& ledger, std::uint32_t round) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto it = outbox.find(i);
    if (it == outbox.end()) {
      throw SimulationError("synchronous barrier violated: agent " + std::to_string(i) + " posted no frame");
    }
    if (it->second.sender != i) throw SimulationError("frame sender does not match outbox slot");
  }
  Inbox inbox(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (auto j : g.neighbors(i)) inbox[i].push_back(outbox.at(j));
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& f = outbox.at(i);
    ledger.record_broadcast(g, round, i, f.payload_bits, 8ull * f.header_bytes);
  }
  return inbox;
}

}  // namespace mcepl
