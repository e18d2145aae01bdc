#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mtal/common.hpp"

namespace mtal {

enum class MessageKind : std::uint16_t {
  kResidual = 1,
  kPrediction = 2,
  kBarrier = 3,
  kAbort = 4,
};

inline constexpr std::uint16_t kWireVersion = 1;

/// One message between two domains. Cells are (aligned entity id, global
/// column) pairs sorted ascending; `values` holds `planes` consecutive blocks
/// of one value per cell.
struct Shard {
  MessageKind kind = MessageKind::kResidual;
  std::uint32_t round = 0;
  std::uint32_t sender = 0;
  std::uint32_t receiver = 0;
  std::uint64_t planes = 1;
  std::vector<std::uint32_t> rows;
  std::vector<std::uint32_t> cols;
  std::vector<float> values;

  std::size_t cells() const { return rows.size(); }
  std::span<const float> plane(std::size_t p) const {
    return std::span<const float>(values).subspan(p * cells(), cells());
  }

  bool operator==(const Shard&) const = default;
};

/// Wire layout, little-endian: "MTALMSG1", u16 version, u16 kind, u32 round,
/// u32 sender, u32 receiver, u64 planes, u64 cells, cells x (u32 row, u32 col),
/// planes x cells x f32, then u32 CRC32 of everything before it.
std::vector<std::byte> encode_shard(const Shard& shard);
Shard decode_shard(std::span<const std::byte> bytes);

class DecodeError : public Error {
 public:
  using Error::Error;
};

}  // namespace mtal
