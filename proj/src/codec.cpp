#include <cmath>

#include <zlib.h>

#include "mtal/binary_io.hpp"
#include "mtal/transport/shard.hpp"

namespace mtal {
namespace {

constexpr char kMagic[9] = "MTALMSG1";
constexpr std::size_t kHeaderBytes = 8 + 2 + 2 + 4 + 4 + 4 + 8 + 8;

std::uint32_t crc_of(std::span<const std::byte> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces
  constexpr std::size_t kPiece = std::size_t{1} << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kPiece) {
    const auto n = std::min(kPiece, bytes.size() - off);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::byte> encode_shard(const Shard& s) {
  if (s.cols.size() != s.rows.size()) throw Error("encode_shard: row and column counts differ");
  if (s.values.size() != s.planes * s.cells()) throw Error("encode_shard: value count != planes x cells");
  for (std::size_t i = 1; i < s.cells(); ++i) {
    if (s.rows[i] < s.rows[i - 1] || (s.rows[i] == s.rows[i - 1] && s.cols[i] <= s.cols[i - 1])) {
      throw Error("encode_shard: cells must be strictly ascending by (row, column)");
    }
  }
  for (float v : s.values) {
    if (!std::isfinite(v)) throw Error("encode_shard: non-finite value");
  }
  io::ByteWriter w;
  w.reserve(kHeaderBytes + s.cells() * 8 + s.values.size() * 4 + 4);
  w.put_bytes(std::as_bytes(std::span<const char>(kMagic, 8)));
  w.put(kWireVersion);
  w.put(static_cast<std::uint16_t>(s.kind));
  w.put(s.round);
  w.put(s.sender);
  w.put(s.receiver);
  w.put(s.planes);
  w.put(static_cast<std::uint64_t>(s.cells()));
  for (std::size_t i = 0; i < s.cells(); ++i) {
    w.put(s.rows[i]);
    w.put(s.cols[i]);
  }
  for (float v : s.values) w.put(v);
  w.put(crc_of(w.bytes()));
  return std::move(w.bytes());
}

Shard decode_shard(std::span<const std::byte> bytes) {
  if (bytes.size() < kHeaderBytes + 4) throw DecodeError("decode_shard: truncated message");
  const auto body = bytes.first(bytes.size() - 4);
  io::ByteReader footer(bytes.last(4));
  if (footer.get<std::uint32_t>("checksum") != crc_of(body)) throw DecodeError("decode_shard: checksum mismatch");

  io::ByteReader r(body);
  const auto magic = r.take(8, "magic");
  if (std::memcmp(magic.data(), kMagic, 8) != 0) throw DecodeError("decode_shard: bad magic");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kWireVersion) {
    throw DecodeError("decode_shard: unsupported wire version " + std::to_string(version));
  }
  Shard s;
  const auto kind = r.get<std::uint16_t>("kind");
  if (kind < 1 || kind > 4) throw DecodeError("decode_shard: unknown message kind");
  s.kind = static_cast<MessageKind>(kind);
  s.round = r.get<std::uint32_t>("round");
  s.sender = r.get<std::uint32_t>("sender");
  s.receiver = r.get<std::uint32_t>("receiver");
  s.planes = r.get<std::uint64_t>("planes");
  const auto cells = r.get<std::uint64_t>("cells");
  // size check before allocating
  if (cells > r.remaining() / 8 || (cells > 0 && s.planes > (r.remaining() - cells * 8) / (cells * 4)) ||
      r.remaining() != cells * 8 + s.planes * cells * 4) {
    throw DecodeError("decode_shard: length does not match the declared counts");
  }
  s.rows.resize(cells);
  s.cols.resize(cells);
  for (std::uint64_t i = 0; i < cells; ++i) {
    s.rows[i] = r.get<std::uint32_t>("row");
    s.cols[i] = r.get<std::uint32_t>("col");
  }
  s.values.resize(s.planes * cells);
  for (auto& v : s.values) v = r.get<float>("value");
  return s;
}

}  // namespace mtal
