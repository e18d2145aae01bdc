#include <cstring>
#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "mtal/transport/bus.hpp"

namespace mtal {
namespace {

using namespace std::chrono_literals;

Shard random_shard(std::uint64_t seed, std::uint64_t planes = 2) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> id(0, 50);
  std::normal_distribution<float> val(0.0f, 3.0f);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> cells;
  for (int i = 0; i < 40; ++i) cells.emplace_back(id(rng), id(rng));
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  Shard s;
  s.kind = MessageKind::kPrediction;
  s.round = 7;
  s.sender = 2;
  s.receiver = 1;
  s.planes = planes;
  for (auto [r, c] : cells) {
    s.rows.push_back(r);
    s.cols.push_back(c);
  }
  for (std::size_t i = 0; i < planes * cells.size(); ++i) s.values.push_back(val(rng));
  return s;
}

TEST(Codec, RoundTripsRandomShards) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = random_shard(seed, 1 + seed % 3);
    const auto bytes = encode_shard(s);
    EXPECT_EQ(decode_shard(bytes), s);
    EXPECT_EQ(encode_shard(decode_shard(bytes)), bytes);
  }
  Shard empty;
  empty.planes = 0;
  EXPECT_EQ(decode_shard(encode_shard(empty)), empty);
}

TEST(Codec, PreservesFloatBitsIncludingNegativeZero) {
  Shard s;
  s.rows = {0, 0, 1};
  s.cols = {1, 2, 0};
  s.values = {-0.0f, 1e-38f, 3.4e38f};
  const auto back = decode_shard(encode_shard(s));
  ASSERT_EQ(back.values.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    std::uint32_t a, b;
    std::memcpy(&a, &s.values[i], 4);
    std::memcpy(&b, &back.values[i], 4);
    EXPECT_EQ(a, b);
  }
}

TEST(Codec, DetectsEveryFlippedByte) {
  const auto bytes = encode_shard(random_shard(3));
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    auto bad = bytes;
    bad[i] ^= std::byte{0x5a};
    EXPECT_THROW(decode_shard(bad), DecodeError) << "byte " << i;
  }
  EXPECT_THROW(decode_shard(std::span(bytes).first(bytes.size() - 1)), DecodeError);
  EXPECT_THROW(decode_shard(std::span(bytes).first(10)), DecodeError);
}

TEST(Codec, RejectsMalformedShards) {
  auto s = random_shard(1);
  auto unsorted = s;
  std::swap(unsorted.rows[0], unsorted.rows[1]);
  std::swap(unsorted.cols[0], unsorted.cols[1]);
  EXPECT_THROW(encode_shard(unsorted), Error);
  auto short_values = s;
  short_values.values.pop_back();
  EXPECT_THROW(encode_shard(short_values), Error);
  auto nan = s;
  nan.values[0] = std::nanf("");
  EXPECT_THROW(encode_shard(nan), Error);
}

Shard message(std::uint32_t from, std::uint32_t to, std::uint32_t round, float v) {
  Shard s;
  s.sender = from;
  s.receiver = to;
  s.round = round;
  s.rows = {from};
  s.cols = {to};
  s.values = {v};
  return s;
}

class BusBackends : public ::testing::TestWithParam<BusBackend> {
 protected:
  std::unique_ptr<Bus> make(std::size_t k) { return make_bus(GetParam(), k, "127.0.0.1", 0); }
};

TEST_P(BusBackends, AllToAllExchangeAcrossThreads) {
  const std::uint32_t K = 4;
  auto bus = make(K);
  std::vector<std::vector<Shard>> got(K);
  std::vector<std::thread> workers;
  for (std::uint32_t k = 0; k < K; ++k) {
    workers.emplace_back([&, k] {
      for (std::uint32_t round = 1; round <= 3; ++round) {
        std::vector<std::uint32_t> peers;
        for (std::uint32_t l = 0; l < K; ++l) {
          if (l == k) continue;
          bus->send(message(k, l, round, static_cast<float>(10 * k + l + round)));
          peers.push_back(l);
        }
        auto in = bus->collect(k, round, MessageKind::kResidual, peers, 10s);
        got[k].insert(got[k].end(), in.begin(), in.end());
      }
    });
  }
  for (auto& w : workers) w.join();
  for (std::uint32_t k = 0; k < K; ++k) {
    ASSERT_EQ(got[k].size(), 3u * (K - 1));
    std::size_t i = 0;
    for (std::uint32_t round = 1; round <= 3; ++round) {
      for (std::uint32_t l = 0; l < K; ++l) {
        if (l == k) continue;
        EXPECT_EQ(got[k][i], message(l, k, round, static_cast<float>(10 * l + k + round)));
        ++i;
      }
    }
    for (std::uint32_t l = 0; l < K; ++l) {
      if (l == k) continue;
      EXPECT_EQ(bus->delivered(l, k, MessageKind::kResidual), 3u);
    }
  }
}

TEST_P(BusBackends, TimeoutAbortsEveryEndpoint) {
  auto bus = make(2);
  try {
    bus->collect(0, 1, MessageKind::kResidual, {1}, 50ms);
    FAIL() << "collect should time out";
  } catch (const AbortError& e) {
    EXPECT_EQ(e.round(), 1u);
    EXPECT_NE(std::string(e.what()).find("timed out"), std::string::npos);
  }
  EXPECT_THROW(bus->collect(1, 1, MessageKind::kResidual, {0}, 1s), AbortError);
}

TEST_P(BusBackends, AbortWakesABlockedCollector) {
  auto bus = make(3);
  std::thread t([&] {
    std::this_thread::sleep_for(50ms);
    bus->abort(2, 4, "domain 2 failed");
  });
  const auto start = std::chrono::steady_clock::now();
  EXPECT_THROW(bus->collect(0, 4, MessageKind::kResidual, {1, 2}, 20s), AbortError);
  t.join();
  EXPECT_LT(std::chrono::steady_clock::now() - start, 10s);
}

TEST_P(BusBackends, DuplicateMessageIsAProtocolError) {
  auto bus = make(2);
  bus->send(message(1, 0, 2, 1.0f));
  bus->send(message(1, 0, 2, 2.0f));
  EXPECT_THROW(bus->collect(0, 2, MessageKind::kResidual, {1}, 5s), ProtocolError);
}

TEST_P(BusBackends, TapSeesEncodedEnvelopes) {
  auto bus = make(2);
  std::vector<std::vector<std::byte>> seen;
  std::mutex m;
  bus->set_tap([&](std::span<const std::byte> b) {
    std::lock_guard lock(m);
    seen.emplace_back(b.begin(), b.end());
  });
  const auto s = message(0, 1, 1, 4.5f);
  bus->send(s);
  EXPECT_EQ(bus->collect(1, 1, MessageKind::kResidual, {0}, 5s).front(), s);
  std::lock_guard lock(m);
  ASSERT_EQ(seen.size(), 1u);
  EXPECT_EQ(seen[0], encode_shard(s));
}

INSTANTIATE_TEST_SUITE_P(InProcessAndTcp, BusBackends, ::testing::Values(BusBackend::kInProcess, BusBackend::kTcp),
                         [](const auto& info) { return info.param == BusBackend::kTcp ? "tcp" : "inprocess"; });

TEST(Bus, OutOfRangeEndpointsAreRejected) {
  InProcessBus bus(2);
  EXPECT_THROW(bus.send(message(0, 5, 1, 0.0f)), ProtocolError);
  EXPECT_THROW(bus.collect(9, 1, MessageKind::kResidual, {0}, 1ms), ProtocolError);
  EXPECT_THROW(InProcessBus(0), ConfigError);
  EXPECT_THROW(parse_bus_backend("carrier-pigeon"), ConfigError);
}

}  // namespace
}  // namespace mtal
