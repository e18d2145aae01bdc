#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "mtal/transport/shard.hpp"

namespace mtal {

class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Raised by collect after some endpoint aborted the run, or on timeout.
class AbortError : public Error {
 public:
  AbortError(const std::string& what, std::uint32_t round) : Error(what), round_(round) {}
  std::uint32_t round() const { return round_; }

 private:
  std::uint32_t round_;
};

/// Observes every encoded envelope that crosses the bus.
using BusTap = std::function<void(std::span<const std::byte>)>;

/// Message bus between K endpoints. Every shard is encoded, moved through the
/// backend as bytes and decoded into the receiver's mailbox, so all backends
/// see identical bytes. Safe for one sending and one collecting thread per
/// endpoint.
class Bus {
 public:
  explicit Bus(std::size_t endpoints);
  virtual ~Bus();
  Bus(const Bus&) = delete;
  Bus& operator=(const Bus&) = delete;

  std::size_t num_endpoints() const { return mailboxes_.size(); }

  void send(const Shard& shard);
  void broadcast(const std::vector<Shard>& shards);

  /// Blocks until one message of `kind` for `round` has arrived from every
  /// sender in `senders`; returns them in `senders` order. On timeout the run
  /// is aborted on every endpoint.
  std::vector<Shard> collect(std::uint32_t receiver, std::uint32_t round, MessageKind kind,
                             const std::vector<std::uint32_t>& senders, std::chrono::milliseconds timeout);

  /// Tells every endpoint to stop; later and pending collects throw.
  void abort(std::uint32_t sender, std::uint32_t round, const std::string& reason);

  void set_tap(BusTap tap);

  /// Messages of `kind` delivered from `sender` to `receiver` so far.
  std::uint64_t delivered(std::uint32_t sender, std::uint32_t receiver, MessageKind kind) const;

 protected:
  /// Moves encoded bytes from `sender` towards `receiver`; the backend must
  /// eventually call deliver() with the same bytes.
  virtual void transmit(std::uint32_t sender, std::uint32_t receiver, std::vector<std::byte> bytes) = 0;
  void deliver(std::span<const std::byte> bytes);
  void fail_all(const std::string& reason);

 private:
  struct Mailbox {
    std::mutex mutex;
    std::condition_variable ready;
    std::map<std::tuple<std::uint32_t, std::uint16_t, std::uint32_t>, Shard> inbox;  // (round, kind, sender)
    std::optional<std::string> error;
  };
  void post_error(Mailbox& box, const std::string& reason);

  std::vector<std::unique_ptr<Mailbox>> mailboxes_;
  mutable std::mutex tap_mutex_;
  BusTap tap_;
  mutable std::mutex count_mutex_;
  std::map<std::tuple<std::uint32_t, std::uint32_t, std::uint16_t>, std::uint64_t> counts_;
};

class InProcessBus final : public Bus {
 public:
  using Bus::Bus;

 protected:
  void transmit(std::uint32_t sender, std::uint32_t receiver, std::vector<std::byte> bytes) override;
};

/// Loopback TCP backend: a hub accepts one connection per endpoint and routes
/// length-prefixed (4-byte big-endian) envelopes by their receiver field.
class TcpBus final : public Bus {
 public:
  /// port 0 picks an ephemeral port.
  TcpBus(std::size_t endpoints, const std::string& host = "127.0.0.1", std::uint16_t port = 7164);
  ~TcpBus() override;

  std::uint16_t port() const;

 protected:
  void transmit(std::uint32_t sender, std::uint32_t receiver, std::vector<std::byte> bytes) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

enum class BusBackend { kInProcess, kTcp };
BusBackend parse_bus_backend(std::string_view name);

std::unique_ptr<Bus> make_bus(BusBackend backend, std::size_t endpoints, const std::string& host = "127.0.0.1",
                              std::uint16_t port = 7164);

}  // namespace mtal
