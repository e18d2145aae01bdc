#include "mtal/transport/bus.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "mtal/binary_io.hpp"

namespace mtal {

Bus::Bus(std::size_t endpoints) {
  if (endpoints == 0) throw ConfigError("bus needs at least one endpoint");
  for (std::size_t i = 0; i < endpoints; ++i) mailboxes_.push_back(std::make_unique<Mailbox>());
}

Bus::~Bus() = default;

void Bus::send(const Shard& shard) {
  if (shard.sender >= num_endpoints() || shard.receiver >= num_endpoints()) {
    throw ProtocolError("send: endpoint id out of range");
  }
  auto bytes = encode_shard(shard);
  {
    std::lock_guard lock(tap_mutex_);
    if (tap_) tap_(bytes);
  }
  transmit(shard.sender, shard.receiver, std::move(bytes));
}

void Bus::broadcast(const std::vector<Shard>& shards) {
  for (const auto& s : shards) send(s);
}

void Bus::deliver(std::span<const std::byte> bytes) {
  Shard shard;
  try {
    shard = decode_shard(bytes);
  } catch (const DecodeError& e) {
    fail_all(std::string("undecodable message: ") + e.what());
    return;
  }
  if (shard.receiver >= num_endpoints() || shard.sender >= num_endpoints()) {
    fail_all("message addressed to an unknown endpoint");
    return;
  }
  {
    std::lock_guard lock(count_mutex_);
    ++counts_[{shard.sender, shard.receiver, static_cast<std::uint16_t>(shard.kind)}];
  }
  auto& box = *mailboxes_[shard.receiver];
  if (shard.kind == MessageKind::kAbort) {
    post_error(box, "domain " + std::to_string(shard.sender) + " aborted the run in round " +
                        std::to_string(shard.round));
    return;
  }
  std::lock_guard lock(box.mutex);
  const auto key = std::make_tuple(shard.round, static_cast<std::uint16_t>(shard.kind), shard.sender);
  if (box.inbox.count(key) != 0) {
    if (!box.error) {
      box.error = "protocol error: duplicate message from domain " + std::to_string(shard.sender) + " in round " +
                  std::to_string(shard.round);
    }
  } else {
    box.inbox.emplace(key, std::move(shard));
  }
  box.ready.notify_all();
}

void Bus::post_error(Mailbox& box, const std::string& reason) {
  std::lock_guard lock(box.mutex);
  if (!box.error) box.error = reason;
  box.ready.notify_all();
}

void Bus::fail_all(const std::string& reason) {
  for (auto& box : mailboxes_) post_error(*box, reason);
}

std::vector<Shard> Bus::collect(std::uint32_t receiver, std::uint32_t round, MessageKind kind,
                                const std::vector<std::uint32_t>& senders, std::chrono::milliseconds timeout) {
  if (receiver >= num_endpoints()) throw ProtocolError("collect: endpoint id out of range");
  auto& box = *mailboxes_[receiver];
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  const auto k = static_cast<std::uint16_t>(kind);
  std::unique_lock lock(box.mutex);
  auto complete = [&] {
    for (auto s : senders) {
      if (box.inbox.count({round, k, s}) == 0) return false;
    }
    return true;
  };
  while (!box.error && !complete()) {
    if (box.ready.wait_until(lock, deadline) == std::cv_status::timeout && !box.error && !complete()) {
      std::string missing;
      for (auto s : senders) {
        if (box.inbox.count({round, k, s}) == 0) missing += (missing.empty() ? "" : ",") + std::to_string(s);
      }
      lock.unlock();
      const auto reason = "domain " + std::to_string(receiver) + " timed out in round " + std::to_string(round) +
                          " waiting for domains {" + missing + "}";
      abort(receiver, round, reason);
      throw AbortError(reason, round);
    }
  }
  if (box.error) {
    if (box.error->rfind("protocol error", 0) == 0) throw ProtocolError(*box.error);
    throw AbortError(*box.error, round);
  }
  std::vector<Shard> out;
  out.reserve(senders.size());
  for (auto s : senders) {
    auto it = box.inbox.find({round, k, s});
    out.push_back(std::move(it->second));
    box.inbox.erase(it);
  }
  return out;
}

void Bus::abort(std::uint32_t sender, std::uint32_t round, const std::string& reason) {
  logger()->error("abort: {}", reason);
  for (std::uint32_t r = 0; r < num_endpoints(); ++r) {
    Shard s;
    s.kind = MessageKind::kAbort;
    s.round = round;
    s.sender = sender;
    s.receiver = r;
    s.planes = 0;
    try {
      send(s);
    } catch (const std::exception&) {
      // best effort; local mailboxes are failed below
    }
  }
  fail_all(reason);
}

void Bus::set_tap(BusTap tap) {
  std::lock_guard lock(tap_mutex_);
  tap_ = std::move(tap);
}

std::uint64_t Bus::delivered(std::uint32_t sender, std::uint32_t receiver, MessageKind kind) const {
  std::lock_guard lock(count_mutex_);
  const auto it = counts_.find({sender, receiver, static_cast<std::uint16_t>(kind)});
  return it == counts_.end() ? 0 : it->second;
}

void InProcessBus::transmit(std::uint32_t, std::uint32_t, std::vector<std::byte> bytes) { deliver(bytes); }

// ---------------------------------------------------------------------------

namespace {

void write_all(int fd, const std::byte* data, std::size_t n) {
  while (n > 0) {
    const auto w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("tcp send failed: ") + std::strerror(errno));
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

bool read_all(int fd, std::byte* data, std::size_t n) {
  while (n > 0) {
    const auto r = ::recv(fd, data, n, 0);
    if (r == 0) return false;
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

void write_frame(int fd, std::span<const std::byte> payload) {
  if (payload.size() > 0xffffffffu) throw Error("tcp frame too large");
  const std::uint32_t be = htonl(static_cast<std::uint32_t>(payload.size()));
  write_all(fd, reinterpret_cast<const std::byte*>(&be), 4);
  write_all(fd, payload.data(), payload.size());
}

std::optional<std::vector<std::byte>> read_frame(int fd) {
  std::uint32_t be = 0;
  if (!read_all(fd, reinterpret_cast<std::byte*>(&be), 4)) return std::nullopt;
  std::vector<std::byte> payload(ntohl(be));
  if (!read_all(fd, payload.data(), payload.size())) return std::nullopt;
  return payload;
}

constexpr std::size_t kReceiverOffset = 8 + 2 + 2 + 4 + 4;

}  // namespace

struct TcpBus::Impl {
  TcpBus* bus = nullptr;
  int listen_fd = -1;
  std::uint16_t port = 0;
  std::vector<int> hub_fds;     // hub side, by endpoint
  std::vector<int> client_fds;  // endpoint side
  std::vector<std::unique_ptr<std::mutex>> hub_write, client_write;
  std::vector<std::thread> threads;
  std::atomic<bool> closing{false};

  void hub_reader(std::size_t from) {
    while (auto frame = read_frame(hub_fds[from])) {
      if (frame->size() < kReceiverOffset + 4) {
        bus->fail_all("tcp hub: short frame");
        continue;
      }
      io::ByteReader r(std::span<const std::byte>(*frame).subspan(kReceiverOffset, 4));
      const auto to = r.get<std::uint32_t>("receiver");
      if (to >= hub_fds.size()) {
        bus->fail_all("tcp hub: frame for an unknown endpoint");
        continue;
      }
      try {
        std::lock_guard lock(*hub_write[to]);
        write_frame(hub_fds[to], *frame);
      } catch (const std::exception& e) {
        if (!closing) bus->fail_all(e.what());
      }
    }
    if (!closing) bus->fail_all("tcp hub: endpoint " + std::to_string(from) + " disconnected");
  }

  void client_reader(std::size_t id) {
    while (auto frame = read_frame(client_fds[id])) bus->deliver(*frame);
    if (!closing) bus->fail_all("tcp endpoint " + std::to_string(id) + " lost its hub connection");
  }
};

TcpBus::TcpBus(std::size_t endpoints, const std::string& host, std::uint16_t port)
    : Bus(endpoints), impl_(std::make_unique<Impl>()) {
  auto& im = *impl_;
  im.bus = this;
  im.listen_fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (im.listen_fd < 0) throw Error("tcp: socket() failed");
  const int one = 1;
  ::setsockopt(im.listen_fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) throw ConfigError("tcp: bad host " + host);
  if (::bind(im.listen_fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(im.listen_fd, static_cast<int>(endpoints)) != 0) {
    ::close(im.listen_fd);
    throw Error("tcp: cannot listen on " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  }
  socklen_t len = sizeof addr;
  ::getsockname(im.listen_fd, reinterpret_cast<sockaddr*>(&addr), &len);
  im.port = ntohs(addr.sin_port);

  im.hub_fds.assign(endpoints, -1);
  im.client_fds.assign(endpoints, -1);
  for (std::size_t i = 0; i < endpoints; ++i) {
    im.hub_write.push_back(std::make_unique<std::mutex>());
    im.client_write.push_back(std::make_unique<std::mutex>());
  }
  // Connect each endpoint, then accept it on the hub and read its hello.
  for (std::size_t i = 0; i < endpoints; ++i) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0 || ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      throw Error(std::string("tcp: connect failed: ") + std::strerror(errno));
    }
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    im.client_fds[i] = fd;
    const std::uint32_t hello = htonl(static_cast<std::uint32_t>(i));
    write_all(fd, reinterpret_cast<const std::byte*>(&hello), 4);

    const int hub = ::accept(im.listen_fd, nullptr, nullptr);
    if (hub < 0) throw Error("tcp: accept failed");
    ::setsockopt(hub, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::uint32_t id_be = 0;
    if (!read_all(hub, reinterpret_cast<std::byte*>(&id_be), 4) || ntohl(id_be) >= endpoints ||
        im.hub_fds[ntohl(id_be)] != -1) {
      throw Error("tcp: bad hello from endpoint");
    }
    im.hub_fds[ntohl(id_be)] = hub;
  }
  for (std::size_t i = 0; i < endpoints; ++i) {
    im.threads.emplace_back([&im, i] { im.hub_reader(i); });
    im.threads.emplace_back([&im, i] { im.client_reader(i); });
  }
}

TcpBus::~TcpBus() {
  auto& im = *impl_;
  im.closing = true;
  for (int fd : im.client_fds) {
    if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
  }
  for (int fd : im.hub_fds) {
    if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
  }
  for (auto& t : im.threads) t.join();
  for (int fd : im.client_fds) {
    if (fd >= 0) ::close(fd);
  }
  for (int fd : im.hub_fds) {
    if (fd >= 0) ::close(fd);
  }
  ::close(im.listen_fd);
}

std::uint16_t TcpBus::port() const { return impl_->port; }

void TcpBus::transmit(std::uint32_t sender, std::uint32_t, std::vector<std::byte> bytes) {
  auto& im = *impl_;
  std::lock_guard lock(*im.client_write[sender]);
  write_frame(im.client_fds[sender], bytes);
}

BusBackend parse_bus_backend(std::string_view name) {
  if (name == "inprocess" || name == "in_process" || name == "memory") return BusBackend::kInProcess;
  if (name == "tcp") return BusBackend::kTcp;
  throw ConfigError("unknown bus backend '" + std::string(name) + "'");
}

std::unique_ptr<Bus> make_bus(BusBackend backend, std::size_t endpoints, const std::string& host,
                              std::uint16_t port) {
  if (backend == BusBackend::kTcp) return std::make_unique<TcpBus>(endpoints, host, port);
  return std::make_unique<InProcessBus>(endpoints);
}

}  // namespace mtal
