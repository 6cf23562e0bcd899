// Copyright 2026 The MG-WFBP Toolkit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#include "mgwfbp/allreduce_net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>
#if defined(__linux__)
#include <sys/prctl.h>
#endif

#include <algorithm>
#include <atomic>
#include <bit>
#include <cerrno>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <deque>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "mgwfbp/error.hpp"
#include "mgwfbp/kernels.hpp"

namespace mgwfbp {

static_assert(std::endian::native == std::endian::little,
              "payloads are sent as native float32 and must be little-endian");

namespace {

using Clock = std::chrono::steady_clock;

std::string sys_error(const std::string& what) {
  return what + ": " + std::strerror(errno);
}

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Fd() { reset(); }
  int get() const { return fd_; }
  int release() { return std::exchange(fd_, -1); }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

void put_u16(std::byte* p, std::uint16_t v) {
  p[0] = std::byte(v & 0xff);
  p[1] = std::byte(v >> 8);
}
void put_u32(std::byte* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = std::byte((v >> (8 * i)) & 0xff);
}
std::uint16_t get_u16(const std::byte* p) {
  return static_cast<std::uint16_t>(std::to_integer<unsigned>(p[0]) |
                                    (std::to_integer<unsigned>(p[1]) << 8));
}
std::uint32_t get_u32(const std::byte* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::to_integer<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

sockaddr_in make_addr(const std::string& host, int port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    throw InputError("not an IPv4 address: '" + host + "'");
  }
  return addr;
}

Fd listen_on(const std::string& host, int port) {
  Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
  if (fd.get() < 0) throw NetworkError(sys_error("socket"));
  const int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  const sockaddr_in addr = make_addr(host, port);
  if (::bind(fd.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
    throw NetworkError(sys_error("bind " + host + ":" + std::to_string(port)));
  }
  if (::listen(fd.get(), 64) != 0) throw NetworkError(sys_error("listen"));
  return fd;
}

int local_port(int fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    throw NetworkError(sys_error("getsockname"));
  }
  return ntohs(addr.sin_port);
}

void set_nodelay(int fd) {
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
      deadline - Clock::now());
  return static_cast<int>(std::max<long long>(0, left.count()));
}

Fd connect_with_retry(const std::string& host, int port, Clock::time_point deadline) {
  const sockaddr_in addr = make_addr(host, port);
  while (true) {
    Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
    if (fd.get() < 0) throw NetworkError(sys_error("socket"));
    if (::connect(fd.get(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) == 0) {
      set_nodelay(fd.get());
      return fd;
    }
    if (Clock::now() >= deadline) {
      throw NetworkError(sys_error("connect " + host + ":" + std::to_string(port)));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
}

Fd accept_with_deadline(int listener, Clock::time_point deadline) {
  pollfd p{listener, POLLIN, 0};
  const int rc = ::poll(&p, 1, remaining_ms(deadline));
  if (rc == 0) throw NetworkError("rendezvous: timed out waiting for a peer");
  if (rc < 0) throw NetworkError(sys_error("poll"));
  Fd fd(::accept(listener, nullptr, nullptr));
  if (fd.get() < 0) throw NetworkError(sys_error("accept"));
  set_nodelay(fd.get());
  return fd;
}

// Blocking helpers for the rendezvous; the ring itself uses exchange().
void write_all(int fd, const void* data, std::size_t n, Clock::time_point deadline) {
  const auto* p = static_cast<const char*>(data);
  while (n > 0) {
    pollfd pfd{fd, POLLOUT, 0};
    if (::poll(&pfd, 1, remaining_ms(deadline)) <= 0) {
      throw NetworkError("rendezvous: write timed out");
    }
    const ssize_t k = ::send(fd, p, n, MSG_NOSIGNAL);
    if (k < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw NetworkError(sys_error("send"));
    }
    p += k;
    n -= static_cast<std::size_t>(k);
  }
}

void read_all(int fd, void* data, std::size_t n, Clock::time_point deadline) {
  auto* p = static_cast<char*>(data);
  while (n > 0) {
    pollfd pfd{fd, POLLIN, 0};
    if (::poll(&pfd, 1, remaining_ms(deadline)) <= 0) {
      throw NetworkError("rendezvous: read timed out");
    }
    const ssize_t k = ::recv(fd, p, n, 0);
    if (k == 0) throw NetworkError("rendezvous: peer closed the connection");
    if (k < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw NetworkError(sys_error("recv"));
    }
    p += k;
    n -= static_cast<std::size_t>(k);
  }
}

void set_nonblocking(int fd) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

}  // namespace

std::array<std::byte, FrameHeader::kSize> FrameHeader::encode() const {
  std::array<std::byte, kSize> out{};
  put_u32(out.data(), iteration);
  put_u16(out.data() + 4, group_low_layer);
  put_u16(out.data() + 6, segment);
  put_u32(out.data() + 8, payload_bytes);
  return out;
}

FrameHeader FrameHeader::decode(std::span<const std::byte, kSize> bytes) {
  FrameHeader h;
  h.iteration = get_u32(bytes.data());
  h.group_low_layer = get_u16(bytes.data() + 4);
  h.segment = get_u16(bytes.data() + 6);
  h.payload_bytes = get_u32(bytes.data() + 8);
  return h;
}

Segment ring_segment(std::size_t total, int parts, int index) {
  const std::size_t n = static_cast<std::size_t>(parts);
  const std::size_t i = static_cast<std::size_t>(index);
  const std::size_t base = total / n;
  const std::size_t extra = total % n;
  return {i * base + std::min(i, extra), base + (i < extra ? 1 : 0)};
}

RingCommunicator RingCommunicator::connect(const RendezvousOptions& options) {
  if (options.n_workers < 2) throw InputError("ring: need at least 2 workers");
  if (options.rank < 0 || options.rank >= options.n_workers) {
    throw InputError("ring: rank " + std::to_string(options.rank) +
                     " outside [0, " + std::to_string(options.n_workers) + ")");
  }
  const auto deadline = Clock::now() + options.timeout;
  const int n = options.n_workers;
  const int rank = options.rank;

  Fd ring_listener = listen_on(options.host, 0);
  std::vector<std::uint16_t> ports(n);
  ports[rank] = static_cast<std::uint16_t>(local_port(ring_listener.get()));

  if (rank == 0) {
    Fd control = options.inherited_listener_fd >= 0
                     ? Fd(options.inherited_listener_fd)
                     : listen_on(options.host, options.base_port);
    std::vector<Fd> peers;
    for (int joined = 1; joined < n; ++joined) {
      Fd peer = accept_with_deadline(control.get(), deadline);
      std::byte hello[6];
      read_all(peer.get(), hello, sizeof(hello), deadline);
      const auto peer_rank = get_u32(hello);
      if (peer_rank == 0 || peer_rank >= static_cast<std::uint32_t>(n) ||
          ports[peer_rank] != 0) {
        throw NetworkError("rendezvous: unexpected or duplicate rank " +
                           std::to_string(peer_rank));
      }
      ports[peer_rank] = get_u16(hello + 4);
      peers.push_back(std::move(peer));
    }
    std::vector<std::byte> map(4 + 2 * n);
    put_u32(map.data(), static_cast<std::uint32_t>(n));
    for (int r = 0; r < n; ++r) put_u16(map.data() + 4 + 2 * r, ports[r]);
    for (auto& peer : peers) write_all(peer.get(), map.data(), map.size(), deadline);
  } else {
    Fd control = connect_with_retry(options.host, options.base_port, deadline);
    std::byte hello[6];
    put_u32(hello, static_cast<std::uint32_t>(rank));
    put_u16(hello + 4, ports[rank]);
    write_all(control.get(), hello, sizeof(hello), deadline);
    std::byte count[4];
    read_all(control.get(), count, sizeof(count), deadline);
    if (get_u32(count) != static_cast<std::uint32_t>(n)) {
      throw NetworkError("rendezvous: ring size mismatch (rank 0 reports " +
                         std::to_string(get_u32(count)) + ", this worker " +
                         std::to_string(n) + ")");
    }
    std::vector<std::byte> map(2 * n);
    read_all(control.get(), map.data(), map.size(), deadline);
    for (int r = 0; r < n; ++r) ports[r] = get_u16(map.data() + 2 * r);
  }

  RingCommunicator ring;
  ring.timeout_ = options.timeout;
  ring.config_.rank = rank;
  ring.config_.n_workers = n;
  ring.config_.chunk_elements = options.chunk_elements;
  for (int r = 0; r < n; ++r) {
    ring.config_.ring_addresses.push_back(options.host + ":" + std::to_string(ports[r]));
  }

  const int right = (rank + 1) % n;
  const int left = (rank + n - 1) % n;
  Fd send = connect_with_retry(options.host, ports[right], deadline);
  std::byte id[4];
  put_u32(id, static_cast<std::uint32_t>(rank));
  write_all(send.get(), id, sizeof(id), deadline);
  Fd recv = accept_with_deadline(ring_listener.get(), deadline);
  read_all(recv.get(), id, sizeof(id), deadline);
  if (get_u32(id) != static_cast<std::uint32_t>(left)) {
    throw NetworkError("ring: expected left neighbour rank " + std::to_string(left) +
                       ", got " + std::to_string(get_u32(id)));
  }
  set_nonblocking(send.get());
  set_nonblocking(recv.get());
  ring.send_fd_ = send.release();
  ring.recv_fd_ = recv.release();
  return ring;
}

RingCommunicator::RingCommunicator(RingCommunicator&& o) noexcept
    : config_(std::move(o.config_)),
      send_fd_(std::exchange(o.send_fd_, -1)),
      recv_fd_(std::exchange(o.recv_fd_, -1)),
      timeout_(o.timeout_),
      counters_(o.counters_),
      scratch_(std::move(o.scratch_)) {}

RingCommunicator& RingCommunicator::operator=(RingCommunicator&& o) noexcept {
  if (this != &o) {
    close_all();
    config_ = std::move(o.config_);
    send_fd_ = std::exchange(o.send_fd_, -1);
    recv_fd_ = std::exchange(o.recv_fd_, -1);
    timeout_ = o.timeout_;
    counters_ = o.counters_;
    scratch_ = std::move(o.scratch_);
  }
  return *this;
}

RingCommunicator::~RingCommunicator() { close_all(); }

void RingCommunicator::close_all() {
  if (send_fd_ >= 0) ::close(send_fd_);
  if (recv_fd_ >= 0) ::close(recv_fd_);
  send_fd_ = recv_fd_ = -1;
}

namespace {

struct OutFrame {
  std::array<std::byte, FrameHeader::kSize> header;
  const std::byte* payload;
  std::size_t payload_size;
};

struct InFrame {
  FrameHeader expect;
  std::byte* dest;
};

std::vector<std::pair<std::size_t, std::size_t>> chunks(std::size_t elements,
                                                        std::size_t chunk) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (elements == 0 || chunk == 0) {
    out.emplace_back(0, elements);
    return out;
  }
  for (std::size_t off = 0; off < elements; off += chunk) {
    out.emplace_back(off, std::min(chunk, elements - off));
  }
  return out;
}

}  // namespace

void RingCommunicator::exchange(const FrameHeader& out, std::span<const float> send,
                                const FrameHeader& expect, std::span<float> recv) {
  const int left = (rank() + size() - 1) % size();
  const int right = (rank() + 1) % size();
  std::vector<OutFrame> outgoing;
  for (const auto& [off, len] : chunks(send.size(), config_.chunk_elements)) {
    FrameHeader h = out;
    h.payload_bytes = static_cast<std::uint32_t>(len * sizeof(float));
    outgoing.push_back({h.encode(), reinterpret_cast<const std::byte*>(send.data() + off),
                        len * sizeof(float)});
  }
  std::vector<InFrame> incoming;
  for (const auto& [off, len] : chunks(recv.size(), config_.chunk_elements)) {
    FrameHeader h = expect;
    h.payload_bytes = static_cast<std::uint32_t>(len * sizeof(float));
    incoming.push_back({h, reinterpret_cast<std::byte*>(recv.data() + off)});
  }

  // Send and receive progress together.
  std::size_t out_idx = 0, out_pos = 0;
  std::size_t in_idx = 0, in_pos = 0;
  std::array<std::byte, FrameHeader::kSize> in_header{};
  const auto deadline = Clock::now() + timeout_;
  while (out_idx < outgoing.size() || in_idx < incoming.size()) {
    pollfd fds[2];
    int nfds = 0;
    int send_slot = -1, recv_slot = -1;
    if (out_idx < outgoing.size()) {
      send_slot = nfds;
      fds[nfds++] = {send_fd_, POLLOUT, 0};
    }
    if (in_idx < incoming.size()) {
      recv_slot = nfds;
      fds[nfds++] = {recv_fd_, POLLIN, 0};
    }
    const int rc = ::poll(fds, static_cast<nfds_t>(nfds), remaining_ms(deadline));
    if (rc == 0) {
      throw NetworkError("rank " + std::to_string(rank()) +
                         ": all-reduce timed out waiting on rank " +
                         std::to_string(in_idx < incoming.size() ? left : right));
    }
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw NetworkError(sys_error("poll"));
    }

    if (send_slot >= 0 && (fds[send_slot].revents & (POLLOUT | POLLERR | POLLHUP))) {
      auto& f = outgoing[out_idx];
      const std::size_t total = FrameHeader::kSize + f.payload_size;
      while (out_pos < total) {
        const std::byte* src = out_pos < FrameHeader::kSize
                                   ? f.header.data() + out_pos
                                   : f.payload + (out_pos - FrameHeader::kSize);
        const std::size_t want = out_pos < FrameHeader::kSize
                                     ? FrameHeader::kSize - out_pos
                                     : total - out_pos;
        const ssize_t k = ::send(send_fd_, src, want, MSG_NOSIGNAL);
        if (k < 0) {
          if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) break;
          throw NetworkError("rank " + std::to_string(rank()) + ": peer rank " +
                             std::to_string(right) + " disconnected (" +
                             std::strerror(errno) + ")");
        }
        out_pos += static_cast<std::size_t>(k);
      }
      if (out_pos == total) {
        ++counters_.frames_sent;
        counters_.payload_bytes_sent += f.payload_size;
        ++out_idx;
        out_pos = 0;
      }
    }

    if (recv_slot >= 0 && (fds[recv_slot].revents & (POLLIN | POLLERR | POLLHUP))) {
      while (in_idx < incoming.size()) {
        auto& f = incoming[in_idx];
        const std::size_t payload = f.expect.payload_bytes;
        std::byte* dst;
        std::size_t want;
        if (in_pos < FrameHeader::kSize) {
          dst = in_header.data() + in_pos;
          want = FrameHeader::kSize - in_pos;
        } else {
          dst = f.dest + (in_pos - FrameHeader::kSize);
          want = FrameHeader::kSize + payload - in_pos;
        }
        ssize_t k = 0;
        if (want > 0) {
          k = ::recv(recv_fd_, dst, want, 0);
          if (k == 0) {
            throw NetworkError("rank " + std::to_string(rank()) + ": peer rank " +
                               std::to_string(left) + " disconnected");
          }
          if (k < 0) {
            if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) break;
            throw NetworkError("rank " + std::to_string(rank()) + ": receive from rank " +
                               std::to_string(left) + " failed (" +
                               std::strerror(errno) + ")");
          }
        }
        const std::size_t before = in_pos;
        in_pos += static_cast<std::size_t>(k);
        if (before < FrameHeader::kSize && in_pos == FrameHeader::kSize) {
          const FrameHeader got = FrameHeader::decode(in_header);
          if (got != f.expect) {
            throw NetworkError(
                "rank " + std::to_string(rank()) + ": protocol error from rank " +
                std::to_string(left) + ": expected {iter " +
                std::to_string(f.expect.iteration) + ", group " +
                std::to_string(f.expect.group_low_layer) + ", segment " +
                std::to_string(f.expect.segment) + ", " +
                std::to_string(f.expect.payload_bytes) + " B}, got {iter " +
                std::to_string(got.iteration) + ", group " +
                std::to_string(got.group_low_layer) + ", segment " +
                std::to_string(got.segment) + ", " +
                std::to_string(got.payload_bytes) + " B} (buffer length mismatch?)");
          }
        }
        if (in_pos == FrameHeader::kSize + payload) {
          counters_.payload_bytes_received += payload;
          ++in_idx;
          in_pos = 0;
        }
      }
    }
  }
  ++counters_.rounds;
}

void RingCommunicator::allreduce(std::span<float> data, std::uint32_t iteration,
                                 std::uint16_t group_low_layer) {
  const int n = size();
  const int r = rank();
  auto mod = [n](int v) { return ((v % n) + n) % n; };
  FrameHeader out{iteration, group_low_layer, 0, 0};
  FrameHeader expect{iteration, group_low_layer, 0, 0};

  // Reduce-scatter: after N-1 steps rank r owns the full sum of segment r+1.
  for (int step = 0; step < n - 1; ++step) {
    const int send_idx = mod(r - step);
    const int recv_idx = mod(r - step - 1);
    const Segment s = ring_segment(data.size(), n, send_idx);
    const Segment d = ring_segment(data.size(), n, recv_idx);
    scratch_.resize(d.length);
    out.segment = static_cast<std::uint16_t>(send_idx);
    expect.segment = static_cast<std::uint16_t>(recv_idx);
    exchange(out, data.subspan(s.offset, s.length), expect, scratch_);
    kernels::add_into(data.subspan(d.offset, d.length), scratch_);
  }
  // All-gather: circulate the finished segments.
  for (int step = 0; step < n - 1; ++step) {
    const int send_idx = mod(r + 1 - step);
    const int recv_idx = mod(r - step);
    const Segment s = ring_segment(data.size(), n, send_idx);
    const Segment d = ring_segment(data.size(), n, recv_idx);
    out.segment = static_cast<std::uint16_t>(send_idx);
    expect.segment = static_cast<std::uint16_t>(recv_idx);
    exchange(out, data.subspan(s.offset, s.length), expect,
             data.subspan(d.offset, d.length));
  }
}

void RingCommunicator::barrier() {
  float token = 0.0f;
  allreduce(std::span<float>(&token, 1), 0xffffffffu, 0);
}

void ring_allreduce(GradientBuffer& buffer, RingCommunicator& ring,
                    std::uint32_t iteration) {
  ring.allreduce(buffer.values, iteration,
                 static_cast<std::uint16_t>(buffer.low_layer));
}

// ---------------------------------------------------------------------------
// Emulation

namespace {

// Ordered hand-off between the compute and communication agents.
template <typename T>
class BlockingQueue {
 public:
  void push(T value) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      items_.push_back(std::move(value));
    }
    cv_.notify_one();
  }
  T pop() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [this] { return !items_.empty(); });
    T value = std::move(items_.front());
    items_.pop_front();
    return value;
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
};

void wait_until(Clock::time_point deadline, std::chrono::microseconds spin) {
  if (spin.count() > 0) {
    if (deadline - Clock::now() > spin) std::this_thread::sleep_until(deadline - spin);
    while (Clock::now() < deadline) {
    }
  } else {
    std::this_thread::sleep_until(deadline);
  }
}

double seconds_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

struct GroupSlot {
  LayerGroup layers;
  std::vector<float> values;
  // Offset/length of each member layer inside values, highest layer first.
  std::vector<std::pair<int, Segment>> slices;
  double comm_seconds = 0.0;
  int comm_count = 0;
};

constexpr int kStop = -1;

}  // namespace

EmulationReport run_emulation(const ModelProfile& profile, const MergePlan& plan,
                              RingCommunicator& ring,
                              const EmulationOptions& options) {
  profile.validate();
  if (plan.num_layers() != profile.num_layers()) {
    throw InputError("emulation: plan does not match the profile's layer count");
  }
  if (options.iterations < 1) throw InputError("emulation: iterations must be >= 1");
  const int n_layers = profile.num_layers();
  const int n = ring.size();
  const float rank_value = static_cast<float>(ring.rank() + 1);
  const float sum_base = static_cast<float>(n * (n + 1) / 2);
  const float sum_scale = static_cast<float>(n);

#if defined(__linux__)
  ::prctl(PR_SET_TIMERSLACK, 1UL, 0UL, 0UL, 0UL);
#endif
  std::chrono::microseconds spin = options.spin_threshold;
  if (spin.count() < 0) {
    spin = std::thread::hardware_concurrency() >= 2u * static_cast<unsigned>(n)
               ? std::chrono::microseconds(2000)
               : std::chrono::microseconds(0);
  }

  std::vector<GroupSlot> slots;
  std::vector<int> slot_of_layer(n_layers + 1, -1);
  for (const auto& g : plan.groups()) {
    GroupSlot slot;
    slot.layers = g;
    std::size_t offset = 0;
    for (int l = g.high; l >= g.low; --l) {
      const std::size_t len = profile.layer(l).params;
      slot.slices.push_back({l, Segment{offset, len}});
      offset += len;
      slot_of_layer[l] = static_cast<int>(slots.size());
    }
    slot.values.assign(offset, 0.0f);
    slots.push_back(std::move(slot));
  }

  // Absolute offsets from the iteration start at which each layer's
  // gradients are ready.
  const auto starts = backward_starts(profile);
  std::vector<std::chrono::nanoseconds> ready_at(n_layers + 1);
  std::chrono::nanoseconds forward_done = std::chrono::duration_cast<std::chrono::nanoseconds>(
      std::chrono::duration<double>(profile.forward_time));
  for (int l = 1; l <= n_layers; ++l) {
    ready_at[l] = std::chrono::duration_cast<std::chrono::nanoseconds>(
        std::chrono::duration<double>(starts[l - 1] + profile.layer(l).backward_time));
  }

  EmulationReport report;
  report.rank = ring.rank();
  report.n_workers = n;
  for (const auto& slot : slots) {
    report.groups.push_back("[" + std::to_string(slot.layers.high) + ".." +
                            std::to_string(slot.layers.low) + "]");
  }

  BlockingQueue<int> layer_queue;
  BlockingQueue<int> done_queue;
  std::exception_ptr comm_error;
  std::uint32_t iteration_tag = 0;
  std::mutex tag_mu;
  std::atomic<bool> record_order{true};

  ring.barrier();

  std::thread comm_agent([&] {
    try {
      while (true) {
        const int l = layer_queue.pop();
        if (l == kStop) return;
        if (record_order) report.consumed_order.push_back(l);
        if (!plan.is_merged(l)) {
          auto& slot = slots[slot_of_layer[l]];
          if (!slot.values.empty()) {
            std::uint32_t tag;
            {
              std::lock_guard<std::mutex> lock(tag_mu);
              tag = iteration_tag;
            }
            const auto t0 = Clock::now();
            ring.allreduce(slot.values, tag, static_cast<std::uint16_t>(slot.layers.low));
            slot.comm_seconds += seconds_between(t0, Clock::now());
            ++slot.comm_count;
            ++report.allreduce_calls;
          }
        }
        if (l == 1) done_queue.push(0);
      }
    } catch (...) {
      comm_error = std::current_exception();
      done_queue.push(1);
    }
  });

  // Refilled between iterations, outside the timed region.
  auto fill_gradients = [&] {
    for (auto& slot : slots) {
      for (const auto& [layer, seg] : slot.slices) {
        kernels::fill_pattern(std::span<float>(slot.values).subspan(seg.offset, seg.length),
                              rank_value, 1.0f);
      }
    }
  };
  fill_gradients();

  bool verified = true;
  try {
    for (int it = 0; it < options.iterations; ++it) {
      {
        std::lock_guard<std::mutex> lock(tag_mu);
        iteration_tag = static_cast<std::uint32_t>(it);
      }
      const auto t0 = Clock::now();
      wait_until(t0 + forward_done, spin);
      for (int l = n_layers; l >= 1; --l) {
        wait_until(t0 + ready_at[l], spin);
        layer_queue.push(l);
      }
      if (done_queue.pop() != 0) break;
      report.iteration_seconds.push_back(seconds_between(t0, Clock::now()));
      record_order = false;

      for (const auto& slot : slots) {
        for (const auto& [layer, seg] : slot.slices) {
          const auto view = std::span<const float>(slot.values).subspan(seg.offset, seg.length);
          if (kernels::count_pattern_mismatches(view, sum_base, sum_scale) != 0) {
            verified = false;
          }
        }
      }
      fill_gradients();
      ring.barrier();
    }
  } catch (...) {
    layer_queue.push(kStop);
    comm_agent.join();
    throw;
  }
  layer_queue.push(kStop);
  comm_agent.join();
  if (comm_error) std::rethrow_exception(comm_error);

  const auto& times = report.iteration_seconds;
  report.mean_seconds = std::accumulate(times.begin(), times.end(), 0.0) /
                        static_cast<double>(times.size());
  double var = 0.0;
  for (const double t : times) var += (t - report.mean_seconds) * (t - report.mean_seconds);
  report.stddev_seconds = times.size() > 1 ? std::sqrt(var / (times.size() - 1)) : 0.0;
  for (const auto& slot : slots) {
    report.group_mean_comm_seconds.push_back(
        slot.comm_count > 0 ? slot.comm_seconds / slot.comm_count : 0.0);
  }
  report.verified = verified;
  return report;
}

std::string EmulationReport::to_json() const {
  nlohmann::json j;
  j["rank"] = rank;
  j["n_workers"] = n_workers;
  j["iteration_seconds"] = iteration_seconds;
  j["mean_seconds"] = mean_seconds;
  j["stddev_seconds"] = stddev_seconds;
  j["groups"] = groups;
  j["group_mean_comm_seconds"] = group_mean_comm_seconds;
  j["allreduce_calls"] = allreduce_calls;
  j["consumed_order"] = consumed_order;
  j["verified"] = verified;
  return j.dump();
}

EmulationReport EmulationReport::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EmulationReport r;
    r.rank = j.at("rank").get<int>();
    r.n_workers = j.at("n_workers").get<int>();
    r.iteration_seconds = j.at("iteration_seconds").get<std::vector<double>>();
    r.mean_seconds = j.at("mean_seconds").get<double>();
    r.stddev_seconds = j.at("stddev_seconds").get<double>();
    r.groups = j.at("groups").get<std::vector<std::string>>();
    r.group_mean_comm_seconds = j.at("group_mean_comm_seconds").get<std::vector<double>>();
    r.allreduce_calls = j.at("allreduce_calls").get<std::uint64_t>();
    r.consumed_order = j.at("consumed_order").get<std::vector<int>>();
    r.verified = j.at("verified").get<bool>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw NetworkError(std::string("malformed emulation report: ") + e.what());
  }
}

EmulationReport merge_reports(std::span<const EmulationReport> reports) {
  if (reports.empty()) throw NetworkError("no worker reports");
  EmulationReport merged = reports.front();
  for (const auto& r : reports) {
    if (r.rank == 0) merged = r;
  }
  for (const auto& r : reports) merged.verified = merged.verified && r.verified;
  return merged;
}

std::vector<Measurement> bench_allreduce(std::span<const Bytes> sizes,
                                         RingCommunicator& ring, int repeats) {
  if (sizes.empty()) throw InputError("bench: no message sizes");
  if (repeats < 1) throw InputError("bench: repeats must be >= 1");
  if (!std::is_sorted(sizes.begin(), sizes.end())) {
    throw InputError("bench: sizes must be sorted ascending");
  }
  constexpr int kWarmup = 3;
  const int n = ring.size();
  const float sum_base = static_cast<float>(n * (n + 1) / 2);
  std::vector<Measurement> out;
  std::vector<float> buf;
  for (const Bytes size : sizes) {
    if (size == 0) throw InputError("bench: sizes must be positive");
    const std::size_t elements = (size + sizeof(float) - 1) / sizeof(float);
    buf.resize(elements);
    std::vector<double> samples;
    for (int i = 0; i < kWarmup + repeats; ++i) {
      kernels::fill_pattern(buf, static_cast<float>(ring.rank() + 1), 1.0f);
      ring.barrier();
      const auto t0 = Clock::now();
      ring.allreduce(buf, static_cast<std::uint32_t>(i));
      const double dt = seconds_between(t0, Clock::now());
      if (kernels::count_pattern_mismatches(buf, sum_base, static_cast<float>(n)) != 0) {
        throw NetworkError("bench: all-reduce produced wrong sums at " +
                           std::to_string(size) + " bytes");
      }
      if (i >= kWarmup) samples.push_back(dt);
    }
    std::sort(samples.begin(), samples.end());
    const std::size_t m = samples.size();
    const double median =
        m % 2 == 1 ? samples[m / 2] : 0.5 * (samples[m / 2 - 1] + samples[m / 2]);
    out.push_back({static_cast<Bytes>(elements * sizeof(float)), median, n});
  }
  return out;
}

std::vector<std::string> run_local_workers(
    int n_workers, const std::function<std::string(const RendezvousOptions&)>& body,
    int base_port, std::chrono::milliseconds timeout, std::size_t chunk_elements) {
  if (n_workers < 2) throw InputError("need at least 2 workers");
  Fd listener;
  int port = base_port;
  if (base_port == 0) {
    listener = listen_on("127.0.0.1", 0);
    port = local_port(listener.get());
  }

  struct Child {
    pid_t pid = -1;
    Fd out;
    std::string data;
    bool eof = false;
  };
  std::vector<Child> children(n_workers);
  std::fflush(nullptr);
  for (int r = 0; r < n_workers; ++r) {
    int fds[2];
    if (::pipe(fds) != 0) throw NetworkError(sys_error("pipe"));
    const pid_t pid = ::fork();
    if (pid < 0) throw NetworkError(sys_error("fork"));
    if (pid == 0) {
      ::close(fds[0]);
      for (int k = 0; k < r; ++k) ::close(children[k].out.get());
      RendezvousOptions opts;
      opts.rank = r;
      opts.n_workers = n_workers;
      opts.base_port = port;
      opts.chunk_elements = chunk_elements;
      opts.timeout = timeout;
      if (r == 0) {
        opts.inherited_listener_fd = listener.release();
      } else {
        listener.reset();
      }
      std::string message;
      int code = 0;
      try {
        message = "OK\n" + body(opts);
      } catch (const std::exception& e) {
        message = std::string("ERR\n") + e.what();
        code = 2;
      }
      const char* p = message.data();
      std::size_t left = message.size();
      while (left > 0) {
        const ssize_t k = ::write(fds[1], p, left);
        if (k <= 0) break;
        p += k;
        left -= static_cast<std::size_t>(k);
      }
      ::close(fds[1]);
      ::_exit(code);
    }
    ::close(fds[1]);
    children[r].pid = pid;
    children[r].out = Fd(fds[0]);
  }
  listener.reset();

  const auto deadline = Clock::now() + timeout + std::chrono::seconds(5);
  bool timed_out = false;
  while (true) {
    std::vector<pollfd> fds;
    std::vector<int> who;
    for (int r = 0; r < n_workers; ++r) {
      if (!children[r].eof) {
        fds.push_back({children[r].out.get(), POLLIN, 0});
        who.push_back(r);
      }
    }
    if (fds.empty()) break;
    const int rc = ::poll(fds.data(), fds.size(), remaining_ms(deadline));
    if (rc == 0) {
      timed_out = true;
      break;
    }
    if (rc < 0) {
      if (errno == EINTR) continue;
      break;
    }
    for (std::size_t i = 0; i < fds.size(); ++i) {
      if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      auto& c = children[who[i]];
      char buf[65536];
      const ssize_t k = ::read(c.out.get(), buf, sizeof(buf));
      if (k <= 0) {
        c.eof = true;
      } else {
        c.data.append(buf, static_cast<std::size_t>(k));
      }
    }
  }
  if (timed_out) {
    for (auto& c : children) ::kill(c.pid, SIGKILL);
  }
  std::vector<std::string> results(n_workers);
  std::string failures;
  for (int r = 0; r < n_workers; ++r) {
    int status = 0;
    ::waitpid(children[r].pid, &status, 0);
    const std::string& data = children[r].data;
    if (data.rfind("OK\n", 0) == 0 && WIFEXITED(status) && WEXITSTATUS(status) == 0) {
      results[r] = data.substr(3);
      continue;
    }
    failures += "\n  rank " + std::to_string(r) + ": ";
    if (data.rfind("ERR\n", 0) == 0) {
      failures += data.substr(4);
    } else if (timed_out) {
      failures += "killed after timeout";
    } else if (WIFSIGNALED(status)) {
      failures += "terminated by signal " + std::to_string(WTERMSIG(status));
    } else {
      failures += "exited without a result";
    }
  }
  if (!failures.empty()) throw NetworkError("worker failure:" + failures);
  return results;
}

}  // namespace mgwfbp
