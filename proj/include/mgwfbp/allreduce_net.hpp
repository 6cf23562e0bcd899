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
//
// Ring all-reduce over loopback TCP, plus the worker runtimes built on it:
// an all-reduce benchmark that feeds fit_ab(), and an emulator that replays a
// profile's backward pass with a compute agent and a communication agent
// joined by an ordered queue, launching one all-reduce per plan group.
//
// Wire format: every message is a 12-byte little-endian header
//   u32 iteration | u16 group_low_layer | u16 segment | u32 payload_bytes
// followed by payload_bytes of little-endian float32.

#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgwfbp/comm_model.hpp"
#include "mgwfbp/merge_planner.hpp"
#include "mgwfbp/model_profile.hpp"

namespace mgwfbp {

struct FrameHeader {
  std::uint32_t iteration = 0;
  std::uint16_t group_low_layer = 0;
  std::uint16_t segment = 0;
  std::uint32_t payload_bytes = 0;

  static constexpr std::size_t kSize = 12;
  std::array<std::byte, kSize> encode() const;
  static FrameHeader decode(std::span<const std::byte, kSize> bytes);

  friend bool operator==(const FrameHeader&, const FrameHeader&) = default;
};

// [offset, offset + length) of segment `index` when `total` elements are
// split into `parts` near-equal pieces; the first total % parts segments get
// one extra element.
struct Segment {
  std::size_t offset = 0;
  std::size_t length = 0;
};
Segment ring_segment(std::size_t total, int parts, int index);

struct WorkerConfig {
  int rank = 0;
  int n_workers = 2;
  // host:port of every rank's ring listener, indexed by rank. Filled in by
  // the rendezvous.
  std::vector<std::string> ring_addresses;
  // Maximum float32 elements per frame; 0 sends each segment as one frame.
  std::size_t chunk_elements = 0;
};

struct RendezvousOptions {
  int rank = 0;
  int n_workers = 2;
  std::string host = "127.0.0.1";
  int base_port = 29500;
  // Rank 0 may inherit an already-listening socket (see run_local_workers).
  int inherited_listener_fd = -1;
  std::size_t chunk_elements = 0;
  std::chrono::milliseconds timeout{30000};
};

struct TransportCounters {
  std::uint64_t rounds = 0;         // send/receive exchange steps
  std::uint64_t frames_sent = 0;
  std::uint64_t payload_bytes_sent = 0;
  std::uint64_t payload_bytes_received = 0;
};

// A gradient buffer for one plan group, layers high..low. values has exactly
// the group's total parameter count.
struct GradientBuffer {
  int high_layer = 1;
  int low_layer = 1;
  std::vector<float> values;
};

// One worker's position in the ring. Owns its sockets.
class RingCommunicator {
 public:
  // Blocks until every rank has joined and both ring links are up.
  static RingCommunicator connect(const RendezvousOptions& options);

  RingCommunicator(RingCommunicator&&) noexcept;
  RingCommunicator& operator=(RingCommunicator&&) noexcept;
  RingCommunicator(const RingCommunicator&) = delete;
  RingCommunicator& operator=(const RingCommunicator&) = delete;
  ~RingCommunicator();

  const WorkerConfig& config() const { return config_; }
  int rank() const { return config_.rank; }
  int size() const { return config_.n_workers; }

  // In-place sum across all ranks: reduce-scatter then all-gather, each
  // N-1 steps. All ranks must pass the same length and tags.
  void allreduce(std::span<float> data, std::uint32_t iteration = 0,
                 std::uint16_t group_low_layer = 0);
  void barrier();

  const TransportCounters& counters() const { return counters_; }
  void reset_counters() { counters_ = {}; }

 private:
  RingCommunicator() = default;
  void exchange(const FrameHeader& out, std::span<const float> send,
                const FrameHeader& expect, std::span<float> recv);
  void close_all();

  WorkerConfig config_;
  int send_fd_ = -1;  // to rank + 1
  int recv_fd_ = -1;  // from rank - 1
  std::chrono::milliseconds timeout_{30000};
  TransportCounters counters_;
  std::vector<float> scratch_;
};

// Sum-reduces the buffer across the ring; tags frames with the group's low
// layer.
void ring_allreduce(GradientBuffer& buffer, RingCommunicator& ring,
                    std::uint32_t iteration = 0);

struct EmulationOptions {
  int iterations = 10;
  // Busy-wait the final stretch of each synthetic delay. Negative picks
  // automatically: 2 ms when the machine has at least two cores per worker
  // thread pair, otherwise 0 (sleep only).
  std::chrono::microseconds spin_threshold{-1};
};

struct EmulationReport {
  int rank = 0;
  int n_workers = 0;
  std::vector<double> iteration_seconds;
  double mean_seconds = 0.0;
  double stddev_seconds = 0.0;
  // One entry per plan group in communication order.
  std::vector<std::string> groups;
  std::vector<double> group_mean_comm_seconds;
  std::uint64_t allreduce_calls = 0;
  // Layer indices in the order the communication agent consumed them
  // (first iteration only).
  std::vector<int> consumed_order;
  bool verified = false;

  std::string to_json() const;
  static EmulationReport from_json(const std::string& text);
};

// Runs on one worker; every rank must call it with the same profile and plan.
EmulationReport run_emulation(const ModelProfile& profile, const MergePlan& plan,
                              RingCommunicator& ring,
                              const EmulationOptions& options);

// Median all-reduce time per size over `repeats` timed runs after 3 warm-up
// rounds. Sizes are bytes, rounded up to whole float32 elements.
std::vector<Measurement> bench_allreduce(std::span<const Bytes> sizes,
                                         RingCommunicator& ring, int repeats);

// Forks n worker processes on this host, runs body(rendezvous options) in
// each, and returns every rank's result string (index = rank). Rank 0
// inherits a listener on an ephemeral port unless base_port > 0. Throws
// NetworkError naming the failing ranks.
std::vector<std::string> run_local_workers(
    int n_workers,
    const std::function<std::string(const RendezvousOptions&)>& body,
    int base_port = 0, std::chrono::milliseconds timeout = std::chrono::seconds(120),
    std::size_t chunk_elements = 0);

// Merges per-rank reports: rank 0's timings, verification AND-ed over ranks.
EmulationReport merge_reports(std::span<const EmulationReport> reports);

}  // namespace mgwfbp
