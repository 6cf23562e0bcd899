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

#include <chrono>
#include <numeric>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "mgwfbp/allreduce_net.hpp"
#include "mgwfbp/error.hpp"
#include "test_support.hpp"

using namespace mgwfbp;
using namespace std::chrono_literals;

TEST_CASE("frame header is little endian") {
  const FrameHeader h{0x01020304u, 0x0506, 0x0708, 0x090a0b0cu};
  const auto bytes = h.encode();
  CHECK(bytes[0] == std::byte{0x04});
  CHECK(bytes[3] == std::byte{0x01});
  CHECK(bytes[4] == std::byte{0x06});
  CHECK(bytes[6] == std::byte{0x08});
  CHECK(bytes[8] == std::byte{0x0c});
  CHECK(FrameHeader::decode(bytes) == h);
}

TEST_CASE("segments cover the buffer with the remainder up front") {
  for (std::size_t total : {0u, 1u, 7u, 17u, 1000u}) {
    for (int parts : {1, 2, 3, 4, 8}) {
      std::size_t next = 0;
      for (int i = 0; i < parts; ++i) {
        const auto s = ring_segment(total, parts, i);
        CHECK(s.offset == next);
        const std::size_t base = total / parts;
        CHECK(s.length == base + (static_cast<std::size_t>(i) < total % parts ? 1 : 0));
        next += s.length;
      }
      CHECK(next == total);
    }
  }
}

namespace {

// Each rank contributes (rank + 1) * (1 + i % 8); every value is an integer
// so the ring's summation order does not matter.
std::string reduce_and_check(const RendezvousOptions& o, std::size_t elements) {
  RingCommunicator ring = RingCommunicator::connect(o);
  std::vector<float> v(elements);
  for (std::size_t i = 0; i < elements; ++i) {
    v[i] = static_cast<float>((o.rank + 1) * (1 + static_cast<int>(i % 8)));
  }
  ring.allreduce(v, 1, 3);
  const int n = o.n_workers;
  std::size_t bad = 0;
  for (std::size_t i = 0; i < elements; ++i) {
    bad += v[i] != static_cast<float>(n * (n + 1) / 2 * (1 + static_cast<int>(i % 8)));
  }
  const auto& c = ring.counters();
  std::ostringstream os;
  os << bad << " " << c.rounds << " " << c.payload_bytes_sent << " " << c.payload_bytes_received;
  return os.str();
}

std::uint64_t expected_bytes_sent(int rank, int n, std::size_t elements) {
  std::uint64_t total = 0;
  for (int s = 0; s < n - 1; ++s) {
    total += ring_segment(elements, n, ((rank - s) % n + n) % n).length;
    total += ring_segment(elements, n, ((rank + 1 - s) % n + n) % n).length;
  }
  return total * sizeof(float);
}

}  // namespace

TEST_CASE("ring sums exactly on every rank") {
  for (int n : {2, 3, 4, 8}) {
    for (std::size_t elements : {std::size_t{1}, std::size_t{17}, std::size_t{1'000'000}}) {
      const auto out = run_local_workers(
          n, [&](const RendezvousOptions& o) { return reduce_and_check(o, elements); });
      std::uint64_t total_sent = 0;
      for (int r = 0; r < n; ++r) {
        std::istringstream in(out[r]);
        std::uint64_t bad, rounds, sent, received;
        in >> bad >> rounds >> sent >> received;
        CHECK_MESSAGE(bad == 0, "n=" << n << " elements=" << elements << " rank=" << r);
        CHECK(rounds == static_cast<std::uint64_t>(2 * (n - 1)));
        CHECK(sent == expected_bytes_sent(r, n, elements));
        total_sent += sent;
      }
      // Across the ring every rank sends 2(N-1)/N of the message on average.
      CHECK(total_sent == static_cast<std::uint64_t>(2 * (n - 1)) * elements * sizeof(float));
    }
  }
}

TEST_CASE("pairwise and zero buffers") {
  const auto out = run_local_workers(2, [](const RendezvousOptions& o) {
    RingCommunicator ring = RingCommunicator::connect(o);
    std::vector<float> v = o.rank == 0 ? std::vector<float>{1, 2} : std::vector<float>{3, 4};
    ring.allreduce(v);
    std::vector<float> z(5, 0.0f);
    ring.allreduce(z);
    std::ostringstream os;
    os << v[0] << "," << v[1] << "," << std::accumulate(z.begin(), z.end(), 0.0f);
    return os.str();
  });
  CHECK(out[0] == "4,6,0");
  CHECK(out[1] == "4,6,0");
}

TEST_CASE("chunked frames give the same result") {
  const auto out = run_local_workers(
      3, [](const RendezvousOptions& o) { return reduce_and_check(o, 1001); }, 0, 30s, 7);
  for (const auto& s : out) CHECK(s.rfind("0 4 ", 0) == 0);
}

TEST_CASE("length mismatch is a protocol error") {
  CHECK_THROWS_AS(run_local_workers(
                      2,
                      [](const RendezvousOptions& o) {
                        RingCommunicator ring = RingCommunicator::connect(o);
                        std::vector<float> v(o.rank == 0 ? 10 : 12, 1.0f);
                        ring.allreduce(v);
                        return std::string("done");
                      },
                      0, 5s),
                  NetworkError);
}

TEST_CASE("a failing rank is named") {
  try {
    run_local_workers(
        3,
        [](const RendezvousOptions& o) -> std::string {
          if (o.rank == 2) throw std::runtime_error("boom");
          RingCommunicator ring = RingCommunicator::connect(o);
          return "unreachable";
        },
        0, 2s);
    FAIL("expected a NetworkError");
  } catch (const NetworkError& e) {
    const std::string what = e.what();
    CHECK(what.find("rank 2: boom") != std::string::npos);
  }
}

TEST_CASE("bench produces one measurement per size") {
  const auto out = run_local_workers(2, [](const RendezvousOptions& o) {
    RingCommunicator ring = RingCommunicator::connect(o);
    const Bytes sizes[] = {4096};
    const auto m = bench_allreduce(sizes, ring, 3);
    std::ostringstream os;
    write_measurements_csv(os, m);
    return os.str();
  });
  std::istringstream in(out[0]);
  const auto m = read_measurements_csv(in);
  REQUIRE(m.size() == 1);
  CHECK(m[0].bytes == 4096);
  CHECK(m[0].n_nodes == 2);
  CHECK(m[0].seconds > 0.0);
}

TEST_CASE("bench rejects unsorted sizes") {
  CHECK_THROWS_AS(run_local_workers(
                      2,
                      [](const RendezvousOptions& o) {
                        RingCommunicator ring = RingCommunicator::connect(o);
                        const Bytes sizes[] = {8192, 4096};
                        bench_allreduce(sizes, ring, 1);
                        return std::string();
                      },
                      0, 5s),
                  NetworkError);
}

namespace {

EmulationReport emulate(const ModelProfile& profile, const MergePlan& plan, int n, int iters) {
  EmulationOptions opts;
  opts.iterations = iters;
  const auto out = run_local_workers(n, [&](const RendezvousOptions& o) {
    RingCommunicator ring = RingCommunicator::connect(o);
    return run_emulation(profile, plan, ring, opts).to_json();
  });
  std::vector<EmulationReport> reports;
  for (const auto& s : out) reports.push_back(EmulationReport::from_json(s));
  return merge_reports(reports);
}

}  // namespace

TEST_CASE("emulation with one layer") {
  const auto p = testing::make_profile("one", 1e-4, {1e-4}, {33});
  const auto r = emulate(p, MergePlan::none(1), 2, 3);
  CHECK(r.verified);
  CHECK(r.allreduce_calls == 3);
  CHECK(r.iteration_seconds.size() == 3);
  for (double t : r.iteration_seconds) CHECK(t > 0.0);
}

TEST_CASE("emulation queue order and grouping") {
  SynthOptions so;
  so.num_layers = 6;
  so.time_scale = 1e-3;
  so.max_params = 20'000;
  const auto p = synth_profile(so);
  SUBCASE("layer-wise") {
    const auto r = emulate(p, MergePlan::none(6), 3, 2);
    CHECK(r.verified);
    CHECK(r.consumed_order == std::vector<int>{6, 5, 4, 3, 2, 1});
    CHECK(r.allreduce_calls == 12);
    CHECK(r.groups.size() == 6);
  }
  SUBCASE("single message") {
    const auto r = emulate(p, MergePlan::all(6), 2, 2);
    CHECK(r.verified);
    CHECK(r.allreduce_calls == 2);
    CHECK(r.groups == std::vector<std::string>{"[6..1]"});
  }
  SUBCASE("mixed plan") {
    const auto r = emulate(p, MergePlan({2, 5, 6}, 6), 4, 2);
    CHECK(r.verified);
    CHECK(r.allreduce_calls == 6);
    CHECK(r.groups == std::vector<std::string>{"[6..4]", "[3..3]", "[2..1]"});
  }
}

TEST_CASE("emulation report json round trip") {
  EmulationReport r;
  r.rank = 1;
  r.n_workers = 4;
  r.iteration_seconds = {0.1, 0.2};
  r.mean_seconds = 0.15;
  r.groups = {"[2..1]"};
  r.group_mean_comm_seconds = {0.01};
  r.allreduce_calls = 2;
  r.consumed_order = {2, 1};
  r.verified = true;
  const auto back = EmulationReport::from_json(r.to_json());
  CHECK(back.iteration_seconds == r.iteration_seconds);
  CHECK(back.consumed_order == r.consumed_order);
  CHECK(back.verified);
  CHECK_THROWS_AS(EmulationReport::from_json("{}"), NetworkError);
}
