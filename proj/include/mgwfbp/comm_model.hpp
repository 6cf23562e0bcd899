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
// Linear communication cost models.
//
// An all-reduce of M bytes on a fixed cluster costs T(M) = a + b*M. The pair
// (a, b) can either be derived from per-link parameters (alpha, beta, gamma)
// for a given collective algorithm, or fitted from benchmark measurements.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mgwfbp {

using Bytes = std::uint64_t;
using Seconds = double;

// All-reduce cost T(M) = a + b*M. a is the startup intercept in seconds,
// b the slope in seconds per byte. Both are non-negative.
struct CommModel {
  Seconds a = 0.0;
  double b = 0.0;

  void validate() const;
  friend bool operator==(const CommModel&, const CommModel&) = default;
};

enum class CollectiveAlgorithm {
  kBinaryTree,
  kRecursiveDoubling,
  kRecursiveHalvingDoubling,
  kRing,
};

// Parses "ring", "bt", "rd", "rhd" (and the long names).
CollectiveAlgorithm parse_collective(std::string_view name);
std::string_view collective_name(CollectiveAlgorithm algorithm);

// Per-link parameters. beta and gamma are both per byte; gamma values quoted
// per 32-bit float are divided by 4 at ingestion (see gamma_per_float()).
struct CollectiveParams {
  CollectiveAlgorithm algorithm = CollectiveAlgorithm::kRing;
  int n_nodes = 2;
  Seconds alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;

  // Throws InputError: N < 2, negative coefficients, or a non power-of-two
  // N for any algorithm other than ring.
  void validate() const;
};

// Converts a summation cost quoted per 32-bit float into seconds per byte.
constexpr double gamma_per_float(double seconds_per_float) {
  return seconds_per_float / 4.0;
}

struct Measurement {
  Bytes bytes = 0;
  Seconds seconds = 0.0;
  int n_nodes = 0;

  friend bool operator==(const Measurement&, const Measurement&) = default;
};

// a + b*bytes.
Seconds allreduce_time(Bytes bytes, const CommModel& model);

// alpha + beta*bytes.
Seconds p2p_time(Seconds alpha, double beta, Bytes bytes);

// Closed-form (a, b) for the given collective algorithm.
CommModel derive_ab(const CollectiveParams& params);

// Ordinary least squares fit of seconds = a + b*bytes. The intercept is
// clamped at zero; a negative slope is rejected with InputError, as are
// fewer than two distinct sizes or mixed node counts.
CommModel fit_ab(std::span<const Measurement> samples);

// CSV with header `bytes,seconds,n_nodes`.
std::vector<Measurement> read_measurements_csv(std::istream& in);
void write_measurements_csv(std::ostream& out,
                            std::span<const Measurement> samples);

// `{a: <float>, b: <float>}` record, printed with round-trip precision.
std::string format_comm_model(const CommModel& model);
CommModel parse_comm_model(std::string_view text);

}  // namespace mgwfbp
