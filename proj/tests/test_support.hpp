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
// Shared instance generators for the unit, property and acceptance suites.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mgwfbp/comm_model.hpp"
#include "mgwfbp/model_profile.hpp"

namespace mgwfbp::testing {

struct Instance {
  ModelProfile profile;
  CommModel model;
};

inline ModelProfile make_profile(std::string name, double forward,
                                 const std::vector<double>& backward,
                                 const std::vector<std::uint64_t>& params,
                                 int element_bytes = 4) {
  ModelProfile p;
  p.name = std::move(name);
  p.forward_time = forward;
  p.element_bytes = element_bytes;
  for (std::size_t i = 0; i < backward.size(); ++i) {
    p.layers.push_back({static_cast<int>(i) + 1, params[i], backward[i]});
  }
  return p;
}

// The L=4 instance with t_f = 4, t_b = 2, a = 1.5 and one second of transfer
// per layer.
inline Instance worked_instance() {
  return {make_profile("tiny4", 4.0, {2, 2, 2, 2}, {1, 1, 1, 1}), {1.5, 0.25}};
}

// Greedy merge sweep lands on {2,3}; the optimum is {2}.
inline Instance greedy_counterexample() {
  return {make_profile("greedy-trap", 0.0, {0.75, 0.75, 0.0}, {1, 1, 1}),
          {1.0, 1.0 / 128.0}};
}

inline double log_uniform(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

// L in [1, max_layers], params log-uniform in [1e2, 5e6], backward times
// log-uniform in [1e-4, 1e-1] s. (a, b) are scaled against the mean layer so
// that draws land in every overlap case.
inline Instance random_instance(std::mt19937_64& rng, int max_layers = 12) {
  std::uniform_int_distribution<int> layers(1, max_layers);
  const int L = layers(rng);
  std::vector<double> tb;
  std::vector<std::uint64_t> params;
  double sum_tb = 0.0;
  double sum_bytes = 0.0;
  for (int i = 0; i < L; ++i) {
    tb.push_back(log_uniform(rng, 1e-4, 1e-1));
    params.push_back(static_cast<std::uint64_t>(std::llround(log_uniform(rng, 1e2, 5e6))));
    sum_tb += tb.back();
    sum_bytes += 4.0 * static_cast<double>(params.back());
  }
  const double mean_tb = sum_tb / L;
  const double mean_bytes = sum_bytes / L;
  std::uniform_real_distribution<double> fwd(0.0, 2.0);
  const double a = mean_tb * log_uniform(rng, 1e-3, 10.0);
  const double b = mean_tb / mean_bytes * log_uniform(rng, 1e-3, 10.0);
  return {make_profile("random", fwd(rng) * sum_tb, tb, params), {a, b}};
}

// Hand-built edge shapes: zero-parameter layers, zero backward time, exact
// ties on dyadic values, a = 0, b = 0, single layers, flat and skewed sizes.
inline std::vector<Instance> adversarial_instances(int count, std::uint64_t seed = 7) {
  std::vector<Instance> out;
  std::mt19937_64 rng(seed);
  out.push_back(worked_instance());
  out.push_back(greedy_counterexample());
  out.push_back({make_profile("single", 1.0, {1.0}, {10}), {0.5, 0.01}});
  out.push_back({make_profile("all-zero-params", 1.0, {1, 1, 1}, {0, 0, 0}), {2.0, 1.0}});
  out.push_back({make_profile("no-compute", 0.0, {0, 0, 0, 0}, {5, 1, 1, 5}), {1.0, 0.125}});
  out.push_back({make_profile("free-startup", 1.0, {1, 1, 1}, {8, 8, 8}), {0.0, 0.5}});
  out.push_back({make_profile("free-bytes", 1.0, {0.5, 0.5, 0.5}, {8, 8, 8}), {1.0, 0.0}});
  std::uniform_int_distribution<int> small(0, 8);
  std::uniform_int_distribution<int> len(1, 10);
  while (static_cast<int>(out.size()) < count) {
    const int L = len(rng);
    std::vector<double> tb;
    std::vector<std::uint64_t> params;
    for (int i = 0; i < L; ++i) {
      // Multiples of 1/8 so that ties between tau_b and tau_c happen exactly.
      tb.push_back(small(rng) / 8.0);
      const int k = small(rng);
      params.push_back(k == 0 ? 0 : (k < 6 ? static_cast<std::uint64_t>(k) : 1ULL << (4 * k)));
    }
    const double a = small(rng) / 4.0;
    const double b = small(rng) == 0 ? 0.0 : std::ldexp(1.0, -2 - small(rng) * 3);
    out.push_back({make_profile("adversarial", small(rng) / 2.0, tb, params), {a, b}});
  }
  return out;
}

}  // namespace mgwfbp::testing
