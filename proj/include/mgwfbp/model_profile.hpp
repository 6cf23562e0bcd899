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

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "mgwfbp/comm_model.hpp"

namespace mgwfbp {

// One learnable layer. Layer 1 is closest to the input; backward runs L..1.
struct LayerProfile {
  int index = 1;
  std::uint64_t params = 0;
  Seconds backward_time = 0.0;

  friend bool operator==(const LayerProfile&, const LayerProfile&) = default;
};

// Per-layer trace of a network. layers[i] holds layer i+1.
struct ModelProfile {
  std::string name;
  std::vector<LayerProfile> layers;
  Seconds forward_time = 0.0;
  int element_bytes = 4;

  int num_layers() const { return static_cast<int>(layers.size()); }
  // 1-based accessor.
  const LayerProfile& layer(int l) const { return layers[l - 1]; }
  Bytes layer_bytes(int l) const {
    return static_cast<Bytes>(element_bytes) * layer(l).params;
  }

  // Throws InputError naming the offending layer.
  void validate() const;

  friend bool operator==(const ModelProfile&, const ModelProfile&) = default;
};

std::uint64_t total_params(const ModelProfile& profile);
Seconds total_backward(const ModelProfile& profile);
Bytes total_bytes(const ModelProfile& profile);

// JSON document: {name, forward_time, element_bytes, layers: [{index,
// params, backward_time}, ...]}. Doubles round-trip exactly.
ModelProfile load_profile(std::istream& in);
ModelProfile load_profile_file(const std::string& path);
std::string save_profile(const ModelProfile& profile);
void save_profile_file(const ModelProfile& profile, const std::string& path);

struct SynthOptions {
  int num_layers = 1;
  std::uint64_t min_params = 100;
  std::uint64_t max_params = 5'000'000;
  // Backward time of the largest layer, before jitter.
  Seconds time_scale = 1e-2;
  std::uint64_t seed = 0;
  Seconds forward_time = -1.0;  // < 0: half of the synthesized t_b
};

// Synthetic trace: log-uniform parameter counts, backward times proportional
// to params/max_params scaled by time_scale, plus a jitter of at most
// 0.1% of time_scale so that tiny layers still take nonzero time. Not a
// measurement of any real network.
ModelProfile synth_profile(const SynthOptions& options);

// Layer lists built from the published architectures with backward times
// apportioned by per-layer FLOPs (convolutions) or activation traffic
// (normalization layers), calibrated to a K80-class GPU. Representative
// only; real traces are not reproduced.
ModelProfile representative_resnet50();
ModelProfile representative_googlenet();

}  // namespace mgwfbp
