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

#include "mgwfbp/model_profile.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "mgwfbp/error.hpp"

namespace mgwfbp {

using json = nlohmann::json;

void ModelProfile::validate() const {
  if (layers.empty()) {
    throw InputError("profile '" + name + "': needs at least one layer");
  }
  if (!(forward_time >= 0.0) || !std::isfinite(forward_time)) {
    throw InputError("profile '" + name + "': forward_time must be >= 0");
  }
  if (element_bytes != 2 && element_bytes != 4 && element_bytes != 8) {
    throw InputError("profile '" + name + "': element_bytes must be 2, 4 or 8, got " +
                     std::to_string(element_bytes));
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    const int expected = static_cast<int>(i) + 1;
    if (layer.index != expected) {
      throw InputError("profile '" + name + "': layer at position " +
                       std::to_string(expected) + " has index " +
                       std::to_string(layer.index) +
                       " (indices must be exactly 1..L)");
    }
    if (!(layer.backward_time >= 0.0) || !std::isfinite(layer.backward_time)) {
      throw InputError("profile '" + name + "': layer " +
                       std::to_string(layer.index) +
                       " has invalid backward_time");
    }
  }
}

std::uint64_t total_params(const ModelProfile& profile) {
  std::uint64_t sum = 0;
  for (const auto& layer : profile.layers) sum += layer.params;
  return sum;
}

Seconds total_backward(const ModelProfile& profile) {
  Seconds sum = 0.0;
  for (const auto& layer : profile.layers) sum += layer.backward_time;
  return sum;
}

Bytes total_bytes(const ModelProfile& profile) {
  return static_cast<Bytes>(profile.element_bytes) * total_params(profile);
}

namespace {

template <typename T>
T require(const json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    throw InputError(where + ": missing field '" + key + "'");
  }
  try {
    if constexpr (std::is_same_v<T, std::uint64_t> || std::is_same_v<T, int>) {
      if (!it->is_number_integer() || (it->is_number_integer() && !it->is_number_unsigned() &&
                                       it->template get<std::int64_t>() < 0)) {
        throw InputError(where + ": field '" + key +
                         "' must be a non-negative integer");
      }
    } else if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) {
        throw InputError(where + ": field '" + key + "' must be a number");
      }
    }
    return it->template get<T>();
  } catch (const json::exception& e) {
    throw InputError(where + ": field '" + key + "': " + e.what());
  }
}

}  // namespace

ModelProfile load_profile(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("profile: parse error: ") + e.what());
  }
  if (!doc.is_object()) throw InputError("profile: top level must be an object");

  ModelProfile profile;
  profile.name = require<std::string>(doc, "name", "profile");
  profile.forward_time = require<double>(doc, "forward_time", "profile");
  profile.element_bytes = doc.contains("element_bytes")
                              ? require<int>(doc, "element_bytes", "profile")
                              : 4;
  const auto layers = doc.find("layers");
  if (layers == doc.end() || !layers->is_array()) {
    throw InputError("profile: 'layers' must be an array");
  }
  profile.layers.reserve(layers->size());
  for (std::size_t i = 0; i < layers->size(); ++i) {
    const auto& item = (*layers)[i];
    const std::string where = "profile layer #" + std::to_string(i + 1);
    if (!item.is_object()) throw InputError(where + ": must be an object");
    LayerProfile layer;
    layer.index = require<int>(item, "index", where);
    layer.params = require<std::uint64_t>(item, "params", where);
    layer.backward_time = require<double>(item, "backward_time", where);
    profile.layers.push_back(layer);
  }
  profile.validate();
  return profile;
}

ModelProfile load_profile_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open profile '" + path + "'");
  return load_profile(in);
}

std::string save_profile(const ModelProfile& profile) {
  json doc;
  doc["name"] = profile.name;
  doc["forward_time"] = profile.forward_time;
  doc["element_bytes"] = profile.element_bytes;
  json layers = json::array();
  for (const auto& layer : profile.layers) {
    layers.push_back({{"index", layer.index},
                      {"params", layer.params},
                      {"backward_time", layer.backward_time}});
  }
  doc["layers"] = std::move(layers);
  return doc.dump(2) + "\n";
}

void save_profile_file(const ModelProfile& profile, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write profile '" + path + "'");
  out << save_profile(profile);
}

ModelProfile synth_profile(const SynthOptions& options) {
  if (options.num_layers < 1) {
    throw InputError("synth_profile: layer count must be >= 1");
  }
  if (options.min_params == 0 || options.min_params > options.max_params) {
    throw InputError("synth_profile: need 0 < min_params <= max_params");
  }
  if (!(options.time_scale >= 0.0)) {
    throw InputError("synth_profile: time_scale must be >= 0");
  }
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> log_params(
      std::log(static_cast<double>(options.min_params)),
      std::log(static_cast<double>(options.max_params)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  ModelProfile profile;
  profile.name = "synthetic-L" + std::to_string(options.num_layers) + "-seed" +
                 std::to_string(options.seed);
  profile.element_bytes = 4;
  const double max_p = static_cast<double>(options.max_params);
  for (int l = 1; l <= options.num_layers; ++l) {
    LayerProfile layer;
    layer.index = l;
    const double p = std::round(std::exp(log_params(rng)));
    layer.params = std::clamp(static_cast<std::uint64_t>(p), options.min_params,
                              options.max_params);
    const double jitter = 0.1 * unit(rng);
    layer.backward_time =
        options.time_scale * (static_cast<double>(layer.params) / max_p) +
        options.time_scale * 0.01 * jitter;
    profile.layers.push_back(layer);
  }
  profile.forward_time = options.forward_time >= 0.0
                             ? options.forward_time
                             : 0.5 * total_backward(profile);
  return profile;
}

namespace {

// Accumulates layers in forward order. Convolutions and fully connected
// layers are charged by FLOPs, normalization by activation traffic.
class ArchitectureBuilder {
 public:
  ArchitectureBuilder(int batch, double flops_per_second,
                      double bytes_per_second)
      : batch_(batch), flops_rate_(flops_per_second), mem_rate_(bytes_per_second) {}

  void conv(int k, int c_in, int c_out, int h_out, int w_out, bool bias) {
    const double macs = static_cast<double>(k) * k * c_in * c_out * h_out * w_out;
    const double fwd = 2.0 * macs * batch_ / flops_rate_;
    add(static_cast<std::uint64_t>(k) * k * c_in * c_out + (bias ? c_out : 0),
        fwd, 2.0 * fwd);
  }

  // Caffe style: a BatchNorm layer holding mean, variance and the moving
  // average factor, followed by a Scale layer with gamma and beta.
  void batch_norm(int channels, int h, int w) {
    const double bytes = 4.0 * batch_ * channels * h * w;
    const double fwd = 2.0 * bytes / mem_rate_;
    add(2ULL * static_cast<std::uint64_t>(channels) + 1, fwd, 2.0 * fwd);
    add(2ULL * static_cast<std::uint64_t>(channels), fwd, 2.0 * fwd);
  }

  void fully_connected(int in, int out) {
    const double fwd = 2.0 * in * out * static_cast<double>(batch_) / flops_rate_;
    add(static_cast<std::uint64_t>(in) * out + out, fwd, 2.0 * fwd);
  }

  ModelProfile finish(std::string name) {
    ModelProfile profile;
    profile.name = std::move(name);
    profile.element_bytes = 4;
    profile.forward_time = forward_;
    profile.layers = std::move(layers_);
    return profile;
  }

 private:
  void add(std::uint64_t params, double fwd, double bwd) {
    LayerProfile layer;
    layer.index = static_cast<int>(layers_.size()) + 1;
    layer.params = params;
    layer.backward_time = bwd;
    layers_.push_back(layer);
    forward_ += fwd;
  }

  int batch_;
  double flops_rate_;
  double mem_rate_;
  double forward_ = 0.0;
  std::vector<LayerProfile> layers_;
};

// Sustained rates for one K80 die.
constexpr double kK80Flops = 1.5e12;
constexpr double kK80MemBytes = 160e9;

}  // namespace

ModelProfile representative_resnet50() {
  ArchitectureBuilder net(32, kK80Flops, kK80MemBytes);
  net.conv(7, 3, 64, 112, 112, false);
  net.batch_norm(64, 112, 112);
  struct Stage {
    int blocks, mid, out, spatial;
  };
  const Stage stages[] = {{3, 64, 256, 56}, {4, 128, 512, 28},
                          {6, 256, 1024, 14}, {3, 512, 2048, 7}};
  int in = 64;
  for (const auto& s : stages) {
    for (int b = 0; b < s.blocks; ++b) {
      const int hw = s.spatial;
      net.conv(1, in, s.mid, hw, hw, false);
      net.batch_norm(s.mid, hw, hw);
      net.conv(3, s.mid, s.mid, hw, hw, false);
      net.batch_norm(s.mid, hw, hw);
      net.conv(1, s.mid, s.out, hw, hw, false);
      net.batch_norm(s.out, hw, hw);
      if (b == 0) {
        net.conv(1, in, s.out, hw, hw, false);
        net.batch_norm(s.out, hw, hw);
      }
      in = s.out;
    }
  }
  net.fully_connected(2048, 1000);
  return net.finish("resnet50-representative");
}

ModelProfile representative_googlenet() {
  ArchitectureBuilder net(64, kK80Flops, kK80MemBytes);
  net.conv(7, 3, 64, 112, 112, true);
  net.conv(1, 64, 64, 56, 56, true);
  net.conv(3, 64, 192, 56, 56, true);
  struct Inception {
    int c1, c3r, c3, c5r, c5, proj;
  };
  auto inception = [&net](int in, const Inception& m, int hw) {
    net.conv(1, in, m.c1, hw, hw, true);
    net.conv(1, in, m.c3r, hw, hw, true);
    net.conv(3, m.c3r, m.c3, hw, hw, true);
    net.conv(1, in, m.c5r, hw, hw, true);
    net.conv(5, m.c5r, m.c5, hw, hw, true);
    net.conv(1, in, m.proj, hw, hw, true);
    return m.c1 + m.c3 + m.c5 + m.proj;
  };
  auto aux_head = [&net](int in) {
    net.conv(1, in, 128, 4, 4, true);
    net.fully_connected(2048, 1024);
    net.fully_connected(1024, 1000);
  };
  int c = 192;
  c = inception(c, {64, 96, 128, 16, 32, 32}, 28);
  c = inception(c, {128, 128, 192, 32, 96, 64}, 28);
  c = inception(c, {192, 96, 208, 16, 48, 64}, 14);
  aux_head(c);
  c = inception(c, {160, 112, 224, 24, 64, 64}, 14);
  c = inception(c, {128, 128, 256, 24, 64, 64}, 14);
  c = inception(c, {112, 144, 288, 32, 64, 64}, 14);
  aux_head(c);
  c = inception(c, {256, 160, 320, 32, 128, 128}, 14);
  c = inception(c, {256, 160, 320, 32, 128, 128}, 7);
  c = inception(c, {384, 192, 384, 48, 128, 128}, 7);
  net.fully_connected(c, 1000);
  return net.finish("googlenet-representative");
}

}  // namespace mgwfbp
