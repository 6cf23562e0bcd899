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

#include "mgwfbp/merge_planner.hpp"

#include <algorithm>
#include <fstream>
#include <istream>

#include <json.hpp>

#include "mgwfbp/error.hpp"
#include "mgwfbp/schedule_sim.hpp"

namespace mgwfbp {

MergePlan::MergePlan(std::set<int> merged_layers, int num_layers)
    : merged_(std::move(merged_layers)), num_layers_(num_layers) {
  if (num_layers < 1) throw InputError("merge plan: layer count must be >= 1");
  for (const int l : merged_) {
    if (l < 2 || l > num_layers) {
      throw InputError("merge plan: merged layer " + std::to_string(l) +
                       " outside [2, " + std::to_string(num_layers) + "]");
    }
  }
}

MergePlan MergePlan::all(int num_layers) {
  std::set<int> merged;
  for (int l = 2; l <= num_layers; ++l) merged.insert(l);
  return MergePlan(std::move(merged), num_layers);
}

std::vector<LayerGroup> MergePlan::groups() const {
  std::vector<LayerGroup> out;
  int high = num_layers_;
  for (int l = num_layers_; l >= 1; --l) {
    if (!is_merged(l)) {
      out.push_back({high, l});
      high = l - 1;
    }
  }
  return out;
}

std::string MergePlan::describe() const {
  std::string out;
  for (const auto& g : groups()) {
    out += "[" + std::to_string(g.high) + ".." + std::to_string(g.low) + "]";
  }
  return out;
}

Seconds group_comm_time(Bytes bytes, const CommModel& model) {
  return bytes == 0 ? 0.0 : allreduce_time(bytes, model);
}

std::vector<Seconds> calculate_comm_start(std::span<const Seconds> tc,
                                          std::span<const Seconds> tb,
                                          std::span<const Seconds> taub) {
  if (tc.size() != tb.size() || tb.size() != taub.size() || tb.empty()) {
    throw InputError("calculate_comm_start: arrays must be non-empty and of equal length");
  }
  const std::size_t n = tb.size();
  std::vector<Seconds> tauc(n);
  tauc[n - 1] = taub[n - 1] + tb[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) {
    tauc[i] = std::max(tauc[i + 1] + tc[i + 1], taub[i] + tb[i]);
  }
  return tauc;
}

std::vector<Seconds> backward_starts(const ModelProfile& profile) {
  const int n = profile.num_layers();
  std::vector<Seconds> taub(n);
  taub[n - 1] = profile.forward_time;
  for (int i = n - 1; i-- > 0;) {
    taub[i] = taub[i + 1] + profile.layers[i + 1].backward_time;
  }
  return taub;
}

Seconds backward_end(const ModelProfile& profile) {
  return backward_starts(profile).front() + profile.layers.front().backward_time;
}

PlannerState initial_state(const ModelProfile& profile, const CommModel& model) {
  profile.validate();
  model.validate();
  PlannerState s;
  s.model = model;
  s.element_bytes = profile.element_bytes;
  const int n = profile.num_layers();
  s.tb.resize(n);
  s.tc.resize(n);
  s.p.resize(n);
  for (int i = 0; i < n; ++i) {
    s.tb[i] = profile.layers[i].backward_time;
    s.p[i] = profile.layers[i].params;
    s.tc[i] = group_comm_time(profile.layer_bytes(i + 1), model);
  }
  s.taub = backward_starts(profile);
  s.backward_end = s.taub.front() + s.tb.front();
  s.tauc = calculate_comm_start(s.tc, s.tb, s.taub);
  return s;
}

PlannerState apply_merge(PlannerState state, int l) {
  if (l < 2 || l > state.num_layers()) {
    throw InputError("apply_merge: layer " + std::to_string(l) +
                     " outside [2, " + std::to_string(state.num_layers()) + "]");
  }
  state.tc[l - 1] = 0.0;
  state.p[l - 2] += state.p[l - 1];
  state.p[l - 1] = 0;
  state.tc[l - 2] = group_comm_time(
      static_cast<Bytes>(state.element_bytes) * state.p[l - 2], state.model);
  state.tauc = calculate_comm_start(state.tc, state.tb, state.taub);
  return state;
}

MergePlan find_merge_plan(const ModelProfile& profile, const CommModel& model) {
  PlannerState state = initial_state(profile, model);
  const int n = state.num_layers();
  std::set<int> merged;
  for (int l = n; l >= 2; --l) {
    if (state.p[l - 1] == 0) continue;
    // Empty layers send nothing, so the message would ride along with the
    // next layer below that does.
    int k = l - 1;
    while (k >= 1 && state.p[k - 1] == 0) --k;
    if (k == 0) continue;
    if (state.tau_b(k - 1) - state.tauc[l - 1] < model.a) {
      for (int j = l; j > k; --j) {
        state = apply_merge(std::move(state), j);
        merged.insert(j);
      }
    }
  }
  return MergePlan(std::move(merged), n);
}

MergePlan brute_force_plan(const ModelProfile& profile, const CommModel& model,
                           int max_layers) {
  profile.validate();
  const int n = profile.num_layers();
  if (n > max_layers) {
    throw InputError("brute_force_plan: " + std::to_string(n) +
                     " layers exceeds the limit of " + std::to_string(max_layers));
  }
  if (n > 30) throw InputError("brute_force_plan: at most 30 layers supported");

  // Bit i of the mask marks layer i+2 as merged.
  const std::uint32_t subsets = 1u << (n - 1);
  std::set<int> best;
  Seconds best_time = 0.0;
  bool have_best = false;
  for (std::uint32_t mask = 0; mask < subsets; ++mask) {
    std::set<int> candidate;
    for (int bit = 0; bit < n - 1; ++bit) {
      if (mask & (1u << bit)) candidate.insert(bit + 2);
    }
    const MergePlan plan(candidate, n);
    const Seconds t = simulate_mgwfbp(profile, model, plan).t_iter;
    const bool better =
        !have_best || t < best_time ||
        (t == best_time &&
         (candidate.size() < best.size() ||
          (candidate.size() == best.size() && candidate < best)));
    if (better) {
      best = std::move(candidate);
      best_time = t;
      have_best = true;
    }
  }
  return MergePlan(std::move(best), n);
}

std::string save_plan(const MergePlan& plan, const std::string& profile_name) {
  nlohmann::json doc;
  doc["profile"] = profile_name;
  doc["num_layers"] = plan.num_layers();
  doc["merged_layers"] = std::vector<int>(plan.merged_layers().begin(),
                                          plan.merged_layers().end());
  return doc.dump() + "\n";
}

MergePlan load_plan(std::istream& in, int num_layers) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(std::string("plan: parse error: ") + e.what());
  }
  const nlohmann::json* list = &doc;
  if (doc.is_object()) {
    if (doc.contains("num_layers") && doc["num_layers"] != num_layers) {
      throw InputError("plan: written for " + doc["num_layers"].dump() +
                       " layers, profile has " + std::to_string(num_layers));
    }
    if (!doc.contains("merged_layers")) throw InputError("plan: missing 'merged_layers'");
    list = &doc["merged_layers"];
  }
  if (!list->is_array()) throw InputError("plan: merged_layers must be an array");
  std::set<int> merged;
  for (const auto& v : *list) {
    if (!v.is_number_integer()) throw InputError("plan: layer indices must be integers");
    if (!merged.insert(v.get<int>()).second) {
      throw InputError("plan: duplicate layer " + v.dump());
    }
  }
  return MergePlan(std::move(merged), num_layers);
}

MergePlan load_plan_file(const std::string& path, int num_layers) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open plan '" + path + "'");
  return load_plan(in, num_layers);
}

}  // namespace mgwfbp
