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
// Merged-gradient planning.
//
// A merged-gradient layer l does not launch its own all-reduce; its gradients
// ride along with layer l-1's message. The planner walks l = L..2 and merges
// whenever tau_b(l-2) - tau_c(l) < a, recomputing communication start times
// after each merge. brute_force_plan() enumerates every subset and is the
// reference the greedy sweep is checked against.

#pragma once

#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mgwfbp/comm_model.hpp"
#include "mgwfbp/model_profile.hpp"

namespace mgwfbp {

// A contiguous run of layers sharing one all-reduce. high >= low; the
// message is launched when layer `low` (the last one computed) finishes.
struct LayerGroup {
  int high = 0;
  int low = 0;
  friend bool operator==(const LayerGroup&, const LayerGroup&) = default;
};

class MergePlan {
 public:
  MergePlan() = default;
  // Throws InputError if any index is outside [2, num_layers].
  MergePlan(std::set<int> merged_layers, int num_layers);

  static MergePlan none(int num_layers) { return MergePlan({}, num_layers); }
  static MergePlan all(int num_layers);

  const std::set<int>& merged_layers() const { return merged_; }
  int num_layers() const { return num_layers_; }
  bool is_merged(int l) const { return merged_.contains(l); }
  std::size_t size() const { return merged_.size(); }

  // Groups in communication order (highest layers first).
  std::vector<LayerGroup> groups() const;
  // e.g. "[4..3][2..1]".
  std::string describe() const;

  friend bool operator==(const MergePlan&, const MergePlan&) = default;

 private:
  std::set<int> merged_;
  int num_layers_ = 0;
};

// Per-layer arrays. Index i holds layer i+1.
struct PlannerState {
  std::vector<Seconds> tc;
  std::vector<Seconds> tb;
  std::vector<Seconds> taub;
  std::vector<Seconds> tauc;
  std::vector<std::uint64_t> p;
  CommModel model;
  int element_bytes = 4;
  // Completion of the whole backward pass, i.e. tau_b(0).
  Seconds backward_end = 0.0;

  int num_layers() const { return static_cast<int>(tb.size()); }
  // tau_b with the l = 0 extension.
  Seconds tau_b(int l) const { return l == 0 ? backward_end : taub[l - 1]; }
};

// Communication cost of a message of `bytes`; empty messages are never sent.
Seconds group_comm_time(Bytes bytes, const CommModel& model);

// tau_c(L) = tau_b(L) + t_b(L);
// tau_c(l) = max(tau_c(l+1) + t_c(l+1), tau_b(l) + t_b(l)).
std::vector<Seconds> calculate_comm_start(std::span<const Seconds> tc,
                                          std::span<const Seconds> tb,
                                          std::span<const Seconds> taub);

// Backward start times: tau_b(L) = t_f, tau_b(l) = tau_b(l+1) + t_b(l+1).
std::vector<Seconds> backward_starts(const ModelProfile& profile);
// t_f + t_b accumulated in backward order (bit-identical to tau_b(1)+t_b(1)).
Seconds backward_end(const ModelProfile& profile);

PlannerState initial_state(const ModelProfile& profile, const CommModel& model);

// Folds layer l into l-1: t_c(l) = 0, p(l-1) += p(l), t_c(l-1) recomputed,
// tau_c refreshed. Throws InputError if l is outside [2, L].
PlannerState apply_merge(PlannerState state, int l);

MergePlan find_merge_plan(const ModelProfile& profile, const CommModel& model);

// Exhaustive search over all 2^(L-1) plans using the MG-WFBP timeline.
// Ties go to fewer merged layers, then the lexicographically smallest set.
MergePlan brute_force_plan(const ModelProfile& profile, const CommModel& model,
                           int max_layers = 16);

// Companion plan file: {"profile": name, "num_layers": L,
// "merged_layers": [sorted ints]}.
std::string save_plan(const MergePlan& plan, const std::string& profile_name);
MergePlan load_plan(std::istream& in, int num_layers);
MergePlan load_plan_file(const std::string& path, int num_layers);

}  // namespace mgwfbp
