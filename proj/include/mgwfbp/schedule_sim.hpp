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
// Iteration timelines for the four gradient communication strategies.
//
// All strategies share one serialized communication channel; a layer's
// message may start only once its gradients exist and the previous message
// has finished. Layers (or groups) with zero bytes send nothing.

#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mgwfbp/comm_model.hpp"
#include "mgwfbp/merge_planner.hpp"
#include "mgwfbp/model_profile.hpp"

namespace mgwfbp {

enum class Strategy { kNaive, kWFBP, kSyncEASGD, kMGWFBP };
enum class OverlapCase { kCase1, kCase2, kCase3, kNotApplicable };

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);
std::string_view case_name(OverlapCase c);

// Index i holds layer i+1. For layers that send nothing, t_c is 0 and
// comm_end == tau_c.
struct Timeline {
  Strategy strategy = Strategy::kWFBP;
  std::vector<Seconds> tau_b;
  std::vector<Seconds> tb;
  std::vector<Seconds> tau_c;
  std::vector<Seconds> tc;
  std::vector<Seconds> comm_end;
  Seconds compute_time = 0.0;  // t_f + t_b
  Seconds t_iter = 0.0;
  Seconds t_c_no = 0.0;
  OverlapCase overlap_case = OverlapCase::kNotApplicable;

  // Same schedule, ignoring the strategy label.
  bool same_schedule(const Timeline& other) const;
};

Timeline simulate_naive(const ModelProfile& profile, const CommModel& model);
Timeline simulate_wfbp(const ModelProfile& profile, const CommModel& model);
Timeline simulate_sync_easgd(const ModelProfile& profile, const CommModel& model);
Timeline simulate_mgwfbp(const ModelProfile& profile, const CommModel& model,
                         const MergePlan& plan);
// Plans with find_merge_plan() for MG-WFBP.
Timeline simulate(Strategy strategy, const ModelProfile& profile,
                  const CommModel& model);

// Case 1: every t_c(l) <= t_b(l-1). Case 2: some layer violates that but the
// WFBP backlog drains before layer 1's gradients are ready. Case 3 otherwise.
OverlapCase classify_case(const ModelProfile& profile, const CommModel& model);

// N * (t_f + t_b) / t_iter.
double speedup(int n_nodes, const Timeline& timeline);

struct SweepRow {
  int n_nodes = 1;
  Strategy strategy = Strategy::kWFBP;
  Seconds t_iter = 0.0;
  double speedup = 1.0;
  Seconds t_c_no = 0.0;
  std::string plan;  // MG-WFBP only
};

struct SweepOptions {
  // algorithm/alpha/beta/gamma are used; n_nodes is taken from the list.
  CollectiveParams collective;
  std::vector<int> node_counts;
  std::vector<Strategy> strategies;
  // Reuse this plan at every N instead of replanning per N.
  std::optional<MergePlan> frozen_plan;
};

// N == 1 means a single worker: no communication at all.
std::vector<SweepRow> sweep(const ModelProfile& profile,
                            const SweepOptions& options);

// Smallest N at which SyncEASGD becomes strictly faster than WFBP after WFBP
// was at least as fast at a smaller N.
std::optional<int> find_crossing(std::span<const SweepRow> rows);

// `n_nodes,strategy,t_iter_s,speedup,t_c_no_s`.
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);
std::vector<SweepRow> read_sweep_csv(std::istream& in);

// JSON array of {layer, kind: backward|comm, start_s, end_s} for Gantt
// plotting. Layers that send nothing have no comm event.
std::string timeline_events_json(const Timeline& timeline);

}  // namespace mgwfbp
