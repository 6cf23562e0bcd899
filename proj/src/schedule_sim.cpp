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

#include "mgwfbp/schedule_sim.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>

#include <json.hpp>

#include "mgwfbp/error.hpp"
#include "text_util.hpp"

namespace mgwfbp {

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kNaive: return "naive";
    case Strategy::kWFBP: return "wfbp";
    case Strategy::kSyncEASGD: return "synceasgd";
    case Strategy::kMGWFBP: return "mgwfbp";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "naive") return Strategy::kNaive;
  if (name == "wfbp") return Strategy::kWFBP;
  if (name == "synceasgd" || name == "sync" || name == "sync-easgd") {
    return Strategy::kSyncEASGD;
  }
  if (name == "mgwfbp" || name == "mg-wfbp") return Strategy::kMGWFBP;
  throw InputError("unknown strategy '" + std::string(name) +
                   "' (expected naive|wfbp|synceasgd|mgwfbp)");
}

std::string_view case_name(OverlapCase c) {
  switch (c) {
    case OverlapCase::kCase1: return "case1";
    case OverlapCase::kCase2: return "case2";
    case OverlapCase::kCase3: return "case3";
    case OverlapCase::kNotApplicable: return "n/a";
  }
  return "?";
}

bool Timeline::same_schedule(const Timeline& other) const {
  return tau_b == other.tau_b && tb == other.tb && tau_c == other.tau_c &&
         tc == other.tc && comm_end == other.comm_end &&
         compute_time == other.compute_time && t_iter == other.t_iter &&
         t_c_no == other.t_c_no;
}

namespace {

Timeline base_timeline(Strategy strategy, const ModelProfile& profile,
                       const CommModel& model) {
  profile.validate();
  model.validate();
  Timeline t;
  t.strategy = strategy;
  t.tau_b = backward_starts(profile);
  t.tb.reserve(profile.layers.size());
  for (const auto& layer : profile.layers) t.tb.push_back(layer.backward_time);
  t.compute_time = t.tau_b.front() + t.tb.front();
  return t;
}

void finish(Timeline& t) {
  t.comm_end.resize(t.tc.size());
  for (std::size_t i = 0; i < t.tc.size(); ++i) {
    t.comm_end[i] = t.tau_c[i] + t.tc[i];
  }
  t.t_iter = t.comm_end.front();
  t.t_c_no = t.t_iter - t.compute_time;
}

}  // namespace

Timeline simulate_naive(const ModelProfile& profile, const CommModel& model) {
  Timeline t = base_timeline(Strategy::kNaive, profile, model);
  const int n = profile.num_layers();
  t.tc.resize(n);
  for (int l = 1; l <= n; ++l) {
    t.tc[l - 1] = group_comm_time(profile.layer_bytes(l), model);
  }
  // All messages go out back to back once the backward pass is over.
  t.tau_c.resize(n);
  t.tau_c[n - 1] = t.compute_time;
  for (int i = n - 1; i-- > 0;) t.tau_c[i] = t.tau_c[i + 1] + t.tc[i + 1];
  finish(t);
  return t;
}

Timeline simulate_wfbp(const ModelProfile& profile, const CommModel& model) {
  Timeline t = base_timeline(Strategy::kWFBP, profile, model);
  const int n = profile.num_layers();
  t.tc.resize(n);
  for (int l = 1; l <= n; ++l) {
    t.tc[l - 1] = group_comm_time(profile.layer_bytes(l), model);
  }
  t.tau_c = calculate_comm_start(t.tc, t.tb, t.tau_b);
  finish(t);
  t.overlap_case = classify_case(profile, model);
  return t;
}

Timeline simulate_sync_easgd(const ModelProfile& profile, const CommModel& model) {
  Timeline t = base_timeline(Strategy::kSyncEASGD, profile, model);
  const int n = profile.num_layers();
  t.tc.assign(n, 0.0);
  t.tau_c.resize(n);
  for (int i = 0; i < n; ++i) t.tau_c[i] = t.tau_b[i] + t.tb[i];
  // One message for everything, launched when layer 1 is done.
  t.tc[0] = group_comm_time(total_bytes(profile), model);
  finish(t);
  return t;
}

Timeline simulate_mgwfbp(const ModelProfile& profile, const CommModel& model,
                         const MergePlan& plan) {
  Timeline t = base_timeline(Strategy::kMGWFBP, profile, model);
  const int n = profile.num_layers();
  if (plan.num_layers() != n) {
    throw InputError("simulate_mgwfbp: plan covers " +
                     std::to_string(plan.num_layers()) + " layers, profile has " +
                     std::to_string(n));
  }
  t.tc.assign(n, 0.0);
  Bytes pending = 0;
  for (int l = n; l >= 1; --l) {
    pending += profile.layer_bytes(l);
    if (!plan.is_merged(l)) {
      t.tc[l - 1] = group_comm_time(pending, model);
      pending = 0;
    }
  }
  t.tau_c = calculate_comm_start(t.tc, t.tb, t.tau_b);
  finish(t);
  return t;
}

Timeline simulate(Strategy strategy, const ModelProfile& profile,
                  const CommModel& model) {
  switch (strategy) {
    case Strategy::kNaive: return simulate_naive(profile, model);
    case Strategy::kWFBP: return simulate_wfbp(profile, model);
    case Strategy::kSyncEASGD: return simulate_sync_easgd(profile, model);
    case Strategy::kMGWFBP:
      return simulate_mgwfbp(profile, model, find_merge_plan(profile, model));
  }
  throw InputError("unknown strategy");
}

OverlapCase classify_case(const ModelProfile& profile, const CommModel& model) {
  profile.validate();
  model.validate();
  const int n = profile.num_layers();
  bool hidden_layerwise = true;
  for (int l = 2; l <= n; ++l) {
    if (group_comm_time(profile.layer_bytes(l), model) >
        profile.layer(l - 1).backward_time) {
      hidden_layerwise = false;
      break;
    }
  }
  if (hidden_layerwise) return OverlapCase::kCase1;

  std::vector<Seconds> tc(n);
  for (int l = 1; l <= n; ++l) {
    tc[l - 1] = group_comm_time(profile.layer_bytes(l), model);
  }
  std::vector<Seconds> tb;
  for (const auto& layer : profile.layers) tb.push_back(layer.backward_time);
  const auto taub = backward_starts(profile);
  const auto tauc = calculate_comm_start(tc, tb, taub);
  // Layer 1 starts on time exactly when only t_c(1) is left exposed.
  return tauc.front() == taub.front() + tb.front() ? OverlapCase::kCase2
                                                   : OverlapCase::kCase3;
}

double speedup(int n_nodes, const Timeline& timeline) {
  if (!(timeline.t_iter > 0.0)) {
    throw InputError("speedup: iteration time must be positive");
  }
  return n_nodes * timeline.compute_time / timeline.t_iter;
}

std::vector<SweepRow> sweep(const ModelProfile& profile,
                            const SweepOptions& options) {
  if (options.node_counts.empty()) throw InputError("sweep: empty node list");
  if (options.strategies.empty()) throw InputError("sweep: no strategies");
  if (options.frozen_plan && options.frozen_plan->num_layers() != profile.num_layers()) {
    throw InputError("sweep: frozen plan does not match the profile");
  }
  std::vector<SweepRow> rows;
  for (const int n : options.node_counts) {
    if (n < 1) throw InputError("sweep: node counts must be >= 1");
    CommModel model;
    if (n > 1) {
      CollectiveParams params = options.collective;
      params.n_nodes = n;
      model = derive_ab(params);
    }
    for (const Strategy s : options.strategies) {
      SweepRow row;
      row.n_nodes = n;
      row.strategy = s;
      Timeline t;
      if (s == Strategy::kMGWFBP) {
        const MergePlan plan = options.frozen_plan
                                   ? *options.frozen_plan
                                   : find_merge_plan(profile, model);
        t = simulate_mgwfbp(profile, model, plan);
        row.plan = plan.describe();
      } else {
        t = simulate(s, profile, model);
      }
      row.t_iter = t.t_iter;
      row.t_c_no = t.t_c_no;
      row.speedup = speedup(n, t);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::optional<int> find_crossing(std::span<const SweepRow> rows) {
  std::map<int, std::pair<std::optional<Seconds>, std::optional<Seconds>>> by_n;
  for (const auto& r : rows) {
    if (r.strategy == Strategy::kWFBP) by_n[r.n_nodes].first = r.t_iter;
    if (r.strategy == Strategy::kSyncEASGD) by_n[r.n_nodes].second = r.t_iter;
  }
  bool wfbp_was_ahead = false;
  for (const auto& [n, times] : by_n) {
    if (!times.first || !times.second) continue;
    if (*times.first <= *times.second) {
      wfbp_was_ahead = true;
    } else if (wfbp_was_ahead) {
      return n;
    }
  }
  return std::nullopt;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "n_nodes,strategy,t_iter_s,speedup,t_c_no_s\n";
  for (const auto& r : rows) {
    out << r.n_nodes << ',' << strategy_name(r.strategy) << ','
        << format_double(r.t_iter) << ',' << format_double(r.speedup) << ','
        << format_double(r.t_c_no) << '\n';
  }
}

std::vector<SweepRow> read_sweep_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) ||
      trim(line) != "n_nodes,strategy,t_iter_s,speedup,t_c_no_s") {
    throw InputError("sweep csv: expected header 'n_nodes,strategy,t_iter_s,speedup,t_c_no_s'");
  }
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    if (f.size() != 5) throw InputError("sweep csv: expected 5 fields");
    SweepRow r;
    r.n_nodes = parse_number<int>(f[0], "n_nodes");
    r.strategy = parse_strategy(trim(f[1]));
    r.t_iter = parse_number<double>(f[2], "t_iter_s");
    r.speedup = parse_number<double>(f[3], "speedup");
    r.t_c_no = parse_number<double>(f[4], "t_c_no_s");
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string timeline_events_json(const Timeline& timeline) {
  nlohmann::json events = nlohmann::json::array();
  const int n = static_cast<int>(timeline.tb.size());
  for (int l = n; l >= 1; --l) {
    events.push_back({{"layer", l},
                      {"kind", "backward"},
                      {"start_s", timeline.tau_b[l - 1]},
                      {"end_s", timeline.tau_b[l - 1] + timeline.tb[l - 1]}});
  }
  for (int l = n; l >= 1; --l) {
    if (timeline.tc[l - 1] == 0.0) continue;
    events.push_back({{"layer", l},
                      {"kind", "comm"},
                      {"start_s", timeline.tau_c[l - 1]},
                      {"end_s", timeline.comm_end[l - 1]}});
  }
  return events.dump(1) + "\n";
}

}  // namespace mgwfbp
