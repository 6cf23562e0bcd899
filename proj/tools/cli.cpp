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

#include "cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mgwfbp/allreduce_net.hpp"
#include "mgwfbp/error.hpp"
#include "mgwfbp/merge_planner.hpp"
#include "mgwfbp/model_profile.hpp"

namespace mgwfbp::cli {

int CommSource::count() const {
  return (a.has_value() || b.has_value() ? 1 : 0) + (collective.has_value() ? 1 : 0) +
         (bench_csv.has_value() ? 1 : 0);
}

CollectiveParams CommSource::collective_params() const {
  CollectiveParams params;
  params.algorithm = parse_collective(collective.value_or("ring"));
  params.alpha = alpha;
  params.beta = beta;
  params.gamma = mgwfbp::gamma_per_float(gamma_per_float);
  return params;
}

CommModel CommSource::resolve(int n_nodes) const {
  if (count() != 1) {
    throw InputError(
        "give exactly one communication model source: --comm-a/--comm-b, "
        "--collective with --alpha/--beta/--gamma, or --bench-csv");
  }
  if (a || b) {
    if (!a || !b) throw InputError("--comm-a and --comm-b must be given together");
    CommModel m{*a, *b};
    m.validate();
    return m;
  }
  if (collective) {
    if (n_nodes == 1) return CommModel{};
    CollectiveParams params = collective_params();
    params.n_nodes = n_nodes;
    return derive_ab(params);
  }
  std::ifstream in(*bench_csv);
  if (!in) throw InputError("cannot open bench csv '" + *bench_csv + "'");
  const auto samples = read_measurements_csv(in);
  return fit_ab(samples);
}

namespace {

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<int>(v));
    } catch (const std::exception&) {
      throw InputError(std::string("cannot parse ") + what + " entry '" + item + "'");
    }
  }
  return out;
}

std::vector<Bytes> parse_size_list(const std::string& text) {
  std::vector<Bytes> out;
  for (const int v : parse_int_list(text, "--sizes")) {
    if (v <= 0) throw InputError("--sizes entries must be positive");
    out.push_back(static_cast<Bytes>(v));
  }
  return out;
}

std::vector<Strategy> parse_strategies(const std::vector<std::string>& names) {
  std::vector<Strategy> out;
  for (const auto& n : names) out.push_back(parse_strategy(n));
  return out;
}

void add_comm_options(CLI::App* app, CommSource& comm) {
  app->add_option("--comm-a", comm.a, "all-reduce startup a [s]");
  app->add_option("--comm-b", comm.b, "all-reduce slope b [s/byte]");
  app->add_option("--collective", comm.collective, "ring|bt|rd|rhd (derive a, b)");
  app->add_option("--alpha", comm.alpha, "per-link startup [s]");
  app->add_option("--beta", comm.beta, "per-byte transfer [s/byte]");
  app->add_option("--gamma", comm.gamma_per_float,
                  "summation cost per 32-bit float [s] (converted to per-byte)");
  app->add_option("--bench-csv", comm.bench_csv, "fit a, b from bytes,seconds,n_nodes CSV");
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw InputError("cannot write '" + path + "'");
  f << text;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

std::string plan_set(const MergePlan& plan) {
  std::string s = "{";
  bool first = true;
  for (const int l : plan.merged_layers()) {
    s += (first ? "" : ",") + std::to_string(l);
    first = false;
  }
  return s + "}";
}

int single_node_count(const RunConfig& cfg) {
  if (cfg.nodes.size() > 1) throw InputError("--nodes takes a single value here");
  return cfg.nodes.empty() ? 2 : cfg.nodes.front();
}

void print_profile_header(const ModelProfile& profile, const CommModel& model,
                          std::ostream& out) {
  out << "profile      " << profile.name << "  L=" << profile.num_layers()
      << "  params=" << total_params(profile) << "  bytes=" << total_bytes(profile)
      << "\n";
  out << "comm model   " << format_comm_model(model) << "\n";
}

int cmd_plan(const RunConfig& cfg, std::ostream& out) {
  const ModelProfile profile = load_profile_file(cfg.profile_path);
  const CommModel model = cfg.comm.resolve(single_node_count(cfg));
  const MergePlan plan = find_merge_plan(profile, model);
  print_profile_header(profile, model, out);
  out << "overlap      " << case_name(classify_case(profile, model)) << "\n";
  out << "merged       " << plan_set(plan) << "\n";
  out << "groups       " << plan.describe() << "\n";
  out << std::left << std::setw(13) << "strategy" << std::setw(16) << "t_iter_s"
      << "t_c_no_s\n";
  const Timeline rows[] = {simulate_wfbp(profile, model),
                           simulate_sync_easgd(profile, model),
                           simulate_mgwfbp(profile, model, plan)};
  for (const auto& t : rows) {
    out << std::left << std::setw(13) << strategy_name(t.strategy) << std::setw(16)
        << fmt(t.t_iter) << fmt(t.t_c_no) << "\n";
  }
  if (!cfg.out_path.empty()) {
    write_text(cfg.out_path, save_plan(plan, profile.name), out);
  }
  return 0;
}

int cmd_simulate(const RunConfig& cfg, const std::string& events_path, std::ostream& out) {
  const ModelProfile profile = load_profile_file(cfg.profile_path);
  const int n = single_node_count(cfg);
  const CommModel model = cfg.comm.resolve(n);
  const auto strategies = parse_strategies(
      cfg.strategies.empty()
          ? std::vector<std::string>{"naive", "wfbp", "synceasgd", "mgwfbp"}
          : cfg.strategies);
  print_profile_header(profile, model, out);
  out << std::left << std::setw(13) << "strategy" << std::setw(16) << "t_iter_s"
      << std::setw(16) << "t_c_no_s" << std::setw(12) << "speedup" << "case\n";
  nlohmann::json events = nlohmann::json::object();
  for (const Strategy s : strategies) {
    const Timeline t = simulate(s, profile, model);
    out << std::left << std::setw(13) << strategy_name(s) << std::setw(16) << fmt(t.t_iter)
        << std::setw(16) << fmt(t.t_c_no) << std::setw(12) << fmt(speedup(n, t))
        << case_name(t.overlap_case) << "\n";
    events[std::string(strategy_name(s))] = nlohmann::json::parse(timeline_events_json(t));
  }
  if (!events_path.empty()) write_text(events_path, events.dump(1) + "\n", out);
  return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& frozen_plan_path, std::ostream& out) {
  const ModelProfile profile = load_profile_file(cfg.profile_path);
  if (cfg.comm.count() != 1 || !cfg.comm.collective) {
    throw InputError("sweep derives (a, b) per N: give --collective with --alpha/--beta/--gamma");
  }
  SweepOptions opts;
  opts.collective = cfg.comm.collective_params();
  opts.node_counts = cfg.nodes.empty() ? std::vector<int>{2, 4, 8, 16, 32, 64} : cfg.nodes;
  opts.strategies = parse_strategies(
      cfg.strategies.empty() ? std::vector<std::string>{"wfbp", "synceasgd", "mgwfbp"}
                             : cfg.strategies);
  if (!frozen_plan_path.empty()) {
    opts.frozen_plan = load_plan_file(frozen_plan_path, profile.num_layers());
  }
  const auto rows = sweep(profile, opts);
  std::ostringstream csv;
  write_sweep_csv(csv, rows);
  if (cfg.out_path.empty()) {
    out << csv.str();
  } else {
    write_text(cfg.out_path, csv.str(), out);
    out << "wrote " << rows.size() << " rows to " << cfg.out_path << "\n";
  }
  if (const auto crossing = find_crossing(rows)) {
    out << "# crossing: synceasgd overtakes wfbp at N=" << *crossing << "\n";
  } else {
    out << "# crossing: none\n";
  }
  return 0;
}

struct BenchArgs {
  std::string sizes = "4096,8192,16384,32768,65536,131072,262144,524288,1048576,2097152,4194304";
  int repeats = 10;
  std::size_t chunk_elements = 0;
};

int cmd_bench(const RunConfig& cfg, const BenchArgs& args, std::ostream& out) {
  const int n = single_node_count(cfg);
  const auto sizes = parse_size_list(args.sizes);
  const auto results = run_local_workers(
      n,
      [&](const RendezvousOptions& opts) {
        RingCommunicator ring = RingCommunicator::connect(opts);
        std::ostringstream os;
        write_measurements_csv(os, bench_allreduce(sizes, ring, args.repeats));
        return os.str();
      },
      cfg.base_port, std::chrono::seconds(300), args.chunk_elements);
  write_text(cfg.out_path, results.front(), out);
  std::istringstream in(results.front());
  const auto samples = read_measurements_csv(in);
  if (!cfg.out_path.empty()) out << "wrote " << samples.size() << " measurements to " << cfg.out_path << "\n";
  out << "# fit " << format_comm_model(fit_ab(samples)) << "\n";
  return 0;
}

struct EmulateArgs {
  std::string plan_path;
  bool no_plan = false;
  std::string spin = "auto";
};

EmulationOptions emulation_options(const RunConfig& cfg, const EmulateArgs& args) {
  EmulationOptions opts;
  opts.iterations = cfg.iterations;
  if (args.spin != "auto") {
    opts.spin_threshold = std::chrono::microseconds(parse_int_list(args.spin, "--spin-us").at(0));
  }
  return opts;
}

int cmd_emulate(const RunConfig& cfg, const EmulateArgs& args, std::ostream& out) {
  const ModelProfile profile = load_profile_file(cfg.profile_path);
  const int n = single_node_count(cfg);
  std::optional<CommModel> model;
  if (cfg.comm.count() > 0) model = cfg.comm.resolve(n);
  MergePlan plan = MergePlan::none(profile.num_layers());
  if (!args.plan_path.empty()) {
    plan = load_plan_file(args.plan_path, profile.num_layers());
  } else if (!args.no_plan) {
    if (!model) throw InputError("emulate: give --plan, --no-plan, or a comm model to plan with");
    plan = find_merge_plan(profile, *model);
  }
  const auto opts = emulation_options(cfg, args);
  const auto results = run_local_workers(
      n,
      [&](const RendezvousOptions& ro) {
        RingCommunicator ring = RingCommunicator::connect(ro);
        return run_emulation(profile, plan, ring, opts).to_json();
      },
      cfg.base_port, std::chrono::seconds(600));
  std::vector<EmulationReport> reports;
  for (const auto& r : results) reports.push_back(EmulationReport::from_json(r));
  const EmulationReport merged = merge_reports(reports);

  out << "workers      " << n << "\n";
  out << "plan         " << plan_set(plan) << "  " << plan.describe() << "\n";
  out << "iterations   " << merged.iteration_seconds.size() << "\n";
  out << "mean_s       " << fmt(merged.mean_seconds) << "\n";
  out << "stddev_s     " << fmt(merged.stddev_seconds) << "\n";
  if (model) {
    const double predicted = simulate_mgwfbp(profile, *model, plan).t_iter;
    out << "predicted_s  " << fmt(predicted) << "  (" << format_comm_model(*model) << ")\n";
  }
  out << "allreduces   " << merged.allreduce_calls << "\n";
  out << "verified     " << (merged.verified ? "true" : "false") << "\n";
  if (!cfg.out_path.empty()) write_text(cfg.out_path, merged.to_json() + "\n", out);
  if (!merged.verified) {
    throw NetworkError("emulation: reduced values did not match the expected sums");
  }
  return 0;
}

struct WorkerArgs {
  int rank = 0;
  std::string mode = "bench";
  std::string plan_path;
};

int cmd_worker(const RunConfig& cfg, const WorkerArgs& w, const BenchArgs& bench,
               const EmulateArgs& emu, std::ostream& out) {
  RendezvousOptions ro;
  ro.rank = w.rank;
  ro.n_workers = single_node_count(cfg);
  ro.base_port = cfg.base_port == 0 ? 29500 : cfg.base_port;
  ro.chunk_elements = bench.chunk_elements;
  ro.timeout = std::chrono::seconds(300);
  if (w.mode == "bench") {
    const auto sizes = parse_size_list(bench.sizes);
    RingCommunicator ring = RingCommunicator::connect(ro);
    std::ostringstream os;
    write_measurements_csv(os, bench_allreduce(sizes, ring, bench.repeats));
    write_text(cfg.out_path, os.str(), out);
    return 0;
  }
  if (w.mode == "emulate") {
    const ModelProfile profile = load_profile_file(cfg.profile_path);
    const MergePlan plan = w.plan_path.empty()
                               ? MergePlan::none(profile.num_layers())
                               : load_plan_file(w.plan_path, profile.num_layers());
    RingCommunicator ring = RingCommunicator::connect(ro);
    const auto report = run_emulation(profile, plan, ring, emulation_options(cfg, emu));
    write_text(cfg.out_path, report.to_json() + "\n", out);
    return report.verified ? 0 : 2;
  }
  throw InputError("worker --mode must be bench or emulate");
}

struct ProfileArgs {
  std::string builtin;
  int synth_layers = 0;
  std::uint64_t min_params = 100;
  std::uint64_t max_params = 5'000'000;
  double time_scale = 1e-2;
};

int cmd_profile(const RunConfig& cfg, const ProfileArgs& p, std::ostream& out) {
  ModelProfile profile;
  if (!p.builtin.empty() && p.synth_layers > 0) {
    throw InputError("give either --builtin or --synth, not both");
  }
  if (p.builtin == "resnet50") {
    profile = representative_resnet50();
  } else if (p.builtin == "googlenet") {
    profile = representative_googlenet();
  } else if (!p.builtin.empty()) {
    throw InputError("unknown builtin profile '" + p.builtin + "' (resnet50|googlenet)");
  } else if (p.synth_layers > 0) {
    SynthOptions o;
    o.num_layers = p.synth_layers;
    o.min_params = p.min_params;
    o.max_params = p.max_params;
    o.time_scale = p.time_scale;
    o.seed = cfg.seed;
    profile = synth_profile(o);
  } else {
    throw InputError("profile: give --builtin NAME or --synth L");
  }
  write_text(cfg.out_path, save_profile(profile), out);
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Merged-gradient communication planning, simulation and measurement"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::string nodes_text;
  std::string strategies_text;
  std::string events_path;
  std::string frozen_plan;
  BenchArgs bench;
  EmulateArgs emu;
  WorkerArgs worker;
  ProfileArgs prof;

  auto common = [&](CLI::App* sub, bool needs_profile) {
    auto* opt = sub->add_option("--profile", cfg.profile_path, "model profile (.profile.json)");
    if (needs_profile) opt->required();
    add_comm_options(sub, cfg.comm);
    sub->add_option("--nodes", nodes_text, "node count (or comma list for sweep)");
    sub->add_option("--out", cfg.out_path, "output path (default stdout)");
    sub->add_option("--seed", cfg.seed, "random seed");
  };

  auto* plan = app.add_subcommand("plan", "compute the merged-gradient plan");
  common(plan, true);

  auto* simulate = app.add_subcommand("simulate", "simulate iteration timelines");
  common(simulate, true);
  simulate->add_option("--strategies", strategies_text, "comma list: naive,wfbp,synceasgd,mgwfbp");
  simulate->add_option("--events", events_path, "write per-strategy event lists (JSON)");

  auto* sweep_cmd = app.add_subcommand("sweep", "scaling sweep over node counts");
  common(sweep_cmd, true);
  sweep_cmd->add_option("--strategies", strategies_text, "comma list of strategies");
  sweep_cmd->add_option("--freeze-plan", frozen_plan, "reuse this plan file at every N");

  auto* bench_cmd = app.add_subcommand("bench", "measure ring all-reduce on loopback");
  common(bench_cmd, false);
  bench_cmd->add_option("--sizes", bench.sizes, "comma list of message sizes in bytes");
  bench_cmd->add_option("--repeats", bench.repeats, "timed repetitions per size");
  bench_cmd->add_option("--chunk-elements", bench.chunk_elements, "max floats per frame");
  bench_cmd->add_option("--base-port", cfg.base_port, "rendezvous port (0 = ephemeral)");

  auto* emulate = app.add_subcommand("emulate", "run the merged-gradient worker emulation");
  common(emulate, true);
  emulate->add_option("--plan", emu.plan_path, "plan file (default: plan with the comm model)");
  emulate->add_flag("--no-plan", emu.no_plan, "communicate every layer separately");
  emulate->add_option("--iterations", cfg.iterations, "iterations to run");
  emulate->add_option("--base-port", cfg.base_port, "rendezvous port (0 = ephemeral)");
  emulate->add_option("--spin-us", emu.spin, "busy-wait threshold in us, or auto");

  auto* worker_cmd = app.add_subcommand("worker", "run a single worker process");
  common(worker_cmd, false);
  worker_cmd->add_option("--rank", worker.rank, "this worker's rank")->required();
  worker_cmd->add_option("--mode", worker.mode, "bench|emulate");
  worker_cmd->add_option("--plan", worker.plan_path, "plan file (emulate mode)");
  worker_cmd->add_option("--sizes", bench.sizes, "message sizes in bytes (bench mode)");
  worker_cmd->add_option("--repeats", bench.repeats, "timed repetitions (bench mode)");
  worker_cmd->add_option("--iterations", cfg.iterations, "iterations (emulate mode)");
  worker_cmd->add_option("--base-port", cfg.base_port, "rank 0 rendezvous port");
  worker_cmd->add_option("--spin-us", emu.spin, "busy-wait threshold in us, or auto");

  auto* profile_cmd = app.add_subcommand("profile", "write a builtin or synthetic profile");
  profile_cmd->add_option("--builtin", prof.builtin, "resnet50|googlenet");
  profile_cmd->add_option("--synth", prof.synth_layers, "synthesize L layers");
  profile_cmd->add_option("--min-params", prof.min_params, "synthetic lower bound");
  profile_cmd->add_option("--max-params", prof.max_params, "synthetic upper bound");
  profile_cmd->add_option("--time-scale", prof.time_scale, "backward time of the largest layer [s]");
  profile_cmd->add_option("--seed", cfg.seed, "random seed");
  profile_cmd->add_option("--out", cfg.out_path, "output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kInputError);
  }

  try {
    cfg.nodes = parse_int_list(nodes_text, "--nodes");
    for (const int n : cfg.nodes) {
      if (n < 1) throw InputError("--nodes entries must be >= 1");
    }
    std::stringstream ss(strategies_text);
    for (std::string s; std::getline(ss, s, ',');) {
      if (!s.empty()) cfg.strategies.push_back(s);
    }
    if (plan->parsed()) return cmd_plan(cfg, out);
    if (simulate->parsed()) return cmd_simulate(cfg, events_path, out);
    if (sweep_cmd->parsed()) return cmd_sweep(cfg, frozen_plan, out);
    if (bench_cmd->parsed()) return cmd_bench(cfg, bench, out);
    if (emulate->parsed()) return cmd_emulate(cfg, emu, out);
    if (worker_cmd->parsed()) return cmd_worker(cfg, worker, bench, emu, out);
    if (profile_cmd->parsed()) return cmd_profile(cfg, prof, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kInputError);
  } catch (const NetworkError& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kRuntimeError);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kRuntimeError);
  }
  return static_cast<int>(ExitCode::kInputError);
}

}  // namespace mgwfbp::cli
