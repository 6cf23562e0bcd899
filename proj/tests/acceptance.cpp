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
// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.
//
//   acceptance [--archive FILE] [--only N]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgwfbp/allreduce_net.hpp"
#include "mgwfbp/comm_model.hpp"
#include "mgwfbp/merge_planner.hpp"
#include "mgwfbp/model_profile.hpp"
#include "mgwfbp/schedule_sim.hpp"
#include "test_support.hpp"

using namespace mgwfbp;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string archive_path = "planner_counterexamples.json";

std::vector<testing::Instance> random_corpus() {
  std::mt19937_64 rng(20260101);
  std::vector<testing::Instance> out;
  for (int i = 0; i < 1000; ++i) out.push_back(testing::random_instance(rng, 12));
  return out;
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// 1. Ring intercepts from the measured per-link startup.
Outcome calibration() {
  const double expected[] = {90.52e-6, 271.56e-6, 633.64e-6};
  const int nodes[] = {2, 4, 8};
  Outcome o{true, ""};
  for (int i = 0; i < 3; ++i) {
    CollectiveParams p;
    p.n_nodes = nodes[i];
    p.alpha = 45.26e-6;
    const double a = derive_ab(p).a;
    const bool ok = a == expected[i] || std::nextafter(a, expected[i]) == expected[i];
    o.pass = o.pass && ok;
    o.detail += "N=" + std::to_string(nodes[i]) + " a=" + fmt(a * 1e6, 8) + "us ";
  }
  return o;
}

// 2. T(M1) + T(M2) - T(M1 + M2) == a on dyadic inputs, which keep every
// intermediate exact.
Outcome superadditivity() {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::uint64_t> coef(1, (1u << 20) - 1);
  std::uniform_int_distribution<Bytes> size(0, (1u << 24) - 1);
  int bad = 0;
  for (int i = 0; i < 10'000; ++i) {
    const CommModel m{std::ldexp(static_cast<double>(coef(rng)), -30),
                      std::ldexp(static_cast<double>(coef(rng) - 1), -40)};
    const Bytes m1 = size(rng), m2 = size(rng);
    bad += allreduce_time(m1, m) + allreduce_time(m2, m) - allreduce_time(m1 + m2, m) != m.a;
  }
  return {bad == 0, std::to_string(10'000 - bad) + "/10000 tuples exact"};
}

// 3. Greedy planner against exhaustive search.
Outcome optimality() {
  nlohmann::json archive = nlohmann::json::array();
  int mismatches = 0;
  double worst = 0.0;
  for (const auto& in : random_corpus()) {
    const MergePlan greedy = find_merge_plan(in.profile, in.model);
    const MergePlan best = brute_force_plan(in.profile, in.model);
    const double tg = simulate_mgwfbp(in.profile, in.model, greedy).t_iter;
    const double tb = simulate_mgwfbp(in.profile, in.model, best).t_iter;
    if (tg != tb) {
      ++mismatches;
      worst = std::max(worst, (tg - tb) / tb);
      nlohmann::json c;
      c["profile"] = nlohmann::json::parse(save_profile(in.profile));
      c["a"] = in.model.a;
      c["b"] = in.model.b;
      c["greedy_plan"] = greedy.merged_layers();
      c["greedy_t_iter"] = tg;
      c["optimal_plan"] = best.merged_layers();
      c["optimal_t_iter"] = tb;
      archive.push_back(std::move(c));
    }
  }
  std::ofstream(archive_path) << archive.dump(1) << "\n";
  std::string detail = std::to_string(1000 - mismatches) + "/1000 optimal";
  if (mismatches > 0) {
    detail += ", worst excess " + fmt(100 * worst, 3) + "%, counterexamples in " + archive_path;
  }
  return {mismatches == 0, detail};
}

// 4. Ordering of the four strategies.
Outcome dominance() {
  auto corpus = random_corpus();
  auto extra = testing::adversarial_instances(100);
  corpus.insert(corpus.end(), extra.begin(), extra.end());
  int bad = 0;
  for (const auto& in : corpus) {
    const double naive = simulate_naive(in.profile, in.model).t_iter;
    const double wfbp = simulate_wfbp(in.profile, in.model).t_iter;
    const double sync = simulate_sync_easgd(in.profile, in.model).t_iter;
    const double mg = simulate(Strategy::kMGWFBP, in.profile, in.model).t_iter;
    bad += !(mg <= wfbp && mg <= sync && wfbp <= naive);
  }
  return {bad == 0, std::to_string(corpus.size() - bad) + "/" + std::to_string(corpus.size()) +
                        " instances ordered"};
}

// 5. Empty and full plans reproduce the baselines exactly.
Outcome degeneracy() {
  std::mt19937_64 rng(5);
  int bad = 0;
  for (int i = 0; i < 200; ++i) {
    const auto in = testing::random_instance(rng, 40);
    const int L = in.profile.num_layers();
    bad += !simulate_mgwfbp(in.profile, in.model, MergePlan::none(L))
                .same_schedule(simulate_wfbp(in.profile, in.model));
    bad += !simulate_mgwfbp(in.profile, in.model, MergePlan::all(L))
                .same_schedule(simulate_sync_easgd(in.profile, in.model));
  }
  return {bad == 0, std::to_string(400 - bad) + "/400 timelines bit-identical"};
}

// 6. Scaling sweep on the ResNet-50-like trace over 10GbE.
Outcome scaling() {
  const auto profile = representative_resnet50();
  SweepOptions o;
  o.collective.algorithm = CollectiveAlgorithm::kRing;
  o.collective.alpha = 45.26e-6;
  o.collective.beta = 8e-10;  // 10 Gb/s line rate
  o.collective.gamma = gamma_per_float(1e-10);
  o.node_counts = {4, 8, 16, 32, 64};
  o.strategies = {Strategy::kWFBP, Strategy::kSyncEASGD, Strategy::kMGWFBP};
  const auto rows = sweep(profile, o);
  const auto crossing = find_crossing(rows);
  double s_w = 0, s_s = 0, s_m = 0;
  for (const auto& r : rows) {
    if (r.n_nodes != 64) continue;
    if (r.strategy == Strategy::kWFBP) s_w = r.speedup;
    if (r.strategy == Strategy::kSyncEASGD) s_s = r.speedup;
    if (r.strategy == Strategy::kMGWFBP) s_m = r.speedup;
  }
  const bool crossing_ok = crossing && *crossing > 8 && *crossing < 64;
  const double ratio = s_m / s_w;
  const bool band_ok = ratio >= 1.3 && ratio <= 2.2;
  std::string detail = "params=" + std::to_string(total_params(profile)) + " crossing N=" +
                       (crossing ? std::to_string(*crossing) : std::string("none")) +
                       ", N=64 MG/WFBP=" + fmt(ratio, 3) + " MG/Sync=" + fmt(s_m / s_s, 3);
  return {crossing_ok && band_ok, detail};
}

// 7. Exact ring sums and transport accounting over loopback.
Outcome collective() {
  int cases = 0, bad = 0;
  for (int n : {2, 3, 4, 8}) {
    for (std::size_t elements : {std::size_t{1}, std::size_t{17}, std::size_t{1'000'000}}) {
      ++cases;
      const auto out = run_local_workers(n, [&](const RendezvousOptions& opts) {
        RingCommunicator ring = RingCommunicator::connect(opts);
        std::vector<float> v(elements);
        for (std::size_t i = 0; i < elements; ++i) {
          v[i] = static_cast<float>((opts.rank + 1) * (1 + static_cast<int>(i % 8)));
        }
        ring.allreduce(v);
        std::size_t wrong = 0;
        for (std::size_t i = 0; i < elements; ++i) {
          wrong += v[i] != static_cast<float>(n * (n + 1) / 2 * (1 + static_cast<int>(i % 8)));
        }
        const int r = opts.rank;
        auto seg = [&](int k) { return ring_segment(elements, n, ((k % n) + n) % n).length; };
        std::uint64_t sent = 0, received = 0;
        for (int s = 0; s < n - 1; ++s) {
          sent += seg(r - s) + seg(r + 1 - s);
          received += seg(r - s - 1) + seg(r - s);
        }
        const auto& c = ring.counters();
        const bool ok = wrong == 0 && c.rounds == static_cast<std::uint64_t>(2 * (n - 1)) &&
                        c.payload_bytes_sent == sent * sizeof(float) &&
                        c.payload_bytes_received == received * sizeof(float);
        return std::string(ok ? "ok" : "bad");
      });
      bool all = true;
      for (const auto& s : out) all = all && s == "ok";
      bad += !all;
    }
  }
  return {bad == 0, std::to_string(cases - bad) + "/" + std::to_string(cases) +
                        " (N, size) cases exact with 2(N-1) rounds"};
}

// 8. Calibrate on loopback, predict, then measure.
Outcome predict() {
  constexpr int kWorkers = 4;
  SynthOptions so;
  so.num_layers = 8;
  so.seed = 8;
  so.min_params = 2'000;
  so.max_params = 500'000;
  so.time_scale = 4e-3;
  const ModelProfile profile = synth_profile(so);

  std::vector<Bytes> sizes;
  const double lo = 4.0 * static_cast<double>(so.min_params);
  const double hi = static_cast<double>(total_bytes(profile));
  for (int i = 0; i < 8; ++i) {
    const double s = lo * std::pow(hi / lo, i / 7.0);
    sizes.push_back(static_cast<Bytes>(std::llround(s / 4.0)) * 4);
  }
  const auto bench = run_local_workers(kWorkers, [&](const RendezvousOptions& opts) {
    RingCommunicator ring = RingCommunicator::connect(opts);
    std::ostringstream os;
    write_measurements_csv(os, bench_allreduce(sizes, ring, 30));
    return os.str();
  });
  std::istringstream in(bench.front());
  const CommModel fitted = fit_ab(read_measurements_csv(in));
  const MergePlan plan = find_merge_plan(profile, fitted);
  const Timeline timeline = simulate_mgwfbp(profile, fitted, plan);
  const double predicted = timeline.t_iter;

  EmulationOptions eo;
  eo.iterations = 50;
  const auto runs = run_local_workers(kWorkers, [&](const RendezvousOptions& opts) {
    RingCommunicator ring = RingCommunicator::connect(opts);
    return run_emulation(profile, plan, ring, eo).to_json();
  });
  std::vector<EmulationReport> reports;
  for (const auto& r : runs) reports.push_back(EmulationReport::from_json(r));
  const EmulationReport merged = merge_reports(reports);
  const double err = (merged.mean_seconds - predicted) / predicted;
  std::string detail = "fit " + format_comm_model(fitted) + ", plan " + plan.describe() +
                       ", compute " + fmt(timeline.compute_time * 1e3, 4) +
                       " ms, predicted " + fmt(predicted * 1e3, 4) + " ms, measured " +
                       fmt(merged.mean_seconds * 1e3, 4) + " +- " +
                       fmt(merged.stddev_seconds * 1e3, 3) + " ms, error " +
                       fmt(100 * err, 3) + "%" + (merged.verified ? "" : ", SUMS WRONG");
  return {merged.verified && std::abs(err) <= 0.20, detail};
}

// 9. Least-squares recovery of (a, b).
Outcome recovery() {
  std::mt19937_64 rng(9);
  auto rel = [](const CommModel& fit, const CommModel& truth) {
    return std::max(std::abs(fit.a - truth.a) / truth.a, std::abs(fit.b - truth.b) / truth.b);
  };
  std::uniform_real_distribution<double> ua(1e-6, 1e-2), ub(1e-11, 1e-8);
  double worst_clean = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const CommModel truth{ua(rng), ub(rng)};
    std::vector<Measurement> clean;
    for (Bytes s = 1024; s <= (Bytes{1} << 26); s *= 2) {
      clean.push_back({s, allreduce_time(s, truth), 4});
    }
    worst_clean = std::max(worst_clean, rel(fit_ab(clean), truth));
  }
  // 50 sizes from 20 KB to 1 MB, each time scaled by a uniform +-2% error.
  const CommModel truth{5e-4, 2e-9};
  std::uniform_real_distribution<double> noise(-0.02, 0.02);
  double worst_noisy = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Measurement> noisy;
    for (int i = 1; i <= 50; ++i) {
      const Bytes s = static_cast<Bytes>(i) * 20'000;
      noisy.push_back({s, allreduce_time(s, truth) * (1.0 + noise(rng)), 4});
    }
    worst_noisy = std::max(worst_noisy, rel(fit_ab(noisy), truth));
  }
  return {worst_clean < 1e-10 && worst_noisy < 0.05,
          "noise-free worst " + fmt(worst_clean, 3) + " over 100 fits, 2% noise worst " +
              fmt(100 * worst_noisy, 3) + "% over 100 fits"};
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--archive") == 0 && i + 1 < argc) {
      archive_path = argv[++i];
    } else if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::cerr << "usage: acceptance [--archive FILE] [--only N]\n";
      return 2;
    }
  }
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"cost-model calibration", 1, calibration},
      {"superadditivity", 1, superadditivity},
      {"planner optimality", 60, optimality},
      {"strategy dominance", 60, dominance},
      {"degeneracy identities", 5, degeneracy},
      {"scaling sweep ordering", 10, scaling},
      {"collective correctness", 30, collective},
      {"calibrate-then-predict", 120, predict},
      {"fit recovery", 1, recovery},
  };
  int failed = 0;
  for (int i = 0; i < 9; ++i) {
    if (only != 0 && only != i + 1) continue;
    const auto& c = criteria[i];
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  #" << i + 1 << " " << c.name << ": " << o.detail
              << " [" << fmt(secs, 3) << " s / " << c.budget_s << " s"
              << (in_time ? "" : ", over budget") << "]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
