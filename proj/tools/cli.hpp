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
#include <optional>
#include <string>
#include <vector>

#include "mgwfbp/comm_model.hpp"
#include "mgwfbp/schedule_sim.hpp"

namespace mgwfbp::cli {

enum class ExitCode : int { kOk = 0, kInputError = 1, kRuntimeError = 2 };

enum class Subcommand { kPlan, kSimulate, kSweep, kBench, kEmulate, kWorker, kProfile };

// Where the (a, b) pair comes from. Exactly one source may be given.
struct CommSource {
  std::optional<double> a;
  std::optional<double> b;
  std::optional<std::string> collective;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma_per_float = 0.0;  // seconds per 32-bit float
  std::optional<std::string> bench_csv;

  int count() const;
  // n_nodes is needed only for the collective source.
  CommModel resolve(int n_nodes) const;
  CollectiveParams collective_params() const;
};

struct RunConfig {
  Subcommand subcommand = Subcommand::kPlan;
  std::string profile_path;
  CommSource comm;
  std::vector<int> nodes;
  std::vector<std::string> strategies;
  std::string out_path;
  std::uint64_t seed = 0;
  int iterations = 10;
  int base_port = 0;
};

// Runs the command line; returns the process exit status. Output goes to
// `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mgwfbp::cli
