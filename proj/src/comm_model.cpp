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

#include "mgwfbp/comm_model.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>

#include "mgwfbp/error.hpp"
#include "text_util.hpp"

namespace mgwfbp {

void CommModel::validate() const {
  if (!(a >= 0.0) || !std::isfinite(a)) {
    throw InputError("comm model: a must be finite and >= 0, got " +
                     format_double(a));
  }
  if (!(b >= 0.0) || !std::isfinite(b)) {
    throw InputError("comm model: b must be finite and >= 0, got " +
                     format_double(b));
  }
}

CollectiveAlgorithm parse_collective(std::string_view name) {
  if (name == "ring") return CollectiveAlgorithm::kRing;
  if (name == "bt" || name == "binary_tree" || name == "binary-tree") {
    return CollectiveAlgorithm::kBinaryTree;
  }
  if (name == "rd" || name == "recursive_doubling" ||
      name == "recursive-doubling") {
    return CollectiveAlgorithm::kRecursiveDoubling;
  }
  if (name == "rhd" || name == "recursive_halving_doubling" ||
      name == "recursive-halving-doubling") {
    return CollectiveAlgorithm::kRecursiveHalvingDoubling;
  }
  throw InputError("unknown collective algorithm '" + std::string(name) +
                   "' (expected ring|bt|rd|rhd)");
}

std::string_view collective_name(CollectiveAlgorithm algorithm) {
  switch (algorithm) {
    case CollectiveAlgorithm::kBinaryTree: return "bt";
    case CollectiveAlgorithm::kRecursiveDoubling: return "rd";
    case CollectiveAlgorithm::kRecursiveHalvingDoubling: return "rhd";
    case CollectiveAlgorithm::kRing: return "ring";
  }
  return "?";
}

void CollectiveParams::validate() const {
  if (n_nodes < 2) {
    throw InputError("collective: node count must be >= 2, got " +
                     std::to_string(n_nodes));
  }
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0)) {
    throw InputError("collective: alpha, beta, gamma must be >= 0");
  }
  if (algorithm != CollectiveAlgorithm::kRing &&
      !std::has_single_bit(static_cast<unsigned>(n_nodes))) {
    throw InputError("collective '" + std::string(collective_name(algorithm)) +
                     "' requires a power-of-two node count, got " +
                     std::to_string(n_nodes));
  }
}

Seconds allreduce_time(Bytes bytes, const CommModel& model) {
  return model.a + model.b * static_cast<double>(bytes);
}

Seconds p2p_time(Seconds alpha, double beta, Bytes bytes) {
  return alpha + beta * static_cast<double>(bytes);
}

CommModel derive_ab(const CollectiveParams& params) {
  params.validate();
  const double n = params.n_nodes;
  const double alpha = params.alpha;
  const double beta = params.beta;
  const double gamma = params.gamma;
  CommModel out;
  switch (params.algorithm) {
    case CollectiveAlgorithm::kBinaryTree: {
      const double lg = std::bit_width(static_cast<unsigned>(params.n_nodes)) - 1;
      out.a = 2.0 * alpha * lg;
      out.b = (2.0 * beta + gamma) * lg;
      break;
    }
    case CollectiveAlgorithm::kRecursiveDoubling: {
      const double lg = std::bit_width(static_cast<unsigned>(params.n_nodes)) - 1;
      out.a = alpha * lg;
      out.b = (beta + gamma) * lg;
      break;
    }
    case CollectiveAlgorithm::kRecursiveHalvingDoubling: {
      const double lg = std::bit_width(static_cast<unsigned>(params.n_nodes)) - 1;
      out.a = 2.0 * alpha * lg;
      out.b = 2.0 * beta - (2.0 * beta + gamma) / n + gamma;
      break;
    }
    case CollectiveAlgorithm::kRing: {
      const double steps = 2.0 * (n - 1.0);
      out.a = steps * alpha;
      out.b = steps / n * beta + (n - 1.0) / n * gamma;
      break;
    }
  }
  return out;
}

CommModel fit_ab(std::span<const Measurement> samples) {
  if (samples.size() < 2) {
    throw InputError("fit_ab: need at least 2 samples, got " +
                     std::to_string(samples.size()));
  }
  std::set<Bytes> sizes;
  for (const auto& s : samples) {
    if (s.bytes == 0 || !(s.seconds > 0.0)) {
      throw InputError("fit_ab: samples need bytes > 0 and seconds > 0");
    }
    if (s.n_nodes != samples.front().n_nodes) {
      throw InputError("fit_ab: samples mix node counts " +
                       std::to_string(samples.front().n_nodes) + " and " +
                       std::to_string(s.n_nodes));
    }
    sizes.insert(s.bytes);
  }
  if (sizes.size() < 2) {
    throw InputError("fit_ab: need at least 2 distinct message sizes");
  }

  // Centered two-pass least squares.
  const double count = static_cast<double>(samples.size());
  double mean_x = 0.0;
  double mean_y = 0.0;
  for (const auto& s : samples) {
    mean_x += static_cast<double>(s.bytes);
    mean_y += s.seconds;
  }
  mean_x /= count;
  mean_y /= count;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& s : samples) {
    const double dx = static_cast<double>(s.bytes) - mean_x;
    sxx += dx * dx;
    sxy += dx * (s.seconds - mean_y);
  }
  const double slope = sxy / sxx;
  if (slope < 0.0) {
    throw InputError("fit_ab: fitted slope is negative (" +
                     format_double(slope) +
                     " s/B); measurements do not follow a + b*M");
  }
  CommModel out;
  out.b = slope;
  out.a = std::max(0.0, mean_y - slope * mean_x);
  return out;
}

std::vector<Measurement> read_measurements_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::vector<Measurement> out;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = trim(line);
    if (row.empty()) continue;
    const auto fields = split(row, ',');
    if (!header_seen) {
      if (fields.size() != 3 || trim(fields[0]) != "bytes" ||
          trim(fields[1]) != "seconds" || trim(fields[2]) != "n_nodes") {
        throw InputError("measurement csv: expected header 'bytes,seconds,n_nodes'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 3) {
      throw InputError("measurement csv line " + std::to_string(line_no) +
                       ": expected 3 fields");
    }
    Measurement m;
    m.bytes = parse_number<Bytes>(fields[0], "bytes");
    m.seconds = parse_number<double>(fields[1], "seconds");
    m.n_nodes = parse_number<int>(fields[2], "n_nodes");
    if (m.bytes == 0 || !(m.seconds > 0.0)) {
      throw InputError("measurement csv line " + std::to_string(line_no) +
                       ": bytes and seconds must be positive");
    }
    out.push_back(m);
  }
  if (!header_seen) throw InputError("measurement csv: empty input");
  return out;
}

void write_measurements_csv(std::ostream& out,
                            std::span<const Measurement> samples) {
  out << "bytes,seconds,n_nodes\n";
  for (const auto& s : samples) {
    out << s.bytes << ',' << format_double(s.seconds) << ',' << s.n_nodes
        << '\n';
  }
}

std::string format_comm_model(const CommModel& model) {
  return "{a: " + format_double(model.a) + ", b: " + format_double(model.b) +
         "}";
}

CommModel parse_comm_model(std::string_view text) {
  std::string_view body = trim(text);
  if (body.size() < 2 || body.front() != '{' || body.back() != '}') {
    throw InputError("comm model record: expected '{a: <float>, b: <float>}'");
  }
  body = body.substr(1, body.size() - 2);
  CommModel out;
  bool have_a = false;
  bool have_b = false;
  for (const auto field : split(body, ',')) {
    const auto colon = field.find(':');
    if (colon == std::string_view::npos) {
      throw InputError("comm model record: missing ':' in '" +
                       std::string(field) + "'");
    }
    const auto key = trim(field.substr(0, colon));
    const auto value = field.substr(colon + 1);
    if (key == "a") {
      out.a = parse_number<double>(value, "a");
      have_a = true;
    } else if (key == "b") {
      out.b = parse_number<double>(value, "b");
      have_b = true;
    } else {
      throw InputError("comm model record: unknown key '" + std::string(key) +
                       "'");
    }
  }
  if (!have_a || !have_b) {
    throw InputError("comm model record: both a and b are required");
  }
  out.validate();
  return out;
}

}  // namespace mgwfbp
