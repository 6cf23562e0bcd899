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

#include "mgwfbp/kernels.hpp"

#include <array>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace mgwfbp::kernels {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "?";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return true;
    case Isa::kAvx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::kNeon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

namespace {

Isa select_isa() {
  if (const char* forced = std::getenv("MGWFBP_ISA")) {
    const std::string_view name(forced);
    if (name == "scalar") return Isa::kScalar;
    if (name == "avx2" && isa_available(Isa::kAvx2)) return Isa::kAvx2;
    if (name == "neon" && isa_available(Isa::kNeon)) return Isa::kNeon;
  }
  if (isa_available(Isa::kAvx2)) return Isa::kAvx2;
  if (isa_available(Isa::kNeon)) return Isa::kNeon;
  return Isa::kScalar;
}

std::array<float, kPatternPeriod> pattern_lanes(float base, float scale) {
  std::array<float, kPatternPeriod> lanes{};
  for (std::size_t k = 0; k < kPatternPeriod; ++k) {
    lanes[k] = base + scale * static_cast<float>(k);
  }
  return lanes;
}

void check_available(Isa isa) {
  if (!isa_available(isa)) {
    throw std::invalid_argument("kernel variant '" + std::string(isa_name(isa)) +
                                "' is not available on this CPU");
  }
}

}  // namespace

Isa detect_isa() {
  static const Isa isa = select_isa();
  return isa;
}

void add_into(std::span<float> dst, std::span<const float> src) {
  add_into(detect_isa(), dst, src);
}

void add_into(Isa isa, std::span<float> dst, std::span<const float> src) {
  if (dst.size() != src.size()) {
    throw std::invalid_argument("add_into: length mismatch");
  }
  check_available(isa);
  switch (isa) {
    case Isa::kScalar:
      detail::add_into_scalar(dst.data(), src.data(), dst.size());
      return;
    case Isa::kAvx2:
#if defined(__x86_64__) || defined(_M_X64)
      detail::add_into_avx2(dst.data(), src.data(), dst.size());
#endif
      return;
    case Isa::kNeon:
#if defined(__aarch64__)
      detail::add_into_neon(dst.data(), src.data(), dst.size());
#endif
      return;
  }
}

void fill_pattern(std::span<float> values, float base, float scale) {
  const auto lanes = pattern_lanes(base, scale);
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = lanes[i % kPatternPeriod];
  }
}

std::size_t count_pattern_mismatches(std::span<const float> values, float base,
                                     float scale) {
  return count_pattern_mismatches(detect_isa(), values, base, scale);
}

std::size_t count_pattern_mismatches(Isa isa, std::span<const float> values,
                                     float base, float scale) {
  check_available(isa);
  const auto lanes = pattern_lanes(base, scale);
  switch (isa) {
    case Isa::kScalar:
      return detail::mismatches_scalar(values.data(), values.size(), lanes.data());
    case Isa::kAvx2:
#if defined(__x86_64__) || defined(_M_X64)
      return detail::mismatches_avx2(values.data(), values.size(), lanes.data());
#else
      break;
#endif
    case Isa::kNeon:
#if defined(__aarch64__)
      return detail::mismatches_neon(values.data(), values.size(), lanes.data());
#else
      break;
#endif
  }
  return detail::mismatches_scalar(values.data(), values.size(), lanes.data());
}

namespace detail {

void add_into_scalar(float* dst, const float* src, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

std::size_t mismatches_scalar(const float* v, std::size_t n,
                              const float* pattern) {
  std::size_t bad = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bad += v[i] != pattern[i % kPatternPeriod];
  }
  return bad;
}

}  // namespace detail

}  // namespace mgwfbp::kernels
