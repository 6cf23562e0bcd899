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
// Element-wise reduction kernels used by the ring all-reduce. The scalar
// versions are the reference; vector variants must match them bit for bit
// (a single IEEE add per element, no reassociation, no FMA contraction).

#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace mgwfbp::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

// Best variant the running CPU supports. MGWFBP_ISA=scalar in the environment
// forces the reference path.
Isa detect_isa();
bool isa_available(Isa isa);

// dst[i] += src[i]. Spans must have equal length.
void add_into(std::span<float> dst, std::span<const float> src);
void add_into(Isa isa, std::span<float> dst, std::span<const float> src);

// Synthetic gradient pattern: values[i] = base + scale * (i % 8).
inline constexpr std::size_t kPatternPeriod = 8;
void fill_pattern(std::span<float> values, float base, float scale);

// Number of elements that differ from the pattern.
std::size_t count_pattern_mismatches(std::span<const float> values, float base,
                                     float scale);
std::size_t count_pattern_mismatches(Isa isa, std::span<const float> values,
                                     float base, float scale);

namespace detail {
void add_into_scalar(float* dst, const float* src, std::size_t n);
std::size_t mismatches_scalar(const float* v, std::size_t n,
                              const float* pattern);
#if defined(__x86_64__) || defined(_M_X64)
void add_into_avx2(float* dst, const float* src, std::size_t n);
std::size_t mismatches_avx2(const float* v, std::size_t n,
                            const float* pattern);
#endif
#if defined(__aarch64__)
void add_into_neon(float* dst, const float* src, std::size_t n);
std::size_t mismatches_neon(const float* v, std::size_t n,
                            const float* pattern);
#endif
}  // namespace detail

}  // namespace mgwfbp::kernels
