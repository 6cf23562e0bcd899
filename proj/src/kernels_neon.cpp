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

#include <arm_neon.h>

#include "mgwfbp/kernels.hpp"

namespace mgwfbp::kernels::detail {

void add_into_neon(float* dst, const float* src, std::size_t n) {
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    vst1q_f32(dst + i, vaddq_f32(vld1q_f32(dst + i), vld1q_f32(src + i)));
    vst1q_f32(dst + i + 4, vaddq_f32(vld1q_f32(dst + i + 4), vld1q_f32(src + i + 4)));
    vst1q_f32(dst + i + 8, vaddq_f32(vld1q_f32(dst + i + 8), vld1q_f32(src + i + 8)));
    vst1q_f32(dst + i + 12, vaddq_f32(vld1q_f32(dst + i + 12), vld1q_f32(src + i + 12)));
  }
  for (; i + 4 <= n; i += 4) {
    vst1q_f32(dst + i, vaddq_f32(vld1q_f32(dst + i), vld1q_f32(src + i)));
  }
  for (; i < n; ++i) dst[i] += src[i];
}

std::size_t mismatches_neon(const float* v, std::size_t n,
                            const float* pattern) {
  const float32x4_t lo = vld1q_f32(pattern);
  const float32x4_t hi = vld1q_f32(pattern + 4);
  uint32x4_t bad_lanes = vdupq_n_u32(0);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    // vceqq yields all-ones on equality; count the complement.
    const uint32x4_t eq_lo = vceqq_f32(vld1q_f32(v + i), lo);
    const uint32x4_t eq_hi = vceqq_f32(vld1q_f32(v + i + 4), hi);
    bad_lanes = vaddq_u32(bad_lanes, vshrq_n_u32(vmvnq_u32(eq_lo), 31));
    bad_lanes = vaddq_u32(bad_lanes, vshrq_n_u32(vmvnq_u32(eq_hi), 31));
  }
  std::size_t bad = vaddvq_u32(bad_lanes);
  for (; i < n; ++i) bad += v[i] != pattern[i % kPatternPeriod];
  return bad;
}

}  // namespace mgwfbp::kernels::detail
