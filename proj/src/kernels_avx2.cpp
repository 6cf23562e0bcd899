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

// Compiled with -mavx2 only; callers must check isa_available(kAvx2).

#include <immintrin.h>

#include "mgwfbp/kernels.hpp"

namespace mgwfbp::kernels::detail {

void add_into_avx2(float* dst, const float* src, std::size_t n) {
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    __m256 d0 = _mm256_loadu_ps(dst + i);
    __m256 d1 = _mm256_loadu_ps(dst + i + 8);
    __m256 d2 = _mm256_loadu_ps(dst + i + 16);
    __m256 d3 = _mm256_loadu_ps(dst + i + 24);
    d0 = _mm256_add_ps(d0, _mm256_loadu_ps(src + i));
    d1 = _mm256_add_ps(d1, _mm256_loadu_ps(src + i + 8));
    d2 = _mm256_add_ps(d2, _mm256_loadu_ps(src + i + 16));
    d3 = _mm256_add_ps(d3, _mm256_loadu_ps(src + i + 24));
    _mm256_storeu_ps(dst + i, d0);
    _mm256_storeu_ps(dst + i + 8, d1);
    _mm256_storeu_ps(dst + i + 16, d2);
    _mm256_storeu_ps(dst + i + 24, d3);
  }
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(dst + i, _mm256_add_ps(_mm256_loadu_ps(dst + i),
                                            _mm256_loadu_ps(src + i)));
  }
  for (; i < n; ++i) dst[i] += src[i];
}

std::size_t mismatches_avx2(const float* v, std::size_t n,
                            const float* pattern) {
  // One register holds a full period, so lane k always compares against
  // pattern[k] when i is a multiple of 8.
  const __m256 expected = _mm256_loadu_ps(pattern);
  std::size_t bad = 0;
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 neq = _mm256_cmp_ps(_mm256_loadu_ps(v + i), expected, _CMP_NEQ_UQ);
    bad += static_cast<std::size_t>(__builtin_popcount(_mm256_movemask_ps(neq)));
  }
  for (; i < n; ++i) bad += v[i] != pattern[i % kPatternPeriod];
  return bad;
}

}  // namespace mgwfbp::kernels::detail
