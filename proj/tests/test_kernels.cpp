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

#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <vector>

#include <doctest.h>

#include "mgwfbp/kernels.hpp"

using namespace mgwfbp::kernels;

namespace {

std::vector<Isa> available() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kNeon}) {
    if (isa_available(isa)) out.push_back(isa);
  }
  return out;
}

bool bit_equal(const std::vector<float>& x, const std::vector<float>& y) {
  return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("scalar is always available") {
  CHECK(isa_available(Isa::kScalar));
  CHECK(isa_available(detect_isa()));
  MESSAGE("dispatch: " << isa_name(detect_isa()));
}

TEST_CASE("vector add matches the reference bit for bit") {
  std::mt19937 rng(9);
  std::uniform_real_distribution<float> u(-1e6f, 1e6f);
  for (const std::size_t n : {0u, 1u, 7u, 8u, 31u, 32u, 33u, 1000u, 65537u}) {
    std::vector<float> a(n), b(n);
    for (auto& v : a) v = u(rng);
    for (auto& v : b) v = u(rng);
    if (n > 3) {
      a[0] = std::numeric_limits<float>::infinity();
      a[1] = std::numeric_limits<float>::denorm_min();
      b[2] = -0.0f;
      a[3] = std::numeric_limits<float>::quiet_NaN();
    }
    std::vector<float> ref = a;
    add_into(Isa::kScalar, ref, b);
    for (Isa isa : available()) {
      std::vector<float> got = a;
      add_into(isa, got, b);
      CHECK_MESSAGE(bit_equal(got, ref), isa_name(isa) << " n=" << n);
    }
  }
}

TEST_CASE("pattern fill and check") {
  for (const std::size_t n : {1u, 9u, 64u, 1003u}) {
    std::vector<float> v(n);
    fill_pattern(v, 3.0f, 2.0f);
    CHECK(v[0] == 3.0f);
    CHECK(v[n - 1] == 3.0f + 2.0f * static_cast<float>((n - 1) % kPatternPeriod));
    for (Isa isa : available()) {
      CHECK(count_pattern_mismatches(isa, v, 3.0f, 2.0f) == 0);
      auto bad = v;
      bad[n / 2] += 1.0f;
      bad[n - 1] = std::nanf("");
      const std::size_t expect = n == 1 ? 1 : 2;
      CHECK(count_pattern_mismatches(isa, bad, 3.0f, 2.0f) == expect);
      CHECK(count_pattern_mismatches(isa, bad, 3.0f, 2.0f) ==
            count_pattern_mismatches(Isa::kScalar, bad, 3.0f, 2.0f));
    }
  }
}

TEST_CASE("length mismatch") {
  std::vector<float> a(4), b(5);
  CHECK_THROWS(add_into(a, b));
}
