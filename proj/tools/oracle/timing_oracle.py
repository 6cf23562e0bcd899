#!/usr/bin/env python3
# Copyright 2026 The MG-WFBP Toolkit Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================
"""Exact-arithmetic reference for the timing recursions.

Everything is computed with Fractions so the frozen test constants do not
depend on the C++ code under test. Run it and paste the output into the
fixtures when a fixture changes.
"""

import sys
from fractions import Fraction as F
from itertools import combinations


def groups(merged, L):
    """Groups as (high, low), highest first."""
    out, high = [], L
    for l in range(L, 0, -1):
        if l == 1 or l not in merged:
            out.append((high, l))
            high = l - 1
    return out


def timeline(tf, tb, params, elem, a, b, merged):
    L = len(tb)
    taub = [F(0)] * (L + 1)
    taub[L] = F(tf)
    for l in range(L - 1, 0, -1):
        taub[l] = taub[l + 1] + tb[l]  # tb is 0-based: tb[l] is layer l+1
    tc = [F(0)] * (L + 1)
    for high, low in groups(merged, L):
        nbytes = elem * sum(params[j - 1] for j in range(low, high + 1))
        tc[low] = a + b * nbytes if nbytes else F(0)
    tauc = [F(0)] * (L + 1)
    tauc[L] = taub[L] + tb[L - 1]
    for l in range(L - 1, 0, -1):
        tauc[l] = max(tauc[l + 1] + tc[l + 1], taub[l] + tb[l - 1])
    return taub[1:], tc[1:], tauc[1:], tauc[1] + tc[1]


def naive(tf, tb, params, elem, a, b):
    total = F(tf) + sum(tb)
    for p in params:
        if p:
            total += a + b * elem * p
    return total


def sync(tf, tb, params, elem, a, b):
    return F(tf) + sum(tb) + a + b * elem * sum(params)


def brute(tf, tb, params, elem, a, b):
    L = len(tb)
    best = None
    for k in range(L):
        for s in combinations(range(2, L + 1), k):
            t = timeline(tf, tb, params, elem, a, b, set(s))[3]
            if best is None or t < best[0]:
                best = (t, set(s))
    return best


def greedy(tf, tb, params, elem, a, b):
    L = len(tb)
    merged = set()
    p = list(params)
    for l in range(L, 1, -1):
        if p[l - 1] == 0:
            continue
        k = l - 1
        while k >= 1 and p[k - 1] == 0:
            k -= 1
        if k == 0:
            continue
        taub, _, tauc, _ = timeline(tf, tb, params, elem, a, b, merged)
        ready = taub[k - 2] if k >= 2 else F(tf) + sum(tb)
        if ready - tauc[l - 1] < a:
            for j in range(l, k, -1):
                merged.add(j)
            p[k - 1] += p[l - 1]
            p[l - 1] = 0
    return merged


def show(name, tf, tb, params, elem, a, b):
    print(f"== {name}")
    for label, m in (("wfbp", set()), ("all", set(range(2, len(tb) + 1)))):
        taub, tc, tauc, t = timeline(tf, tb, params, elem, a, b, m)
        print(f"  {label}: tau_b={[str(x) for x in taub]} tau_c={[str(x) for x in tauc]} "
              f"t_iter={t} ({float(t)!r})")
    print(f"  naive={naive(tf, tb, params, elem, a, b)} sync={sync(tf, tb, params, elem, a, b)}")
    g = greedy(tf, tb, params, elem, a, b)
    gt = timeline(tf, tb, params, elem, a, b, g)[3]
    bt, bs = brute(tf, tb, params, elem, a, b)
    print(f"  greedy={sorted(g)} t_iter={gt} ({float(gt)!r})")
    print(f"  brute={sorted(bs)} t_iter={bt} ({float(bt)!r})")


def check():
    """Asserts the constants frozen into the C++ fixtures."""
    w = (4, [F(2)] * 4, [1] * 4, 4, F(3, 2), F(1, 4))
    assert naive(*w) == 22
    assert timeline(*w, set())[3] == 16
    assert timeline(*w, set())[2] == [F(27, 2), 11, F(17, 2), 6]
    assert sync(*w) == F(35, 2)
    assert greedy(*w) == {2} and brute(*w) == (F(31, 2), {2})
    c = (0, [F(3, 4), F(3, 4), F(0)], [1, 1, 1], 4, F(1), F(1, 128))
    assert greedy(*c) == {2, 3} and timeline(*c, {2, 3})[3] == F(83, 32)
    assert brute(*c) == (F(41, 16), {2})
    c2 = (0, [F(4), F(1), F(1), F(1)], [1] * 4, 4, F(2), F(0))
    taub, tc, tauc, t = timeline(*c2, set())
    assert tauc[0] == taub[0] + c2[1][0] and t == 9
    for n, want in ((2, "90.52e-6"), (4, "271.56e-6"), (8, "633.64e-6")):
        assert 2 * (n - 1) * F("45.26e-6") == F(want)
    print("oracle constants ok")


def main():
    if sys.argv[1:] == ["--check"]:
        check()
        return
    show("worked L=4", 4, [F(2)] * 4, [1] * 4, 4, F(3, 2), F(1, 4))
    show("greedy counterexample L=3", 0, [F(3, 4), F(3, 4), F(0)], [1, 1, 1], 4,
         F(1), F(1, 128))
    alpha = F("45.26e-6")
    for n in (2, 4, 8):
        a = 2 * (n - 1) * alpha
        print(f"ring N={n}: a={a} = {float(a)!r} s")
    # 200 KB -> 1.5 ms, 400 KB -> 1.8 ms
    b = (F("1.8e-3") - F("1.5e-3")) / (400_000 - 200_000)
    a = F("1.5e-3") - b * 200_000
    print(f"two-point fit: a={a} ({float(a)!r}) b={b} ({float(b)!r})")


if __name__ == "__main__":
    main()
