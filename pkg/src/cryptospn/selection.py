"""Oblivious word routing: n input words to m >= n output positions.

Permute-duplicate-permute construction.  A Waksman network (arbitrary
size) arranges the words so that positions needing the same word become
adjacent, a chain of m-1 duplication muxes copies values rightward, and
a second Waksman network moves everything to its final position.  All
switch controls are one party's private inputs, so the routing map
stays hidden; the wiring itself depends only on (n, m).

Dummy padding words are materialised constants rather than folded ones,
which pins the AND count at exactly width * switch_count(n, m).
"""

import math
from collections import deque
from functools import lru_cache

import numpy as np

from .circuit import Bit, ZERO, Builder, Template
from .softfloat import cond_swap, mux_vec


def waksman_switch_count(n: int) -> int:
    if n <= 1:
        return 0
    half = n // 2
    outs = half if n % 2 else half - 1
    return half + outs + waksman_switch_count(half) + waksman_switch_count(n - half)


def waksman_program(perm) -> list:
    """Control bits for a permutation, in network emission order.

    perm[i] = j routes input i to output j.  Control semantics: an input
    switch sends pair (2i, 2i+1) straight (top, bottom) when clear; an
    output switch takes the top subnetwork when clear.
    """
    n = len(perm)
    if n <= 1:
        return []
    half = n // 2
    inv = [0] * n
    for i, o in enumerate(perm):
        inv[o] = i
    # 2-color the pair graph: side 0 routes through the top subnetwork
    side = [None] * n
    q = deque()

    def assign(i, s):
        if side[i] is None:
            side[i] = s
            q.append(i)
        elif side[i] != s:
            raise AssertionError("inconsistent routing constraints")

    def partner(k):
        # inputs and outputs pair identically; the odd straggler is alone
        return k ^ 1 if (k ^ 1) < 2 * half else None

    if n % 2:
        assign(n - 1, 1)
        assign(inv[n - 1], 1)
    else:
        # last output pair has no switch: fixed straight
        assign(inv[n - 1], 1)
        assign(inv[n - 2], 0)
    cursor = 0
    while True:
        while q:
            i = q.popleft()
            s = side[i]
            p = partner(i)
            if p is not None:
                assign(p, 1 - s)
            po = partner(perm[i])
            if po is not None:
                assign(inv[po], 1 - s)
        while cursor < n and side[cursor] is not None:
            cursor += 1
        if cursor == n:
            break
        assign(cursor, 0)

    in_ctrl = [side[2 * i] for i in range(half)]
    perm_t = [0] * half
    perm_b = [0] * (n - half)
    for i in range(half):
        t_in = 2 * i + side[2 * i]
        perm_t[i] = perm[t_in] // 2
        perm_b[i] = perm[t_in ^ 1] // 2
    if n % 2:
        perm_b[half] = perm[n - 1] // 2
    n_out = half if n % 2 else half - 1
    out_ctrl = [side[inv[2 * j]] for j in range(n_out)]
    return in_ctrl + waksman_program(perm_t) + waksman_program(perm_b) + out_ctrl


def _emit_waksman(b: Builder, words, ctrl, pos):
    n = len(words)
    if n <= 1:
        return list(words), pos
    half = n // 2
    tops, bots = [], []
    for i in range(half):
        t, u = cond_swap(b, ctrl[pos], words[2 * i], words[2 * i + 1])
        pos += 1
        tops.append(t)
        bots.append(u)
    if n % 2:
        bots.append(words[n - 1])
    tops, pos = _emit_waksman(b, tops, ctrl, pos)
    bots, pos = _emit_waksman(b, bots, ctrl, pos)
    n_out = half if n % 2 else half - 1
    out = []
    for j in range(half):
        if j < n_out:
            x, y = cond_swap(b, ctrl[pos], tops[j], bots[j])
            pos += 1
        else:
            x, y = tops[j], bots[j]
        out += [x, y]
    if n % 2:
        out.append(bots[half])
    return out, pos


def selection_switch_count(n: int, m: int) -> int:
    """Switches in the built network S(n, m): two Waksman passes over m
    padded words plus the duplication chain."""
    if n < 1 or m < n:
        raise ValueError("need 1 <= n <= m")
    return 2 * waksman_switch_count(m) + (m - 1)


def selection_formula_cost(n: int, m: int) -> float:
    """Closed-form switch complexity used by the cost model."""
    if n < 1 or m < n:
        raise ValueError("need 1 <= n <= m")
    return 0.5 * (n + m) * math.log2(n) + m * math.log2(m) - n + 1


def program_selection(phi, n: int) -> np.ndarray:
    """Control bit values routing input phi[j] to output j, ordered as
    the network consumes them."""
    m = len(phi)
    if n < 1 or m < n:
        raise ValueError("need 1 <= n <= m")
    if any(not 0 <= v < n for v in phi):
        raise ValueError("phi value out of range")
    order = sorted(range(m), key=lambda j: (phi[j], j))
    firsts = {}
    dup = []
    for k in range(m):
        v = phi[order[k]]
        if k and v == phi[order[k - 1]]:
            dup.append(1)
        else:
            firsts[v] = k
            dup.append(0)
    taken = set(firsts.values())
    free = (k for k in range(m) if k not in taken)
    perm1 = [firsts[v] if v in firsts else next(free) for v in range(m)]
    perm2 = [order[k] for k in range(m)]
    bits = waksman_program(perm1) + dup[1:] + waksman_program(perm2)
    return np.array(bits, dtype=np.uint8)


@lru_cache(maxsize=None)
def selection_template(n: int, m: int, width: int) -> Template:
    """Inputs: n words of `width` bits, then switch controls.  Outputs
    the m routed words, flattened."""
    n_sw = selection_switch_count(n, m)
    b = Builder(n * width + n_sw)
    bits = b.inputs()
    words = [bits[i * width : (i + 1) * width] for i in range(n)]
    for _ in range(m - n):
        words.append([Bit(wire=b.materialize(ZERO)) for _ in range(width)])
    ctrl = bits[n * width :]
    pos = 0
    routed, pos = _emit_waksman(b, words, ctrl, pos)
    cur = routed[0]
    out = list(cur)
    for k in range(1, m):
        cur = mux_vec(b, ctrl[pos], cur, routed[k])
        pos += 1
        out += cur
    slotted, pos = _emit_waksman(
        b, [out[k * width : (k + 1) * width] for k in range(m)], ctrl, pos)
    if pos != n_sw:
        raise AssertionError("switch count bookkeeping is off")
    return b.finish([x for w in slotted for x in w])
