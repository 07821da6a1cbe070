"""Compiled inner loops for the Monte Carlo oracles.

The step sampler here draws the same law as :meth:`StepLaw.sample_step`
(alias table for ``|X| <= K0``, Pareto rejection beyond).  Uniforms come
from an inline xoshiro256+ generator whose state is seeded from the
caller's numpy Generator; numba's built-in generator is an order of
magnitude slower per call, which matters for walks of ~1e4 steps.
"""
from __future__ import annotations

import math

import numba
import numpy as np
from numba import uint64

HIT, ESCAPED, UNRESOLVED = 0, 1, 2
FAR = 2**60


def alias_table(p: np.ndarray):
    """Vose alias table for the probability vector ``p``."""
    n = p.size
    scaled = p * n / p.sum()
    prob = np.zeros(n)
    alias = np.zeros(n, dtype=np.int64)
    small = [i for i in range(n) if scaled[i] < 1.0]
    large = [i for i in range(n) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = scaled[g] + scaled[s] - 1.0
        (small if scaled[g] < 1.0 else large).append(g)
    for i in large + small:
        prob[i] = 1.0
        alias[i] = i
    return prob, alias


class SamplerParams:
    """Plain arrays/scalars the kernels need to draw steps."""

    def __init__(self, step_law):
        k0 = step_law.table_cutoff
        k = np.arange(1, k0 + 1, dtype=float)
        p = np.exp(-step_law.s * np.log(k))
        self.prob, self.alias = alias_table(p)
        self.p_table = step_law._p_table
        self.k0 = float(k0)
        self.alpha = step_law.alpha

    def args(self):
        return self.prob, self.alias, self.p_table, self.k0, self.alpha


def rng_state(rng) -> np.ndarray:
    """Fresh xoshiro256+ state drawn from a numpy Generator."""
    st = rng.integers(0, 2**63, size=4, dtype=np.int64).astype(np.uint64)
    st[0] |= np.uint64(1)
    return st


@numba.njit(_nrt=False)
def _next(s):
    res = s[0] + s[3]
    t = s[1] << uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = (s[3] << uint64(45)) | (s[3] >> uint64(19))
    return res


@numba.njit(_nrt=False)
def _uniform(s):
    """Uniform double on [0, 1) with 53 random bits."""
    return (_next(s) >> uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(_nrt=False)
def _draw(st, prob, alias, p_table, k0, alpha):
    """One signed step; magnitudes at or beyond FAR are reported as +-FAR."""
    k = np.int64(1)
    u = _uniform(st)
    if u < p_table:
        n = prob.size
        v = _uniform(st) * n
        i = min(np.int64(v), n - 1)
        k = i + 1 if v - i < prob[i] else alias[i] + 1
    else:
        while True:
            uu = k0 * (1.0 - _uniform(st)) ** (-1.0 / alpha)
            if uu >= 1.152921504606847e18:
                k = np.int64(FAR)
                break
            k = np.int64(math.ceil(uu))
            kf = float(k)
            if _uniform(st) * kf * math.expm1(-alpha * math.log1p(-1.0 / kf)) <= alpha:
                break
    sign = np.int64(_next(st) >> uint64(63))
    return k * (1 - 2 * sign)


@numba.njit(cache=True)
def _green(d, cache, x_cache, asym, am1):
    if d <= x_cache:
        return cache[d]
    return asym * math.exp(am1 * math.log(d))


@numba.njit(cache=True)
def walk_hits(starts, members, w, cache, asym, am1, prob, alias, p_table, k0, alpha,
              eps, far_h, r_skip, center, max_steps, st):
    n = starts.size
    m = members.size
    x_cache = cache.size - 1
    status = np.full(n, UNRESOLVED, dtype=np.int8)
    hit_at = np.zeros(n, dtype=np.int64)
    prev = np.zeros(n, dtype=np.int64)
    h_stop = np.zeros(n)
    nsteps = np.full(n, max_steps, dtype=np.int64)
    for i in range(n):
        pos = starts[i]
        for t in range(1, max_steps + 1):
            new = pos + _draw(st, prob, alias, p_table, k0, alpha)
            if abs(new) >= FAR:
                status[i] = ESCAPED
                h_stop[i] = far_h
                nsteps[i] = t
                break
            hit = False
            for j in range(m):
                if members[j] == new:
                    hit = True
                    break
            if hit:
                status[i] = HIT
                hit_at[i] = new
                prev[i] = pos
                nsteps[i] = t
                break
            if abs(new - center) > r_skip:
                h = 0.0
                for j in range(m):
                    h += w[j] * _green(abs(new - members[j]), cache, x_cache, asym, am1)
                if h < eps:
                    status[i] = ESCAPED
                    h_stop[i] = h
                    nsteps[i] = t
                    break
            pos = new
    return status, hit_at, prev, h_stop, nsteps


@numba.njit(cache=True)
def count_visits(xs, n_walks, t_max, prob, alias, p_table, k0, alpha, st):
    """Visits to each of ``xs`` within ``t_max`` steps of walks from 0.

    Returns per-walk visit counts (time 0 included) and the final position;
    walks that leave ``(-FAR, FAR)`` report ``FAR``.
    """
    m = xs.size
    visits = np.zeros((n_walks, m))
    final = np.zeros(n_walks, dtype=np.int64)
    for i in range(n_walks):
        pos = np.int64(0)
        for j in range(m):
            if xs[j] == 0:
                visits[i, j] += 1.0
        for _ in range(t_max):
            pos = pos + _draw(st, prob, alias, p_table, k0, alpha)
            if abs(pos) >= FAR:
                pos = np.int64(FAR)
                break
            for j in range(m):
                if pos == xs[j]:
                    visits[i, j] += 1.0
        final[i] = pos
    return visits, final


@numba.njit(cache=True)
def draw_many(n, prob, alias, p_table, k0, alpha, st):
    out = np.zeros(n, dtype=np.int64)
    for i in range(n):
        out[i] = _draw(st, prob, alias, p_table, k0, alpha)
    return out


@numba.njit(cache=True)
def _h(y, members, w, cache, x_cache, asym, am1):
    h = 0.0
    for j in range(members.size):
        h += w[j] * _green(abs(y - members[j]), cache, x_cache, asym, am1)
    return h


@numba.njit(cache=True)
def escape_walk(x, members, w, cache, asym, am1, prob, alias, p_table, k0, alpha,
                eps, far_h, budget, st):
    """Walk from ``x`` conditioned never to visit ``members``, cut once ``h < eps``.

    Each step proposes ``y' = y + X`` and accepts with probability ``1 - h(y')``
    (zero on members).  A proposal beyond ``FAR`` is accepted and ends the
    walk with ``h = far_h``; it is not recorded.  Returns the path, ``h`` at
    the cut and whether ``budget`` steps ran out first.
    """
    x_cache = cache.size - 1
    path = np.empty(budget + 1, dtype=np.int64)
    path[0] = x
    n = 1
    y = x
    h = _h(y, members, w, cache, x_cache, asym, am1)
    while h >= eps:
        if n > budget:
            return path[:n], h, True
        while True:
            y2 = y + _draw(st, prob, alias, p_table, k0, alpha)
            if abs(y2) >= FAR:
                return path[:n], far_h, False
            inside = False
            for j in range(members.size):
                if members[j] == y2:
                    inside = True
                    break
            if inside:
                continue
            h2 = _h(y2, members, w, cache, x_cache, asym, am1)
            if _uniform(st) < 1.0 - h2:
                break
        path[n] = y2
        n += 1
        y = y2
        h = h2
    return path[:n], h, False
