"""Monte Carlo hitting oracles for finite sets.

Walks are simulated one step at a time in a compiled loop.  A walk is scored
as a hit at ``a`` (from previous site ``x``) when it lands in the set, and
as escaped once its exact residual hit probability
``sum_a G(y - a) w(a)`` drops below ``eps_esc``.  Escape truncation and
step-budget exhaustion are both folded into the width of the reported
interval.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .green import GreenTable, get_table, green
from .potential import PotentialState, solve_equilibrium
from . import _kernels
from .steplaw import StepLaw

__all__ = ["HgpiReport", "MCHittingResult", "combine_hitting", "hgpi_check", "mc_hitting",
           "simulate_walks"]

HIT, ESCAPED, UNRESOLVED = _kernels.HIT, _kernels.ESCAPED, _kernels.UNRESOLVED
_FAR = _kernels.FAR


@dataclass
class WalkOutcomes:
    status: np.ndarray
    hit_at: np.ndarray
    prev: np.ndarray
    h_stop: np.ndarray
    steps: np.ndarray


def _sampler(step_law: StepLaw) -> _kernels.SamplerParams:
    sp = getattr(step_law, "_kernel_sampler", None)
    if sp is None:
        sp = _kernels.SamplerParams(step_law)
        step_law._kernel_sampler = sp
    return sp


def _skip_radius(state: PotentialState, center: int, eps_esc: float) -> int:
    """Largest ``r`` with ``h(y) >= eps_esc`` guaranteed whenever ``|y - center| <= r``.

    Uses ``h(y) >= capacity * min_{d <= r + spread} G(d)``.
    """
    table = state.table
    spread = int(np.max(np.abs(state._pos - center)))
    runmin = np.minimum.accumulate(table.cache)

    def gmin(dmax: int) -> float:
        if dmax <= table.x_cache:
            return float(runmin[dmax])
        return min(float(runmin[-1]), table.asym_coeff * dmax ** (table.alpha - 1.0))

    if state.capacity * gmin(spread) < eps_esc:
        return -1
    lo, hi = 0, _FAR
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if state.capacity * gmin(mid + spread) >= eps_esc:
            lo = mid
        else:
            hi = mid
    return lo


def simulate_walks(step_law: StepLaw, state: PotentialState, starts, rng, *,
                   eps_esc: float = 1e-4, max_steps: int = 100_000) -> WalkOutcomes:
    """Run one walk from each entry of ``starts`` until it hits or escapes.

    Hitting uses ``T_A > 0``: a walk started inside the set must return.
    The loop runs compiled; its random stream is seeded from ``rng``.
    """
    starts = np.asarray(starts, dtype=np.int64)
    members = np.asarray(state.points, dtype=np.int64)
    if not state._narrow or np.max(np.abs(members)) >= _FAR // 2 or np.max(np.abs(starts)) >= _FAR:
        raise ValueError("simulate_walks needs coordinates below 2**59")
    far_h = state.capacity * green(state.table, _FAR // 2)
    if far_h >= eps_esc:
        raise ValueError("eps_esc too small for the int64 walk engine")
    table = state.table
    center = int(np.median(members))
    r_skip = _skip_radius(state, center, eps_esc)
    out = _kernels.walk_hits(
        starts, members, np.ascontiguousarray(state.w), table.cache, float(table.asym_coeff),
        table.alpha - 1.0, *_sampler(step_law).args(), float(eps_esc), float(far_h),
        r_skip, center, int(max_steps), _kernels.rng_state(rng))
    return WalkOutcomes(*out)


@dataclass
class MCHittingResult:
    """Outcome of :func:`mc_hitting`.

    ``hit_interval`` brackets ``P(T_A < inf)`` at ``z`` standard errors,
    widened by ``eps_esc`` times the escaped fraction and by the unresolved
    fraction.
    """

    n_walks: int
    n_hit: int
    n_escaped: int
    n_unresolved: int
    eps_esc: float
    hit_interval: tuple
    hit_counts: Counter = field(repr=False)
    last_point_counts: Counter = field(repr=False)

    @property
    def hit_fraction(self) -> float:
        return self.n_hit / self.n_walks

    @property
    def truncation_bias(self) -> float:
        return (self.eps_esc * self.n_escaped + self.n_unresolved) / self.n_walks

    @property
    def hit_distribution(self) -> dict:
        """Empirical law of the hit site, conditioned on hitting."""
        return {a: c / self.n_hit for a, c in sorted(self.hit_counts.items())}

    @property
    def last_point_distribution(self) -> dict:
        """Empirical law of ``(previous site, hit site)`` conditioned on hitting."""
        return {k: c / self.n_hit for k, c in self.last_point_counts.items()}


def mc_hitting(step_law: StepLaw, points, start: int, *, n_walks: int, rng,
               table: GreenTable | None = None, eps_esc: float = 1e-4,
               max_steps: int = 100_000, batch: int = 200_000, z: float = 3.0,
               state: PotentialState | None = None) -> MCHittingResult:
    """Simulate ``n_walks`` walks from ``start`` against the set ``points``.

    ``start`` may lie inside the set, in which case the walk must return at
    a strictly positive time.
    """
    if state is None:
        table = table if table is not None else get_table(step_law)
        state = solve_equilibrium(table, points)
    hits, lasts = Counter(), Counter()
    n_hit = n_esc = n_unres = 0
    for b0 in range(0, n_walks, batch):
        m = min(batch, n_walks - b0)
        out = simulate_walks(step_law, state, np.full(m, int(start)), rng,
                             eps_esc=eps_esc, max_steps=max_steps)
        is_hit = out.status == HIT
        n_hit += int(is_hit.sum())
        n_esc += int((out.status == ESCAPED).sum())
        n_unres += int((out.status == UNRESOLVED).sum())
        hits.update(out.hit_at[is_hit].tolist())
        lasts.update(zip(out.prev[is_hit].tolist(), out.hit_at[is_hit].tolist()))
    return _result(n_walks, n_hit, n_esc, n_unres, eps_esc, hits, lasts, z)


def _result(n_walks, n_hit, n_esc, n_unres, eps_esc, hits, lasts, z) -> MCHittingResult:
    p = n_hit / n_walks
    se = math.sqrt(max(p * (1 - p), 1e-300) / n_walks)
    lo = max(0.0, p - z * se)
    hi = min(1.0, p + z * se + (eps_esc * n_esc + n_unres) / n_walks)
    return MCHittingResult(n_walks, n_hit, n_esc, n_unres, eps_esc, (lo, hi), hits, lasts)


def combine_hitting(results, z: float = 3.0) -> MCHittingResult:
    """Pool independent :func:`mc_hitting` runs with the same set, start and ``eps_esc``."""
    results = list(results)
    eps = {r.eps_esc for r in results}
    if len(eps) != 1:
        raise ValueError("runs use different eps_esc")
    hits, lasts = Counter(), Counter()
    for r in results:
        hits.update(r.hit_counts)
        lasts.update(r.last_point_counts)
    return _result(sum(r.n_walks for r in results), sum(r.n_hit for r in results),
                   sum(r.n_escaped for r in results), sum(r.n_unresolved for r in results),
                   eps.pop(), hits, lasts, z)


@dataclass
class HgpiReport:
    """Comparison of ``H_A(x, a)`` with ``sum_z G(x - z) (I - Pi)(z, a)``.

    All arrays are indexed by the members of the set in ``points`` order.
    ``z_scores`` are discrepancies in units of the combined standard error
    (truncation bias added to the error bar).
    """

    points: list
    x: int
    pi_hat: np.ndarray
    pi_se: np.ndarray
    h_direct: np.ndarray
    h_direct_se: np.ndarray
    h_identity: np.ndarray
    h_identity_se: np.ndarray
    bias: float
    row_bias: float
    column_sums: np.ndarray
    column_sums_se: np.ndarray
    w: np.ndarray

    @property
    def z_scores(self) -> np.ndarray:
        err = np.hypot(self.h_direct_se, self.h_identity_se)
        gap = np.maximum(np.abs(self.h_direct - self.h_identity) - self.bias, 0.0)
        return gap / err

    @property
    def column_z_scores(self) -> np.ndarray:
        k = len(self.points)
        gap = np.maximum(np.abs(self.column_sums - self.w) - k * self.row_bias, 0.0)
        return gap / self.column_sums_se

    def max_z(self) -> float:
        return float(max(self.z_scores.max(), self.column_z_scores.max()))


def hgpi_check(table: GreenTable, points, x: int, *, step_law: StepLaw, n_walks: int, rng,
               eps_esc: float = 1e-4, max_steps: int = 100_000) -> HgpiReport:
    """Monte Carlo check of the unnormalised hitting identity on a small set."""
    pts = [int(p) for p in points]
    if len(pts) > 8:
        raise ValueError("hgpi_check is meant for sets of at most 8 points")
    x = int(x)
    if x in pts:
        raise ValueError("x must lie outside the set")
    state = solve_equilibrium(table, pts)
    k = len(pts)

    def row(start):
        res = mc_hitting(step_law, pts, start, n_walks=n_walks, rng=rng, eps_esc=eps_esc,
                         max_steps=max_steps, state=state)
        p = np.array([res.hit_counts.get(a, 0) / n_walks for a in pts])
        se = np.sqrt(np.maximum(p * (1 - p), 1.0 / n_walks) / n_walks)
        return p, se, res.truncation_bias

    pi_hat = np.empty((k, k))
    pi_se = np.empty((k, k))
    biases = []
    for i, zpt in enumerate(pts):
        pi_hat[i], pi_se[i], b = row(zpt)
        biases.append(b)
    h_direct, h_direct_se, b = row(x)
    biases.append(b)

    gx = np.array([green(table, x - zpt) for zpt in pts])
    i_minus_pi = np.eye(k) - pi_hat
    h_identity = gx @ i_minus_pi
    h_identity_se = np.sqrt((gx[:, None] ** 2 * pi_se ** 2).sum(axis=0))
    row_bias = max(biases)
    bias = row_bias * (1.0 + gx.sum())
    col = i_minus_pi.sum(axis=0)
    col_se = np.sqrt((pi_se ** 2).sum(axis=0))
    return HgpiReport(pts, x, pi_hat, pi_se, h_direct, h_direct_se, h_identity, h_identity_se,
                      bias, row_bias, col, col_se, state.w.copy())
