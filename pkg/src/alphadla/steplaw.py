"""Symmetric power-law step distribution of the alpha-walk.

The law is ``P(X = x) = |x|**(-1 - alpha) / (2 * zeta(1 + alpha))`` for
``x != 0`` and ``P(X = 0) = 0``.  Tail sums are evaluated with the Hurwitz
zeta function, sampling is exact: inverse CDF on a finite table for
``|X| <= K0`` and rejection from a continuous Pareto envelope beyond it.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gamma, zeta

__all__ = [
    "MAX_MAGNITUDE",
    "StepLaw",
    "StepOverflowError",
]

#: Largest step magnitude the sampler hands out; anything above is an error.
MAX_MAGNITUDE = 2**96

# Number of terms of the small-theta expansion of the characteristic function.
_N_CHAR_TERMS = 40


class StepOverflowError(OverflowError):
    """A sampled step exceeded :data:`MAX_MAGNITUDE`."""


class StepLaw:
    """Pure power-law step distribution with index ``alpha`` in (0, 1).

    Parameters
    ----------
    alpha : float
        Tail index, ``0 < alpha < 1`` (transient regime).
    table_cutoff : int
        K0, the largest magnitude handled by the inverse-CDF table.
    max_magnitude : int
        Sampled magnitudes above this raise :class:`StepOverflowError`.

    Notes
    -----
    ``pmf(x) * |x|**(1 + alpha)`` is exactly ``norm`` for every ``x != 0``, so
    the two-sided power-law band of the pmf is ``(norm, norm)``.
    ``tail_band`` holds the observed range of ``k**alpha * tail(k)`` over
    ``k >= 1`` (including the ``k -> inf`` limit).
    """

    def __init__(self, alpha: float, table_cutoff: int = 2**16,
                 max_magnitude: int = MAX_MAGNITUDE):
        alpha = float(alpha)
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
        if table_cutoff < 2:
            raise ValueError("table_cutoff must be at least 2")
        self.alpha = alpha
        self.s = 1.0 + alpha
        self.zeta_s = float(zeta(self.s))
        self.norm = 0.5 / self.zeta_s
        self.table_cutoff = int(table_cutoff)
        self.max_magnitude = int(max_magnitude)

        k = np.arange(1, self.table_cutoff + 1, dtype=float)
        # P(|X| <= k) for k = 1..K0, through the Hurwitz tail to avoid cumsum drift
        self._cdf = 1.0 - zeta(self.s, k + 1.0) / self.zeta_s
        self._p_table = float(self._cdf[-1])
        self._tail_k0 = self.tail(self.table_cutoff + 1)
        # Pareto envelope on (K0, inf): acceptance is target/(M * envelope) <= 1
        self._env_scale = float(self.table_cutoff)

        self.tail_limit = 1.0 / (alpha * self.zeta_s)
        self.tail_constant = self._sup_tail_ratio()
        grid = np.unique(np.concatenate([
            np.arange(1, 64), np.geomspace(64, 1e12, 200).astype(np.int64)]))
        ratios = grid.astype(float) ** alpha * self.tail(grid)
        self.tail_band = (float(min(ratios.min(), self.tail_limit)),
                          float(max(ratios.max(), self.tail_limit)))

        a0 = -gamma(-alpha) * math.cos(math.pi * alpha / 2) / self.zeta_s
        j = np.arange(1, _N_CHAR_TERMS + 1)
        self._char_a0 = float(a0)
        self._char_b = -((-1.0) ** j) * zeta(self.s - 2 * j) / gamma(2 * j + 1.0) / self.zeta_s

    def __repr__(self):
        return f"StepLaw(alpha={self.alpha!r}, table_cutoff={self.table_cutoff})"

    def params(self) -> dict:
        """Parameters identifying the law, for output headers."""
        return {"alpha": self.alpha, "table_cutoff": self.table_cutoff,
                "max_magnitude": self.max_magnitude}

    # ------------------------------------------------------------------
    # Analytic evaluations

    def pmf(self, x):
        """Probability of a single step equal to ``x`` (0 at the origin)."""
        if np.ndim(x) == 0:
            x = abs(int(x))
            if x == 0:
                return 0.0
            return self.norm * math.exp(-self.s * math.log(x))
        ax = np.abs(np.asarray(x)).astype(float)
        with np.errstate(divide="ignore"):
            out = self.norm * ax ** (-self.s)
        return np.where(ax == 0, 0.0, out)

    def tail(self, k):
        """``P(|X| >= k)`` for ``k >= 1``."""
        if np.ndim(k) == 0:
            k = int(k)
            if k < 1:
                raise ValueError("tail(k) needs k >= 1")
            if k == 1:
                return 1.0
            return float(zeta(self.s, float(k))) / self.zeta_s
        k = np.asarray(k)
        if np.any(k < 1):
            raise ValueError("tail(k) needs k >= 1")
        out = zeta(self.s, k.astype(float)) / self.zeta_s
        return np.where(k == 1, 1.0, out)

    def cdf_abs(self, k):
        """``P(|X| <= k)``."""
        if np.ndim(k) == 0:
            return 0.0 if k < 1 else 1.0 - self.tail(int(k) + 1)
        k = np.asarray(k)
        out = 1.0 - self.tail(np.maximum(k, 0) + 1)
        return np.where(k < 1, 0.0, out)

    def _sup_tail_ratio(self) -> float:
        # sup_{t>=1} t^a P(|X|>t) is approached as t -> k^- for integer k >= 2
        k = np.unique(np.concatenate([
            np.arange(2, 4096), np.geomspace(4096, 1e15, 400).astype(np.int64)]))
        vals = k.astype(float) ** self.alpha * self.tail(k)
        return float(max(vals.max(), self.tail_limit))

    def one_minus_char_fn(self, theta):
        """``1 - phi(theta)``, free of cancellation near ``theta = 0``.

        Uses the convergent expansion of the polylogarithm
        ``Li_s(exp(i theta))`` around ``theta = 0`` (valid for
        ``|theta| < 2 pi``), so the relative accuracy is close to machine
        precision on the whole of ``[-pi, pi]``.
        """
        th = np.abs(np.asarray(theta, dtype=float))
        if np.any(th > math.pi * (1 + 1e-12)):
            raise ValueError("theta must lie in [-pi, pi]")
        t2 = th * th
        acc = np.zeros_like(th)
        p = np.ones_like(th)
        for b in self._char_b:
            p = p * t2
            acc += b * p
        out = self._char_a0 * th ** self.alpha + acc
        return float(out) if np.ndim(theta) == 0 else out

    def char_fn(self, theta):
        """Characteristic function ``sum_x pmf(x) cos(theta x)``."""
        return 1.0 - self.one_minus_char_fn(theta)

    # ------------------------------------------------------------------
    # Sampling

    def _tail_magnitude(self, rng, scale: float | None = None) -> int:
        # magnitude conditioned on exceeding ``scale`` (K0 by default); the
        # acceptance ratio does not depend on where the envelope starts
        alpha = self.alpha
        scale = self._env_scale if scale is None else scale
        while True:
            v = 1.0 - rng.random()
            u = scale * v ** (-1.0 / alpha)
            if u > self.max_magnitude:
                raise StepOverflowError(
                    f"sampled |step| ~ {u:.3e} exceeds {self.max_magnitude:.3e}")
            if u < 2.0**52:
                k = math.ceil(u)
            else:
                # fill the float's ulp gap uniformly so every integer is reachable
                m, e = math.frexp(u)
                ulp = 1 << (e - 53)
                k = int(u) + int(rng.integers(0, ulp)) + 1
            if rng.random() * k * math.expm1(-alpha * math.log1p(-1.0 / k)) <= alpha:
                return k

    def sample_step(self, rng) -> int:
        """Draw one step exactly from :meth:`pmf` (a Python int)."""
        u = rng.random()
        if u < self._p_table:
            k = int(np.searchsorted(self._cdf, u, side="right")) + 1
        else:
            k = self._tail_magnitude(rng)
        return k if rng.random() < 0.5 else -k

    def sample_steps(self, rng, size: int) -> list:
        """Draw ``size`` steps as Python ints, exact at every magnitude."""
        steps, over = self.sample_batch(rng, size)
        out = steps.tolist()
        for i in np.flatnonzero(over):
            k = self._tail_magnitude(rng, float(2**62 - 1))
            out[i] = k if out[i] > 0 else -k
        return out

    def sample_batch(self, rng, size: int, limit: int = 2**62):
        """Draw ``size`` steps at once as int64.

        Returns
        -------
        steps : (size,) int64 ndarray
            Sampled steps; entries whose magnitude exceeds ``limit`` hold
            ``sign * limit``.
        overflow : (size,) bool ndarray
            True where the true magnitude exceeds ``limit``.
        """
        u = rng.random(size)
        mags = np.searchsorted(self._cdf, u, side="right").astype(np.int64) + 1
        overflow = np.zeros(size, dtype=bool)
        idx = np.flatnonzero(u >= self._p_table)
        alpha = self.alpha
        while idx.size:
            v = 1.0 - rng.random(idx.size)
            with np.errstate(over="ignore"):
                uu = self._env_scale * v ** (-1.0 / alpha)
            if np.any(uu > self.max_magnitude):
                raise StepOverflowError("sampled step exceeds max_magnitude")
            big = uu >= float(limit)
            k = np.ceil(np.minimum(uu, float(limit))).astype(np.int64)
            kf = np.where(big, uu, k.astype(float))
            ratio = alpha / (kf * np.expm1(-alpha * np.log1p(-1.0 / kf)))
            acc = rng.random(idx.size) <= ratio
            done = idx[acc]
            mags[done] = np.where(big[acc], limit, k[acc])
            overflow[done] = big[acc]
            idx = idx[~acc]
        signs = np.where(rng.random(size) < 0.5, 1, -1)
        return signs * mags, overflow
