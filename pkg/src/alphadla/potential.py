"""Capacity, escape probabilities and harmonic measure of finite sets.

For a finite set ``A`` the last-exit decomposition gives the linear system
``sum_b G(a - b) w(b) = 1`` for ``a`` in ``A``, whose solution ``w`` is the
vector of escape probabilities ``E_A(a)``.  The capacity is ``sum(w)``, the
equilibrium charge is ``w / capacity`` and, for ``x`` outside ``A``,
``P_x(ever hit A) = sum_a G(x - a) w(a)``.

:class:`PotentialState` keeps the Cholesky factor of the kernel matrix and
grows it one point at a time with a bordered (Schur complement) update.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .green import GreenTable, green, green_abs

__all__ = [
    "HarmonicMeasure",
    "NumericalBreachError",
    "PotentialState",
    "cantor_set",
    "escape_outside",
    "extend",
    "gluing_measure",
    "harmonic_measure",
    "progression_set",
    "solve_equilibrium",
]

logger = logging.getLogger(__name__)

DEFAULT_CAP = 4096
RESIDUAL_TOL = 1e-9
IDENTITY_RTOL = 1e-8
CLAMP_TOL = 1e-8
REFACTOR_EVERY = 256
# int64 fast path is used while every coordinate stays below this
_NARROW = 2**62


class NumericalBreachError(ArithmeticError):
    """A potential-theoretic quantity left its admissible range."""


def _fits_narrow(values) -> bool:
    return all(-_NARROW < v < _NARROW for v in values)


class PotentialState:
    """Equilibrium data of a finite set, extendable point by point.

    Use :func:`solve_equilibrium` to build one.  ``points`` is the list of
    members in insertion order and ``w[i]`` the escape probability of
    ``points[i]``.
    """

    def __init__(self, table: GreenTable, cap: int = DEFAULT_CAP):
        self.table = table
        self.cap = int(cap)
        self.points: list[int] = []
        self._index: dict[int, int] = {}
        self._narrow = True
        self._pos = np.empty(0, dtype=np.int64)
        self._alloc = 0
        self._K = np.empty((0, 0))
        self._L = np.empty((0, 0))
        self.w = np.empty(0)
        self.capacity = 0.0
        self.residual = 0.0
        self.clamp_count = 0
        self.refactor_count = 0
        self.indefinite = False
        self._since_refactor = 0

    # ------------------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.points)

    def __len__(self):
        return len(self.points)

    def __contains__(self, x) -> bool:
        return int(x) in self._index

    @property
    def kernel(self) -> np.ndarray:
        return self._K[:self.n, :self.n]

    @property
    def kernel_factor(self) -> np.ndarray:
        return self._L[:self.n, :self.n]

    def index(self, x) -> int:
        return self._index[int(x)]

    def copy(self) -> "PotentialState":
        new = PotentialState.__new__(PotentialState)
        new.__dict__.update(self.__dict__)
        new.points = list(self.points)
        new._index = dict(self._index)
        new._pos = self._pos.copy()
        new._K = self._K.copy()
        new._L = self._L.copy()
        new.w = self.w.copy()
        return new

    # ------------------------------------------------------------------
    # distances and kernels

    def _distances(self, ys) -> np.ndarray:
        """``|y - a|`` for every query ``y`` (rows) and member ``a`` (columns)."""
        if isinstance(ys, np.ndarray) and ys.dtype == np.int64 and self._narrow:
            if ys.size == 0 or np.max(np.abs(ys)) < _NARROW:
                return np.abs(ys[:, None] - self._pos[None, :])
        ys = list(ys)
        if self._narrow and _fits_narrow(ys):
            return np.abs(np.asarray(ys, dtype=np.int64)[:, None] - self._pos[None, :])
        pos = np.array(self.points, dtype=object)
        yo = np.array(ys, dtype=object)
        return np.abs(yo[:, None] - pos[None, :])

    def kernel_rows(self, ys) -> np.ndarray:
        """Matrix ``G(y - a)`` for queries ``ys`` against the members."""
        if self.n == 0:
            return np.zeros((len(ys), 0))
        return green_abs(self.table, self._distances(ys))

    def hit_probability(self, ys) -> np.ndarray:
        """``sum_a G(y - a) w(a)``: probability of ever visiting ``A`` from ``y``.

        Equals 1 for members of ``A`` (time 0 counts) and ``1 - E_A(y)`` outside.
        """
        if self.n == 0:
            return np.zeros(len(ys))
        return self.kernel_rows(ys) @ self.w

    def escape(self, x) -> float:
        """``E_A(x)`` for ``x`` outside ``A`` with the clamping policy applied."""
        x = int(x)
        if x in self._index:
            raise ValueError(f"{x} is a member of the set")
        e = 1.0 - float(self.hit_probability([x])[0])
        return self._clamp(e)

    def _clamp(self, e: float) -> float:
        if e < 0.0:
            if e < -CLAMP_TOL:
                raise NumericalBreachError(f"escape probability {e:.3e} below 0")
            self.clamp_count += 1
            return 0.0
        return min(e, 1.0)

    # ------------------------------------------------------------------
    # factorization

    def _ensure_alloc(self, m: int) -> None:
        if m <= self._alloc:
            return
        new = min(self.cap, max(16, 2 * self._alloc, m))
        K = np.zeros((new, new))
        L = np.zeros((new, new))
        n = self.n
        K[:n, :n] = self._K[:n, :n]
        L[:n, :n] = self._L[:n, :n]
        self._K, self._L, self._alloc = K, L, new

    def refactor(self) -> None:
        """Full Cholesky factorization and solve of ``G_A w = 1``."""
        n = self.n
        K = self._K[:n, :n]
        ones = np.ones(n)
        try:
            L = sla.cholesky(K, lower=True)
            self._L[:n, :n] = L
            w = sla.cho_solve((L, True), ones)
            self.indefinite = False
        except sla.LinAlgError:
            logger.warning("kernel matrix not positive definite (n=%d); using symmetric solve", n)
            w = sla.solve(K, ones, assume_a="sym")
            self.indefinite = True
        self.w = w
        self.capacity = math.fsum(w)
        self.residual = self.verify()
        self.refactor_count += 1
        self._since_refactor = 0
        if self.residual > RESIDUAL_TOL:
            raise NumericalBreachError(f"equilibrium residual {self.residual:.2e} after refactorization")
        if np.any(w <= 0):
            raise NumericalBreachError("nonpositive escape probability in equilibrium solution")

    def verify(self) -> float:
        """``||G_A w - 1||_inf``."""
        if self.n == 0:
            return 0.0
        return float(np.max(np.abs(self.kernel @ self.w - 1.0)))

    def _append_point(self, x: int, row: np.ndarray) -> None:
        n = self.n
        self._ensure_alloc(n + 1)
        self._K[n, :n] = row
        self._K[:n, n] = row
        self._K[n, n] = self.table.g0
        self.points.append(x)
        self._index[x] = n
        if self._narrow and -_NARROW < x < _NARROW:
            self._pos = np.append(self._pos, np.int64(x))
        else:
            self._narrow = False
            self._pos = np.empty(0, dtype=np.int64)

    def add(self, x) -> float:
        """Add ``x`` in place; return the capacity increment.

        The new escape vector comes from the bordered factorization: with
        ``k = G(x - A)`` and ``u = G_A^{-1} k``, the Schur complement
        ``s = G(0) - k.u`` gives ``w'(x) = E_A(x) / s`` and
        ``w'(A) = w - u w'(x)``.  The increment is checked against
        ``E_A(x) * E'_A(x)``.
        """
        x = int(x)
        if x in self._index:
            raise ValueError(f"{x} is already a member")
        if self.n >= self.cap:
            raise ValueError(f"set size cap {self.cap} reached")
        if self.n == 0:
            self._append_point(x, np.empty(0))
            self.refactor()
            return self.capacity

        n = self.n
        old_cap = self.capacity
        row = self.kernel_rows([x])[0]
        e_x = 1.0 - float(row @ self.w)
        L = self._L[:n, :n]
        y = sla.solve_triangular(L, row, lower=True, check_finite=False)
        s = self.table.g0 - float(y @ y)
        self._append_point(x, row)
        if self.indefinite or not s > 0.0:
            self.refactor()
            return self.capacity - old_cap

        e_x = self._clamp(e_x)
        u = sla.solve_triangular(L, y, lower=True, trans="T", check_finite=False)
        wx = e_x / s
        self.w = np.append(self.w - u * wx, wx)
        self._L[n, :n] = y
        self._L[n, n] = math.sqrt(s)
        self.capacity = math.fsum(self.w)
        delta = self.capacity - old_cap
        self._since_refactor += 1

        self.residual = self.verify()
        if self.residual > RESIDUAL_TOL or self._since_refactor >= REFACTOR_EVERY:
            self.refactor()
            delta = self.capacity - old_cap
            wx = float(self.w[n])
        if abs(delta - e_x * wx) > IDENTITY_RTOL * self.capacity:
            raise NumericalBreachError(
                f"capacity increment {delta!r} differs from E*E' = {e_x * wx!r}")
        return delta


def solve_equilibrium(table: GreenTable, points, cap: int = DEFAULT_CAP) -> PotentialState:
    """Build the equilibrium state of a finite set of distinct integers."""
    pts = [int(p) for p in points]
    if not pts:
        raise ValueError("the set must be nonempty")
    if len(set(pts)) != len(pts):
        raise ValueError("points must be distinct")
    if len(pts) > cap:
        raise ValueError(f"{len(pts)} points exceed the cap of {cap}")
    state = PotentialState(table, cap)
    n = len(pts)
    state._ensure_alloc(n)
    state.points = pts
    state._index = {p: i for i, p in enumerate(pts)}
    if _fits_narrow(pts):
        state._pos = np.asarray(pts, dtype=np.int64)
    else:
        state._narrow = False
    state._K[:n, :n] = state.kernel_rows(pts)
    state.refactor()
    return state


def extend(state: PotentialState, x):
    """Return ``(state for A + {x}, capacity increment)``; ``state`` is untouched."""
    new = state.copy()
    delta = new.add(x)
    return new, delta


def escape_outside(state: PotentialState, x) -> float:
    """``E_A(x) = 1 - sum_a G(x - a) w(a)`` for ``x`` not in ``A``."""
    return state.escape(x)


@dataclass
class HarmonicMeasure:
    """Harmonic measure from infinity: ``weights[i] = w[i] / capacity``."""

    points: list
    weights: np.ndarray

    def as_dict(self) -> dict:
        return dict(zip(self.points, self.weights.tolist()))


def harmonic_measure(state: PotentialState) -> HarmonicMeasure:
    return HarmonicMeasure(list(state.points), state.w / state.capacity)


def gluing_measure(state: PotentialState, step_law, x, a) -> float:
    """Limit probability that a walk from infinity is glued at ``x`` by a step onto ``a``.

    ``mu(x, a) = pmf(a - x) * E_A(x) / capacity``.
    """
    x, a = int(x), int(a)
    if x in state:
        raise ValueError(f"{x} is a member of the set")
    if a not in state:
        raise ValueError(f"{a} is not a member of the set")
    return step_law.pmf(a - x) * state.escape(x) / state.capacity


def cantor_set(level: int) -> list[int]:
    """Integers in ``[0, 3**level)`` whose base-3 digits avoid 1."""
    if not 0 <= level <= 16:
        raise ValueError("level must lie in [0, 16]")
    pts = [0]
    for j in range(level):
        step = 2 * 3**j
        pts = pts + [p + step for p in pts]
    return sorted(pts)


def progression_set(d: int, m: int) -> list[int]:
    """``d * {0, ..., m}``."""
    return [d * i for i in range(m + 1)]


def green_between(table: GreenTable, A, B) -> float:
    """``G(A, B) = sum_{a in A, b in B} G(a - b)``."""
    return math.fsum(green(table, a - b) for a in A for b in B)
