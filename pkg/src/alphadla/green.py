"""Green function of the alpha-walk.

``G(x) = (1/2pi) * integral_{-pi}^{pi} cos(theta x) / (1 - phi(theta)) dtheta``.

Small ``|x|`` is integrated with a graded composite Gauss-Legendre rule that
resolves the ``|theta|**-alpha`` singularity at the origin.  Large ``|x|``
inside the cache is evaluated from the singular expansion of
``1/(1 - phi)`` at ``theta = 0``, which turns into an asymptotic series of
generalized powers of ``|x|``; the two routes are cross-checked on an
overlap window at build time.  Beyond the cache a single fitted power law
``A_G * |x|**(alpha - 1)`` is used.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gamma, roots_legendre

from .steplaw import StepLaw

__all__ = [
    "GreenTable",
    "QuadratureError",
    "asymptotic_terms",
    "build_table",
    "get_table",
    "green",
    "green_abs",
    "green_asymptotic",
    "green_quadrature",
    "load_table",
    "mc_green_estimate",
    "save_table",
]

TABLE_FORMAT_VERSION = 1


class QuadratureError(RuntimeError):
    pass


@dataclass
class GreenTable:
    """Cached values of ``G(|x|)`` for ``0 <= |x| <= x_cache``.

    Attributes
    ----------
    alpha : float
    cache : ndarray
        ``cache[k] = G(k)``.
    x_cache : int
    asym_coeff : float
        ``A_G``, fitted so that ``G(x) ~ A_G |x|**(alpha - 1)`` over the top
        decade of the cache.
    quad_tolerance : float
    fit_slope : float
        Free log-log slope over the top decade.
    fit_resid_std : float
        Residual standard deviation of the fixed-slope fit of ``log G``.
    band : (float, float)
        Observed range of ``G(x) |x|**(1 - alpha)`` over ``1 <= |x| <= x_cache``.
    """

    alpha: float
    cache: np.ndarray
    x_cache: int
    asym_coeff: float
    quad_tolerance: float
    fit_slope: float = float("nan")
    fit_resid_std: float = float("nan")
    band: tuple = (float("nan"), float("nan"))
    table_cutoff: int = 2**16
    meta: dict = field(default_factory=dict)

    @property
    def g0(self) -> float:
        return float(self.cache[0])

    def header(self) -> dict:
        return {
            "version": TABLE_FORMAT_VERSION,
            "alpha": self.alpha,
            "x_cache": self.x_cache,
            "quad_tolerance": self.quad_tolerance,
            "asym_coeff": self.asym_coeff,
            "table_cutoff": self.table_cutoff,
        }

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.header(), sort_keys=True).encode())
        h.update(np.ascontiguousarray(self.cache, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    def __call__(self, x):
        return green(self, x)


# ----------------------------------------------------------------------
# Quadrature


def _graded_rule(x_max: float, npts: int, levels: int):
    """Nodes/weights on (0, pi] plus the width of the untreated innermost cell."""
    xg, wg = roots_legendre(npts)
    # panels of half an oscillation of cos(theta * x_max)
    width = min(math.pi / 4, math.pi / max(x_max, 1.0))
    n_uniform = int(math.ceil((math.pi - width) / width))
    edges = np.linspace(width, math.pi, n_uniform + 1)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    nodes = [(half[:, None] * xg + (0.5 * (hi + lo))[:, None]).ravel()]
    weights = [(half[:, None] * wg).ravel()]
    top = width
    # geometric grading towards the singularity
    for _ in range(levels):
        bot = 0.5 * top
        nodes.append(0.5 * (top - bot) * xg + 0.5 * (top + bot))
        weights.append(0.5 * (top - bot) * wg)
        top = bot
    return np.concatenate(nodes), np.concatenate(weights), top


def _integrate(step_law: StepLaw, xs: np.ndarray, npts: int, levels: int,
               chunk: int = 256) -> np.ndarray:
    theta, wts, eps = _graded_rule(float(np.max(np.abs(xs))), npts, levels)
    gw = wts / step_law.one_minus_char_fn(theta)
    out = np.empty(xs.shape, dtype=float)
    flat = xs.ravel().astype(float)
    res = out.ravel()
    for i in range(0, flat.size, chunk):
        res[i:i + chunk] = np.cos(np.outer(flat[i:i + chunk], theta)) @ gw
    # innermost cell [0, eps]: 1/(1 - phi) ~ theta^-alpha / a0 and cos ~ 1
    alpha = step_law.alpha
    res += eps ** (1 - alpha) / (step_law._char_a0 * (1 - alpha))
    return res.reshape(xs.shape) / math.pi


def green_quadrature(step_law: StepLaw, x, quad_tolerance: float = 1e-9,
                     max_refinements: int = 4):
    """Fourier-integral evaluation of ``G(x)`` (scalar or array ``x``).

    Two graded Gauss-Legendre rules of different order are compared; the
    orders are raised until they agree to ``quad_tolerance``.

    Raises
    ------
    QuadratureError
        If the rules fail to agree within the refinement budget.
    """
    xs = np.abs(np.atleast_1d(np.asarray(x, dtype=np.int64)))
    npts, levels = 12, 48
    coarse = _integrate(step_law, xs, npts, levels)
    for _ in range(max_refinements):
        npts, levels = npts + 6, levels + 8
        fine = _integrate(step_law, xs, npts, levels)
        err = float(np.max(np.abs(fine - coarse)))
        if err <= quad_tolerance:
            return float(fine[0]) if np.ndim(x) == 0 else fine
        coarse = fine
    raise QuadratureError(f"graded quadrature did not converge (last change {err:.2e})")


# ----------------------------------------------------------------------
# Singular expansion at theta = 0


def asymptotic_terms(step_law: StepLaw, max_exponent: float = 30.0):
    """Terms ``(gamma, c)`` with ``G(x) ~ sum_k c_k |x|**(-1 - gamma_k)``.

    ``1 - phi = a0 |t|^alpha + sum_j b_j t^{2j}`` so ``1/(1 - phi)`` is a
    generalized power series in ``|t|^{2J - (N+1) alpha}``; each non-even
    power ``|t|^g`` contributes ``Gamma(g+1) cos(pi (g+1)/2) / pi * |x|^{-g-1}``
    to the Fourier coefficient.
    """
    alpha = step_law.alpha
    a0 = step_law._char_a0
    ratio = {(j, 1): b / a0 for j, b in enumerate(step_law._char_b, start=1)
             if 2 * j - 2 * alpha <= max_exponent}
    series = {(0, 0): 1.0}
    power = {(0, 0): 1.0}
    sign = 1.0
    while power:
        sign = -sign
        nxt = {}
        for (j1, n1), c1 in power.items():
            for (j2, n2), c2 in ratio.items():
                key = (j1 + j2, n1 + n2)
                if 2 * key[0] - (key[1] + 1) * alpha > max_exponent:
                    continue
                nxt[key] = nxt.get(key, 0.0) + c1 * c2
        power = nxt
        for key, c in nxt.items():
            series[key] = series.get(key, 0.0) + sign * c
    terms = []
    for (j, n), c in series.items():
        g = 2 * j - (n + 1) * alpha
        if abs(g - round(g)) < 1e-12 and round(g) % 2 == 0:
            continue  # smooth even power: no contribution
        terms.append((g, c / a0 * gamma(g + 1) * math.cos(math.pi * (g + 1) / 2) / math.pi))
    terms.sort()
    return terms


def green_asymptotic(terms, x):
    """Evaluate the asymptotic series at ``|x| >= 1``."""
    x = np.abs(np.asarray(x, dtype=float))
    logx = np.log(x)
    out = np.zeros_like(x)
    for g, c in reversed(terms):
        out += c * np.exp((-1.0 - g) * logx)
    return out


# ----------------------------------------------------------------------
# Table


def build_table(step_law: StepLaw, x_cache: int = 2**16, quad_tolerance: float = 1e-9,
                x_quad: int = 2048) -> GreenTable:
    """Fill the cache and fit the large-``|x|`` coefficient."""
    if x_cache < 2**10:
        raise ValueError("x_cache must be at least 2**10")
    alpha = step_law.alpha
    n_quad = min(x_quad, x_cache)
    cache = np.empty(x_cache + 1)
    cache[:n_quad + 1] = green_quadrature(step_law, np.arange(n_quad + 1), quad_tolerance)
    terms = asymptotic_terms(step_law)
    overlap = np.arange(n_quad // 2, n_quad + 1)
    mismatch = float(np.max(np.abs(green_asymptotic(terms, overlap) - cache[overlap])))
    if mismatch > quad_tolerance:
        raise QuadratureError(
            f"quadrature and asymptotic series disagree by {mismatch:.2e} on [{overlap[0]}, {overlap[-1]}]")
    if x_cache > n_quad:
        cache[n_quad + 1:] = green_asymptotic(terms, np.arange(n_quad + 1, x_cache + 1))

    top = np.arange(max(1, x_cache // 10), x_cache + 1)
    logx = np.log(top)
    logg = np.log(cache[top])
    log_ag = float(np.mean(logg - (alpha - 1) * logx))
    resid = logg - (alpha - 1) * logx - log_ag
    slope = float(np.polyfit(logx, logg, 1)[0])
    xs = np.arange(1, x_cache + 1)
    scaled = cache[1:] * xs ** (1 - alpha)
    return GreenTable(
        alpha=alpha, cache=cache, x_cache=int(x_cache), asym_coeff=math.exp(log_ag),
        quad_tolerance=quad_tolerance, fit_slope=slope, fit_resid_std=float(np.std(resid)),
        band=(float(scaled.min()), float(scaled.max())), table_cutoff=step_law.table_cutoff,
        meta={"x_quad": n_quad, "overlap_mismatch": mismatch, "leading_coeff": terms[0][1]},
    )


@lru_cache(maxsize=16)
def _cached(alpha: float, x_cache: int, table_cutoff: int) -> GreenTable:
    return build_table(StepLaw(alpha, table_cutoff), x_cache)


def get_table(step_law: StepLaw, x_cache: int = 2**16) -> GreenTable:
    """Memoised :func:`build_table` (tables are immutable once built)."""
    return _cached(step_law.alpha, int(x_cache), step_law.table_cutoff)


def green(table: GreenTable, x):
    """``G(x)`` for an integer ``x`` of any size, or an integer array."""
    if np.ndim(x) == 0:
        ax = abs(int(x))
        if ax <= table.x_cache:
            return float(table.cache[ax])
        return table.asym_coeff * math.exp((table.alpha - 1.0) * math.log(ax))
    return green_abs(table, np.abs(np.asarray(x)))


def green_abs(table: GreenTable, d: np.ndarray) -> np.ndarray:
    """Vectorised ``G`` of nonnegative distances (int64, float or object array)."""
    d = np.asarray(d)
    if d.dtype == object:
        small = d <= table.x_cache
        out = np.empty(d.shape)
        out[small] = table.cache[d[small].astype(np.int64)]
        big = d[~small].astype(float)
        out[~small] = table.asym_coeff * np.exp((table.alpha - 1.0) * np.log(big))
        return out
    if d.dtype.kind == "f":
        small = d <= table.x_cache
        out = np.empty(d.shape)
        out[small] = table.cache[d[small].astype(np.int64)]
        out[~small] = table.asym_coeff * np.exp((table.alpha - 1.0) * np.log(d[~small]))
        return out
    out = table.cache[np.minimum(d, table.x_cache)]
    big = d > table.x_cache
    if big.any():
        out[big] = table.asym_coeff * np.exp((table.alpha - 1.0) * np.log(d[big].astype(float)))
    return out


def save_table(table: GreenTable, path) -> None:
    """Write ``table`` as an ``.npz`` archive with a JSON header."""
    header = dict(table.header(), fit_slope=table.fit_slope,
                  fit_resid_std=table.fit_resid_std, band=list(table.band),
                  fingerprint=table.fingerprint(), meta=table.meta)
    with open(path, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header, sort_keys=True)), cache=table.cache)


def load_table(path) -> GreenTable:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        cache = np.array(data["cache"])
    if header.get("version") != TABLE_FORMAT_VERSION:
        raise ValueError(f"unsupported Green table version {header.get('version')}")
    table = GreenTable(
        alpha=header["alpha"], cache=cache, x_cache=header["x_cache"],
        asym_coeff=header["asym_coeff"], quad_tolerance=header["quad_tolerance"],
        fit_slope=header["fit_slope"], fit_resid_std=header["fit_resid_std"],
        band=tuple(header["band"]), table_cutoff=header["table_cutoff"], meta=header["meta"])
    if table.fingerprint() != header["fingerprint"]:
        raise ValueError("Green table fingerprint mismatch (corrupt file?)")
    return table


# ----------------------------------------------------------------------
# Monte Carlo oracle


def mc_green_estimate(step_law: StepLaw, x, n_walks: int, t_max: int, rng,
                      asym_coeff: float | None = None):
    """Interval for ``G(x)`` from visit counts of walks started at 0.

    Each walk runs ``t_max`` steps.  ``lo`` is the mean visit count minus 3
    standard errors; ``hi = lo + 6 se + bias`` where ``bias`` bounds the
    visits after the horizon through ``asym_coeff * m**(alpha - 1)`` with
    ``m`` the 10th percentile of ``|R_T - x|`` (and at least the empirical
    mean of ``asym_coeff * |R_T - x|**(alpha - 1)``).  ``asym_coeff``
    defaults to the fitted coefficient of the cached table.

    ``x`` may be a sequence, in which case one shared set of walks serves
    every target and a list of intervals is returned.

    Returns
    -------
    (lo, hi) : tuple of float, or a list of them
    """
    from . import _kernels

    if n_walks < 1000:
        raise ValueError("n_walks must be at least 1000")
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=np.int64))
    if asym_coeff is None:
        asym_coeff = get_table(step_law).asym_coeff
    sampler = _kernels.SamplerParams(step_law)
    visits, final = _kernels.count_visits(xs, int(n_walks), int(t_max), *sampler.args(),
                                          _kernels.rng_state(rng))
    alpha = step_law.alpha
    out = []
    for j, xj in enumerate(xs):
        counts = visits[:, j]
        dist = np.abs(final.astype(float) - float(xj))
        mean = counts.mean()
        se = counts.std(ddof=1) / math.sqrt(n_walks)
        m10 = max(float(np.percentile(dist, 10)), 1.0)
        bias = max(asym_coeff * m10 ** (alpha - 1),
                   float(np.mean(asym_coeff * np.maximum(dist, 1.0) ** (alpha - 1))))
        lo = mean - 3 * se
        out.append((lo, lo + 6 * se + bias))
    return out[0] if scalar else out
