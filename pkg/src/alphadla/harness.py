"""Ensemble experiments, exponent fits and tabular output.

Every experiment returns an :class:`ExperimentResult`: a list of
:class:`ResultRow` (written as CSV), a list of :class:`Check` (armed checks
decide the CLI exit code) and a provenance dictionary written next to the
CSV.  Work is fanned out per seed (or per Monte Carlo chunk) and reduced in
submission order, so the number of worker processes never changes the
output bytes.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .config import ExperimentConfig
from .dla import dla_run
from .green import get_table
from .hitting import combine_hitting, mc_hitting
from .potential import cantor_set, harmonic_measure, solve_equilibrium
from .sdla import auto_D, coupled_runs, estimate_M
from .steplaw import StepLaw

__all__ = [
    "Check",
    "ExperimentResult",
    "ResultRow",
    "diameter_band",
    "exp_cantor",
    "exp_coupling",
    "exp_harmonic",
    "exp_scaling",
    "fit_exponent",
    "ordered_map",
    "write_result",
]

ROW_FIELDS = ("experiment", "alpha", "n", "statistic", "value", "lo", "hi", "runs")
HARMONIC_CHUNK = 50_000
M_SEED_OFFSET = 10**6


@dataclass
class ResultRow:
    """One tabulated statistic; ``lo <= value <= hi`` always holds."""

    experiment: str
    alpha: float
    n: int
    statistic: str
    value: float
    lo: float
    hi: float
    runs: int

    def __post_init__(self):
        if not (self.lo <= self.value <= self.hi):
            raise ValueError(f"bounds [{self.lo}, {self.hi}] do not bracket {self.value} "
                             f"({self.statistic})")


@dataclass
class Check:
    """A pass/fail comparison.  Unarmed checks are reported but never fail a run."""

    name: str
    value: float
    lo: float | None
    hi: float | None
    armed: bool = True
    note: str = ""

    @property
    def passed(self) -> bool:
        if self.value is None or (isinstance(self.value, float) and math.isnan(self.value)):
            return False
        return (self.lo is None or self.value >= self.lo) and (self.hi is None or self.value <= self.hi)

    def line(self) -> str:
        status = ("PASS" if self.passed else "FAIL") if self.armed else "info"
        lo = "-inf" if self.lo is None else f"{self.lo:.6g}"
        hi = "inf" if self.hi is None else f"{self.hi:.6g}"
        return f"[{status}] {self.name}: {self.value:.6g} in [{lo}, {hi}]"

    def as_dict(self) -> dict:
        return dict(asdict(self), passed=self.passed)


@dataclass
class ExperimentResult:
    experiment: str
    rows: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    logs: list = field(default_factory=list)  # JSON-serialisable records

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if c.armed)

    def csv_text(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(ROW_FIELDS)
        for r in self.rows:
            wr.writerow([r.experiment, repr(float(r.alpha)), r.n, r.statistic,
                         repr(float(r.value)), repr(float(r.lo)), repr(float(r.hi)), r.runs])
        return buf.getvalue()


def write_result(result: ExperimentResult, out_dir) -> list:
    """Write ``<name>.csv``, ``<name>.provenance.json`` and (if any) ``<name>.jsonl``."""
    os.makedirs(out_dir, exist_ok=True)
    name = result.experiment
    paths = [os.path.join(out_dir, f"{name}.csv"), os.path.join(out_dir, f"{name}.provenance.json")]
    with open(paths[0], "w") as fh:
        fh.write(result.csv_text())
    prov = dict(result.provenance, checks=[c.as_dict() for c in result.checks])
    with open(paths[1], "w") as fh:
        json.dump(prov, fh, indent=1, sort_keys=True)
        fh.write("\n")
    if result.logs:
        paths.append(os.path.join(out_dir, f"{name}.jsonl"))
        with open(paths[2], "w") as fh:
            for rec in result.logs:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return paths


def ordered_map(fn, items, threads: int = 1) -> list:
    """``list(map(fn, items))``, optionally on a process pool; order is preserved."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _provenance(config: ExperimentConfig, experiment: str, **extra) -> dict:
    from . import __version__

    prints = {}
    for a in config.alphas:
        prints[repr(a)] = get_table(StepLaw(a), config.x_cache).fingerprint()
    return dict(experiment=experiment, code_version=__version__, config=config.as_dict(),
                green_fingerprints=prints, **extra)


# ----------------------------------------------------------------------
# exponent fits


def fit_exponent(series) -> tuple:
    """Least-squares slope of ``log value`` against ``log n`` with a 95% interval.

    Parameters
    ----------
    series : sequence of (n, value)
        At least four points, ``n`` strictly increasing, values positive.

    Returns
    -------
    (slope, ci_low, ci_high)
    """
    pts = [(float(n), float(v)) for n, v in series]
    if len(pts) < 4:
        raise ValueError("fit_exponent needs at least 4 points")
    ns = np.array([p[0] for p in pts])
    vs = np.array([p[1] for p in pts])
    if np.any(ns <= 0) or np.any(np.diff(ns) <= 0):
        raise ValueError("n must be positive and strictly increasing")
    if np.any(vs <= 0) or not np.all(np.isfinite(vs)):
        raise ValueError("values must be positive and finite")
    fit = stats.linregress(np.log(ns), np.log(vs))
    half = stats.t.ppf(0.975, len(pts) - 2) * fit.stderr
    slope = float(fit.slope)
    return slope, slope - half, slope + half


def diameter_band(alpha: float) -> tuple:
    """Accepted range for the fitted diameter exponent at desk scale.

    Below ``1/3`` the exponent is ``1/alpha`` up to ``n^o(1)`` corrections and
    the band is ``1/alpha +- 1.5``.  Above, the growth exponent lies between
    ``max(2, 1/alpha)`` and ``2 / (alpha (2 - alpha))``; the band lowers the
    first by 0.5 and raises the second by 20%.
    """
    if alpha < 1 / 3:
        return 1 / alpha - 1.5, 1 / alpha + 1.5
    return max(2.0, 1 / alpha) - 0.5, 1.2 * 2 / (alpha * (2 - alpha))


# ----------------------------------------------------------------------
# scaling


def _scaling_job(args):
    alpha, n_max, seed, x_cache = args
    try:
        law = StepLaw(alpha)
        log = dla_run(alpha, n_max, seed, table=get_table(law, x_cache), step_law=law)
    except Exception as exc:  # recorded and excluded by the caller
        return {"seed": seed, "error": f"{type(exc).__name__}: {exc}"}
    return {"seed": seed, "snapshots": [[s["n"], s["diameter"], s["capacity"]] for s in log.snapshots]}


def _audit_monotone(rec) -> None:
    snaps = rec["snapshots"]
    for (n0, d0, c0), (n1, d1, c1) in zip(snaps, snaps[1:]):
        if d1 < d0 or c1 < c0 * (1 - 1e-9):
            raise RuntimeError(f"seed {rec['seed']}: diameter/capacity decreased between "
                               f"n={n0} and n={n1}")


def exp_scaling(config: ExperimentConfig) -> ExperimentResult:
    """Diameter and capacity growth of DLA ensembles, with log-log exponent fits.

    Per snapshot ``n = 2^k`` the rows hold the median over runs with the
    quartiles as bounds.  Exponents are fitted to the median series over
    ``n >= fit_min``.  Bands are armed at ``n_max >= 512`` with ``runs >= 20``.
    """
    res = ExperimentResult("exp_scaling", provenance=_provenance(
        config, "exp_scaling", bands={repr(a): diameter_band(a) for a in config.alphas},
        band_note="bands are engineering judgment for n <= 512"))
    for alpha in config.alphas:
        jobs = [(alpha, config.n_max, s, config.x_cache) for s in config.run_seeds()]
        out = ordered_map(_scaling_job, jobs, config.threads)
        failed = [r for r in out if "error" in r]
        good = [r for r in out if "error" not in r]
        for r in failed:
            res.logs.append({"alpha": alpha, "seed": r["seed"], "error": r["error"]})
        if len(failed) > 0.1 * len(out):
            raise RuntimeError(f"alpha={alpha}: {len(failed)} of {len(out)} runs failed")
        for r in good:
            _audit_monotone(r)
        runs = len(good)
        res.rows.append(ResultRow("exp_scaling", alpha, config.n_max, "failed_runs",
                                  len(failed), len(failed), len(failed), len(out)))
        snaps = np.array([r["snapshots"] for r in good], dtype=float)
        ns = snaps[0, :, 0].astype(int)
        med = {}
        for j, name in ((1, "diameter"), (2, "capacity")):
            q1, q2, q3 = np.percentile(snaps[:, :, j], [25, 50, 75], axis=0)
            med[name] = q2
            for k, n in enumerate(ns):
                res.rows.append(ResultRow("exp_scaling", alpha, int(n), f"{name}_median",
                                          float(q2[k]), float(q1[k]), float(q3[k]), runs))
        sel = ns >= config.fit_min
        armed = config.n_max >= 512 and runs >= 20
        band = diameter_band(alpha)
        for name in ("diameter", "capacity"):
            slope, lo, hi = fit_exponent(list(zip(ns[sel], med[name][sel])))
            res.rows.append(ResultRow("exp_scaling", alpha, config.n_max, f"{name}_slope",
                                      slope, lo, hi, runs))
            if name == "diameter":
                res.checks.append(Check(f"alpha={alpha} diameter slope", slope, *band, armed=armed))
            elif alpha < 1 / 3:
                res.checks.append(Check(f"alpha={alpha} capacity slope", slope, 0.7, None, armed=armed))
    return res


# ----------------------------------------------------------------------
# Cantor sets


def exp_cantor(config: ExperimentConfig) -> ExperimentResult:
    """Capacity of the Cantor sets against ``min(2^l, 3^{l(1-alpha)})``.

    The observed constants are ``c = min_l l * ratio_l`` (levels >= 1) and
    ``C = max_l ratio_l``.
    """
    if config.levels > 12:
        raise ValueError("levels must be at most 12")
    res = ExperimentResult("exp_cantor", provenance=_provenance(config, "exp_cantor"))
    for alpha in config.alphas:
        table = get_table(StepLaw(alpha), config.x_cache)
        ratios = []
        for level in range(config.levels + 1):
            pts = cantor_set(level)
            cap = solve_equilibrium(table, pts, max(len(pts) + 1, 1024)).capacity
            bound = min(2.0**level, 3.0 ** (level * (1 - alpha)))
            ratios.append(cap / bound)
            for name, v in (("capacity", cap), ("bound", bound), ("ratio", cap / bound)):
                res.rows.append(ResultRow("exp_cantor", alpha, level, name, v, v, v, 1))
            if level == 0:
                res.checks.append(Check(f"alpha={alpha} level 0 capacity * G(0)",
                                        cap * table.g0, 1 - 1e-12, 1 + 1e-12))
        c_obs = min(l * r for l, r in enumerate(ratios) if l >= 1) if len(ratios) > 1 else ratios[0]
        C_obs = max(ratios)
        for name, v in (("c_observed", c_obs), ("C_observed", C_obs)):
            res.rows.append(ResultRow("exp_cantor", alpha, config.levels, name, v, v, v, 1))
        res.checks.append(Check(f"alpha={alpha} observed c", c_obs, 1e-12, None))
        res.checks.append(Check(f"alpha={alpha} observed C", C_obs, None, 1e12))
    return res


# ----------------------------------------------------------------------
# harmonic measure


def _harmonic_job(args):
    alpha, pts, y, n_walks, entropy, key, eps_esc, x_cache = args
    law = StepLaw(alpha)
    state = solve_equilibrium(get_table(law, x_cache), pts)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy, spawn_key=key)))
    return mc_hitting(law, pts, y, n_walks=n_walks, rng=rng, eps_esc=eps_esc, state=state)


def _harmonic_walks(state, y, hits, max_walks):
    p = float(state.hit_probability(np.array([y]))[0])
    return int(min(max_walks, math.ceil(hits / max(p, 1e-300)))), p


def _run_hitting(config, alpha, pts, y, key, state):
    n_walks, p = _harmonic_walks(state, y, config.harmonic_hits, config.harmonic_max_walks)
    jobs = []
    for c, b0 in enumerate(range(0, n_walks, HARMONIC_CHUNK)):
        m = min(HARMONIC_CHUNK, n_walks - b0)
        jobs.append((alpha, pts, y, m, config.seed, key + (c,), config.eps_esc, config.x_cache))
    capped = n_walks == config.harmonic_max_walks and n_walks * p < config.harmonic_hits
    return combine_hitting(ordered_map(_harmonic_job, jobs, config.threads)), capped


def _sup_distance(emp: dict, exact: dict) -> float:
    keys = set(emp) | set(exact)
    return max(abs(emp.get(k, 0.0) - exact.get(k, 0.0)) for k in keys)


def _gluing_exact(state, law, pairs, window: int = 200) -> dict:
    """``mu(x, a)`` on the observed pairs and on all pairs with ``|x - a| <= window``."""
    members = set(state.points)
    keys = set(pairs)
    for a in state.points:
        for x in range(a - window, a + window + 1):
            if x not in members:
                keys.add((x, a))
    out = {}
    for x, a in keys:
        out[(x, a)] = law.pmf(a - x) * state.escape(x) / state.capacity
    return out


def exp_harmonic(config: ExperimentConfig) -> ExperimentResult:
    """Hitting distribution from far starts against the harmonic measure.

    Walks from ``y`` number ``harmonic_hits / P_y(hit)`` (capped at
    ``harmonic_max_walks``), so every start yields about the same number of
    hits.  Walks are split into fixed chunks with their own seed
    sub-streams, which keeps the output independent of ``threads``.
    """
    res = ExperimentResult("exp_harmonic", provenance=_provenance(
        config, "exp_harmonic", chunk=HARMONIC_CHUNK))
    pts = sorted(int(p) for p in config.harmonic_set)
    k_sym = max(abs(p) for p in pts) or 1
    sym = [-k_sym, k_sym]
    for ia, alpha in enumerate(config.alphas):
        law = StepLaw(alpha)
        table = get_table(law, config.x_cache)
        state = solve_equilibrium(table, pts)
        hm = harmonic_measure(state).as_dict()
        sym_state = solve_equilibrium(table, sym)
        prev = None
        for iy, y in enumerate(config.harmonic_starts):
            y = int(y)
            mc, capped = _run_hitting(config, alpha, pts, y, (ia, iy, 0), state)
            nh = max(mc.n_hit, 1)
            emp = mc.hit_distribution
            d_hit = _sup_distance(emp, hm)
            sig = max(math.sqrt(v * (1 - v) / nh) for v in hm.values())
            res.rows.append(ResultRow("exp_harmonic", alpha, y, "hit_sup_distance", d_hit,
                                      max(0.0, d_hit - 3 * sig), d_hit + 3 * sig, mc.n_walks))
            glue = mc.last_point_distribution
            exact = _gluing_exact(state, law, glue)
            d_glue = _sup_distance(glue, exact)
            sig_g = max(math.sqrt(v * (1 - v) / nh) for v in exact.values())
            res.rows.append(ResultRow("exp_harmonic", alpha, y, "gluing_sup_distance", d_glue,
                                      max(0.0, d_glue - 3 * sig_g), d_glue + 3 * sig_g, mc.n_walks))
            p_exact = float(state.hit_probability(np.array([y]))[0])
            lo, hi = mc.hit_interval
            res.rows.append(ResultRow("exp_harmonic", alpha, y, "hit_probability", mc.hit_fraction,
                                      min(lo, mc.hit_fraction), max(hi, mc.hit_fraction), mc.n_walks))
            res.rows.append(ResultRow("exp_harmonic", alpha, y, "hit_probability_exact",
                                      p_exact, p_exact, p_exact, 1))
            res.rows.append(ResultRow("exp_harmonic", alpha, y, "hits", mc.n_hit, mc.n_hit,
                                      mc.n_hit, mc.n_walks))
            if prev is not None:
                d0, s0 = prev
                res.checks.append(Check(f"alpha={alpha} y={y} distance not above previous + 2 sigma",
                                        d_hit - d0, None, 2 * math.hypot(sig, s0)))
            prev = (d_hit, sig)
            if iy == len(config.harmonic_starts) - 1:
                res.checks.append(Check(f"alpha={alpha} y={y} hit sup-distance", d_hit, None, 0.05,
                                        armed=y >= 10**5 and not capped,
                                        note="capped walk budget" if capped else ""))
            # symmetric pair: the split must be (1/2, 1/2)
            ms, _ = _run_hitting(config, alpha, sym, y, (ia, iy, 1), sym_state)
            if ms.n_hit:
                frac = ms.hit_counts.get(sym[0], 0) / ms.n_hit
                se = 0.5 / math.sqrt(ms.n_hit)
                res.rows.append(ResultRow("exp_harmonic", alpha, y, "symmetric_left_fraction", frac,
                                          max(0.0, frac - 3 * se), min(1.0, frac + 3 * se), ms.n_walks))
                res.checks.append(Check(f"alpha={alpha} y={y} symmetric split z-score",
                                        abs(frac - 0.5) / se, None, 3.0))
    return res


# ----------------------------------------------------------------------
# coupling


def _coupling_job(args):
    alpha, n, q_max, D, seed, eps_path, x_cache = args
    law = StepLaw(alpha)
    reps = coupled_runs(alpha, n, q_max, D, seed, eps_path=eps_path,
                        table=get_table(law, x_cache), step_law=law)
    return [r.as_dict() for r in reps]


def exp_coupling(config: ExperimentConfig) -> ExperimentResult:
    """Frequency of interactions between the DLA and its split processes.

    For each run the DLA is grown to ``n`` and the split processes for
    ``q = 1..q_max`` are followed along it.  A run counts as interacting when
    any ``q`` interacts; its truncation error is the largest over ``q``.
    With ``D = "auto"`` the threshold comes from ``M`` estimated on
    ``m_runs`` DLAs with seeds ``seed + 10**6 + i``.  With ``force`` every
    check is reported without pass/fail.
    """
    bad = [a for a in config.alphas if a >= 1 / 3]
    if bad and not config.force:
        raise ValueError(f"the coupling argument needs alpha < 1/3 (got {bad}); "
                         "pass --force to run it anyway for exploration")
    res = ExperimentResult("exp_coupling", provenance=_provenance(
        config, "exp_coupling", forced=bool(config.force)))
    for alpha in config.alphas:
        law = StepLaw(alpha)
        forced = config.force or alpha >= 1 / 3
        freq = {}
        for n in config.coupling_n:
            if config.D == "auto":
                M = estimate_M(alpha, n, config.m_runs, config.seed + M_SEED_OFFSET,
                               p=config.quantile_p, map_fn=_pool_map(config.threads))
                D = auto_D(law, n, M)
                res.rows.append(ResultRow("exp_coupling", alpha, n, "M", M, M, M, config.m_runs))
            else:
                D = int(config.D)
            res.rows.append(ResultRow("exp_coupling", alpha, n, "D", float(D), float(D), float(D), 1))
            q_max = config.q_range(n)
            jobs = [(alpha, n, q_max, D, s, config.eps_path, config.x_cache) for s in config.run_seeds()]
            out = ordered_map(_coupling_job, jobs, config.threads)
            runs = len(out)
            hit = trunc = 0.0
            per_q = np.zeros(q_max, dtype=int)
            over_budget = 0
            for reps in out:
                inter = [r for r in reps if r["first_interaction"] is not None]
                hit += bool(inter)
                trunc += max(r["truncation_error"] for r in reps)
                over_budget += any(r["trajectory_budget_exceeded"] for r in reps)
                for r in inter:
                    per_q[r["q"] - 1] += 1
                for r in reps:
                    res.logs.append(dict(r, alpha=alpha, forced=forced))
            k = int(hit)
            f = k / runs
            ci = stats.binomtest(k, runs).proportion_ci(0.95)
            mean_trunc = trunc / runs
            freq[n] = (f, runs)
            res.rows.append(ResultRow("exp_coupling", alpha, n, "interaction_frequency", f,
                                      float(ci.low), float(ci.high), runs))
            res.rows.append(ResultRow("exp_coupling", alpha, n, "mean_truncation_error", mean_trunc,
                                      mean_trunc, mean_trunc, runs))
            res.rows.append(ResultRow("exp_coupling", alpha, n, "budget_exceeded_runs", over_budget,
                                      over_budget, over_budget, runs))
            for q in range(1, q_max + 1):
                fq = per_q[q - 1] / runs
                ciq = stats.binomtest(int(per_q[q - 1]), runs).proportion_ci(0.95)
                res.rows.append(ResultRow("exp_coupling", alpha, n, f"interaction_frequency_q{q}",
                                          fq, float(ciq.low), float(ciq.high), runs))
            res.checks.append(Check(f"alpha={alpha} n={n} interaction frequency + truncation",
                                    f + mean_trunc, None, 0.1, armed=not forced,
                                    note="forced: reported only" if forced else ""))
        ns = sorted(freq)
        for n0, n1 in zip(ns, ns[1:]):
            (f0, r0), (f1, r1) = freq[n0], freq[n1]
            sig = math.sqrt(max(f0 * (1 - f0), 1 / r0) / r0 + max(f1 * (1 - f1), 1 / r1) / r1)
            res.checks.append(Check(f"alpha={alpha} frequency at n={n1} minus n={n0}",
                                    f1 - f0, None, 2 * sig, armed=not forced))
    return res


class _pool_map:
    """``map`` replacement running on a process pool, order preserved."""

    def __init__(self, threads):
        self.threads = threads

    def __call__(self, fn, items):
        return ordered_map(fn, items, self.threads)


EXPERIMENTS = {
    "scaling": exp_scaling,
    "cantor": exp_cantor,
    "harmonic": exp_harmonic,
    "coupling": exp_coupling,
}
