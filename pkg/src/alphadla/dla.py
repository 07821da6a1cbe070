"""Exact simulation of long-range DLA driven by the gluing measure.

Each point of the aggregate carries a rate-1 Poisson clock.  When a clock
rings at ``a`` the walk's first step ``x = a + X`` is proposed; the proposal
is rejected if ``x`` is already in ``A`` and otherwise accepted with
probability ``E_A(x)``.  Conditioned on success, ``(x, a)`` has law
``pmf(a - x) E_A(x) / capa(A)``, and successes arrive at total rate
``capa(A)``, so the accepted points form the continuous-time DLA.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .green import GreenTable, get_table
from .potential import DEFAULT_CAP, PotentialState, solve_equilibrium
from .steplaw import StepLaw

__all__ = [
    "Aggregate",
    "EventLog",
    "GluingEvent",
    "LOG_FORMAT_VERSION",
    "Proposal",
    "d_threshold",
    "dla_run",
    "dla_step",
    "replay",
]

LOG_FORMAT_VERSION = 1


def d_threshold(n: int, M: float, C1: float, alpha: float) -> int:
    """Large-jump threshold ``D = (6 C1 n M / log n) ** (1 / alpha)``, rounded down."""
    if n < 2:
        raise ValueError("n must be at least 2")
    log_d = (math.log(6.0 * C1 * n * M) - math.log(math.log(n))) / alpha
    if log_d < 700:
        return max(1, int(math.exp(log_d)))
    # exact integer part is irrelevant at this size; keep ~15 significant digits
    e = int(log_d / math.log(2)) - 52
    return int(round(math.exp(log_d - e * math.log(2)))) << e


@dataclass
class GluingEvent:
    """One accepted particle.  ``capacity`` is the capacity after gluing."""

    n_before: int
    t: float
    parent: int
    child: int
    step_size: int
    rejected_proposals: int
    split_flag: bool
    capacity: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class Proposal:
    """A single activation: point ``parent`` proposes ``child = parent + step``."""

    t: float
    parent: int
    step: int
    child: int
    accepted: bool
    escape: float  # E_A(child); 0 when child is in A


class Aggregate:
    """DLA state: the point set with its equilibrium data, clock and generator.

    Parameters
    ----------
    step_law : StepLaw
    table : GreenTable, optional
        Defaults to the cached table for ``step_law``.
    rng : numpy Generator, optional
        Defaults to ``PCG64(seed)``.
    points : iterable of int, optional
        Initial set, ``{0}`` by default.
    split_threshold : int, optional
        ``D``; when set, gluing events record ``step_size > D`` and the
        aggregate counts activations whose first step exceeds ``D``.
    """

    def __init__(self, step_law: StepLaw, table: GreenTable | None = None, rng=None, *,
                 seed: int | None = None, points=(0,), cap: int = DEFAULT_CAP,
                 split_threshold: int | None = None):
        self.step_law = step_law
        self.table = table if table is not None else get_table(step_law)
        if rng is None:
            rng = np.random.Generator(np.random.PCG64(seed))
        self.rng = rng
        self.potential: PotentialState = solve_equilibrium(self.table, list(points), cap)
        pts = self.potential.points
        self.lo, self.hi = min(pts), max(pts)
        self.t = 0.0
        self.split_threshold = split_threshold
        self.split_count = 0
        self.proposals = 0

    @property
    def n(self) -> int:
        return self.potential.n

    @property
    def points(self) -> list:
        return self.potential.points

    @property
    def diameter(self) -> int:
        return self.hi - self.lo

    @property
    def capacity(self) -> float:
        return self.potential.capacity

    def __contains__(self, x) -> bool:
        return x in self.potential

    def activate(self) -> Proposal:
        """Advance the clock to the next activation and decide its fate."""
        rng = self.rng
        n = self.n
        self.t += rng.exponential(1.0 / n)
        a = self.points[int(rng.integers(n))]
        step = self.step_law.sample_step(rng)
        x = a + step
        self.proposals += 1
        if self.split_threshold is not None and abs(step) > self.split_threshold:
            self.split_count += 1
        if x in self.potential:
            return Proposal(self.t, a, step, x, False, 0.0)
        e = self.potential.escape(x)
        return Proposal(self.t, a, step, x, bool(rng.random() < e), e)

    def glue(self, prop: Proposal, rejected: int = 0) -> GluingEvent:
        """Add an accepted proposal to the set."""
        n_before = self.n
        self.potential.add(prop.child)
        self.lo = min(self.lo, prop.child)
        self.hi = max(self.hi, prop.child)
        size = abs(prop.step)
        flag = self.split_threshold is not None and size > self.split_threshold
        return GluingEvent(n_before, self.t, prop.parent, prop.child, size, rejected,
                           bool(flag), self.capacity)

    def next_accepted(self, on_proposal=None) -> tuple:
        """Activate until a proposal is accepted; return ``(proposal, n_rejected)``.

        ``on_proposal`` is called with every proposal, accepted or not.
        """
        rejected = 0
        while True:
            prop = self.activate()
            if on_proposal is not None:
                on_proposal(prop)
            if prop.accepted:
                return prop, rejected
            rejected += 1

    def step(self, on_proposal=None) -> GluingEvent:
        prop, rejected = self.next_accepted(on_proposal)
        return self.glue(prop, rejected)

    def snapshot(self) -> dict:
        return {"n": self.n, "t": self.t, "diameter": self.diameter, "capacity": self.capacity}


def dla_step(agg: Aggregate) -> GluingEvent:
    """Grow ``agg`` by one particle and return the event."""
    return agg.step()


@dataclass
class EventLog:
    """Header, gluing events and geometric snapshots of one run."""

    header: dict
    events: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    def lines(self):
        yield json.dumps(dict(self.header, kind="header"), sort_keys=True)
        snaps = iter(self.snapshots)
        snap = next(snaps, None)
        # snapshots are interleaved right after the event that reaches their size
        while snap is not None and snap["n"] <= 1:
            yield json.dumps(dict(snap, kind="snapshot"), sort_keys=True)
            snap = next(snaps, None)
        for ev in self.events:
            yield json.dumps(dict(ev.as_dict(), kind="event"), sort_keys=True)
            while snap is not None and snap["n"] <= ev.n_before + 1:
                yield json.dumps(dict(snap, kind="snapshot"), sort_keys=True)
                snap = next(snaps, None)
        while snap is not None:
            yield json.dumps(dict(snap, kind="snapshot"), sort_keys=True)
            snap = next(snaps, None)

    def dumps(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "EventLog":
        header, events, snaps = None, [], []
        for i, line in enumerate(text.splitlines()):
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("kind", None)
            if i == 0:
                if kind != "header":
                    raise ValueError("event log must start with a header line")
                header = rec
            elif kind == "event":
                events.append(GluingEvent(**rec))
            elif kind == "snapshot":
                snaps.append(rec)
            else:
                raise ValueError(f"line {i + 1}: unknown record kind {kind!r}")
        if header is None:
            raise ValueError("empty event log")
        if header.get("version") != LOG_FORMAT_VERSION:
            raise ValueError(f"unsupported log version {header.get('version')}")
        return cls(header, events, snaps)

    @classmethod
    def load(cls, path) -> "EventLog":
        with open(path) as fh:
            return cls.loads(fh.read())

    def truncated(self, n_events: int) -> "EventLog":
        """The log of the same run stopped after ``n_events`` gluings."""
        n = n_events + 1
        return EventLog(dict(self.header), self.events[:n_events],
                        [s for s in self.snapshots if s["n"] <= n])

    @property
    def final_size(self) -> int:
        return len(self.events) + 1


def _is_snapshot_size(n: int, base: int) -> bool:
    while n % base == 0:
        n //= base
    return n == 1


def run_header(step_law: StepLaw, table: GreenTable, seed, **extra) -> dict:
    return dict(version=LOG_FORMAT_VERSION, alpha=step_law.alpha, seed=seed,
                step_law=step_law.params(), green_fingerprint=table.fingerprint(), **extra)


def dla_run(alpha: float, n_target: int, seed: int, *, split_threshold: int | None = None,
            snapshot_base: int = 2, table: GreenTable | None = None,
            step_law: StepLaw | None = None, cap: int | None = None) -> EventLog:
    """Grow a DLA from ``{0}`` to ``n_target`` points.

    Snapshots ``(n, t, diameter, capacity)`` are taken at ``n = base**k``.
    """
    step_law = step_law if step_law is not None else StepLaw(alpha)
    table = table if table is not None else get_table(step_law)
    cap = cap if cap is not None else max(DEFAULT_CAP, n_target)
    if n_target < 1 or n_target > cap:
        raise ValueError(f"n_target must lie in [1, {cap}]")
    if snapshot_base < 2:
        raise ValueError("snapshot_base must be at least 2")
    agg = Aggregate(step_law, table, seed=seed, cap=cap, split_threshold=split_threshold)
    log = EventLog(run_header(step_law, table, seed, n_target=n_target,
                              split_threshold=split_threshold, snapshot_base=snapshot_base))
    log.snapshots.append(agg.snapshot())
    while agg.n < n_target:
        log.events.append(agg.step())
        if _is_snapshot_size(agg.n, snapshot_base):
            log.snapshots.append(agg.snapshot())
    return log


def replay(log: EventLog, table: GreenTable | None = None, *, rtol: float = 1e-7) -> Aggregate:
    """Rebuild the final aggregate of ``log`` from its events alone.

    The capacity is recomputed from scratch (fresh factorization) and must
    agree with the logged value to ``rtol``.
    """
    hdr = log.header
    law = StepLaw(hdr["alpha"], hdr["step_law"]["table_cutoff"])
    table = table if table is not None else get_table(law)
    if table.fingerprint() != hdr["green_fingerprint"]:
        raise ValueError("Green table fingerprint differs from the one in the log")
    pts = [0]
    seen = {0}
    for i, ev in enumerate(log.events):
        if ev.n_before != len(pts):
            raise ValueError(f"event {i}: n_before {ev.n_before} but {len(pts)} points")
        if ev.parent not in seen or ev.child in seen:
            raise ValueError(f"event {i}: inconsistent parent/child")
        pts.append(ev.child)
        seen.add(ev.child)
    cap = max(DEFAULT_CAP, len(pts))
    agg = Aggregate(law, table, seed=hdr.get("seed"), points=pts, cap=cap,
                    split_threshold=hdr.get("split_threshold"))
    if log.events:
        agg.t = log.events[-1].t
        logged = log.events[-1].capacity
        if abs(agg.capacity - logged) > rtol * logged:
            raise ValueError(f"replayed capacity {agg.capacity!r} differs from logged {logged!r}")
    return agg
