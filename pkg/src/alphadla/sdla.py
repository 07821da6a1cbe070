"""Split DLA and its coupling with DLA.

In the split process two sets grow side by side.  ``S_hat`` starts at
``{0}`` and evolves as a DLA; every activation of ``S_hat`` whose first
step exceeds ``D`` is a split, and at the ``q``-th split the proposed point
``b_q`` founds ``S`` whatever the walk does afterwards.  From then on ``S``
is a DLA of its own.

:func:`coupled_run` grows one DLA and follows, for each ``q``, the split
process that shares its activations and walks.  Walk trajectories are
realised under their conditional law (escape-conditioned for accepted
proposals, hit-conditioned for rejected ones) with an h-transform based on
``h(y) = sum_a G(y - a) w(a)``, and the two interaction events of the
coupling are tested at every event.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dla import Aggregate, EventLog, GluingEvent, Proposal, d_threshold, dla_run, run_header
from . import _kernels
from .green import GreenTable, get_table, green
from .hitting import _sampler
from .potential import DEFAULT_CAP, PotentialState, solve_equilibrium
from .steplaw import StepLaw

__all__ = [
    "CouplingReport",
    "Interaction",
    "SdlaEvent",
    "SdlaState",
    "coupled_run",
    "coupled_runs",
    "estimate_M",
    "median_quantile",
    "sdla_run",
]

S, S_HAT = "S", "S_hat"
EPS_PATH = 1e-4
PATH_BUDGET = 20_000
# coordinates below this use the compiled walk (sums of two stay inside int64)
_KERNEL_LIMIT = 2**58


def _stream(seed: int, *key) -> np.random.Generator:
    """Generator for sub-stream ``key`` of ``seed`` (disjoint from ``PCG64(seed)``)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


# ----------------------------------------------------------------------
# standalone split process


@dataclass
class SdlaEvent(GluingEvent):
    component: str = S_HAT


@dataclass
class SdlaState:
    """State of a ``q``-split DLA.

    ``order`` lists ``(component, point)`` in insertion order; activations
    pick uniformly from it, so before the birth of ``S`` randomness is used
    exactly as in :func:`dla_run` with the same seed.
    """

    step_law: StepLaw
    table: GreenTable
    q: int
    D: int
    S: PotentialState | None = None
    S_hat: PotentialState | None = None
    order: list = field(default_factory=list)
    t: float = 0.0
    split_count: int = 0
    beta_q: float | None = None
    b_q: int | None = None
    zeta_q: float | None = None
    overlaps: int = 0
    cap: int = DEFAULT_CAP

    @property
    def size(self) -> int:
        return len(self.order)

    def component(self, name: str) -> PotentialState | None:
        return self.S if name == S else self.S_hat

    def points(self, name: str) -> list:
        st = self.component(name)
        return [] if st is None else list(st.points)


def _advance(state: SdlaState, rng, n: int, events: list | None) -> None:
    """Run the split process until it holds ``n`` points."""
    law = state.step_law
    rejected = 0
    while state.size < n:
        total = state.size
        state.t += rng.exponential(1.0 / total)
        comp, a = state.order[int(rng.integers(total))]
        step = law.sample_step(rng)
        x = a + step
        big = abs(step) > state.D
        if comp == S_HAT and big:
            state.split_count += 1
            if state.split_count == state.q and state.S is None:
                state.S = solve_equilibrium(state.table, [x], state.cap)
                state.beta_q, state.b_q = state.t, x
                if x in state.S_hat:
                    state.overlaps += 1
                state.order.append((S, x))
                if events is not None:
                    events.append(SdlaEvent(total, state.t, a, x, abs(step), rejected, True,
                                            state.S.capacity, S))
                rejected = 0
                continue
        if comp == S and big and state.zeta_q is None:
            state.zeta_q = state.t
        own = state.component(comp)
        if x in own:
            rejected += 1
            continue
        e = own.escape(x)
        if not rng.random() < e:
            rejected += 1
            continue
        own.add(x)
        other = state.component(S if comp == S_HAT else S_HAT)
        if other is not None and x in other:
            state.overlaps += 1
        state.order.append((comp, x))
        if events is not None:
            events.append(SdlaEvent(total, state.t, a, x, abs(step), rejected, bool(big),
                                    own.capacity, comp))
        rejected = 0


def sdla_run(alpha: float, n: int, q: int, D: int, seed: int, *, table: GreenTable | None = None,
             step_law: StepLaw | None = None, cap: int | None = None):
    """Simulate the ``q``-split DLA from ``S_hat = {0}`` until ``|S| + |S_hat| = n``.

    Returns
    -------
    state : SdlaState
    log : EventLog
        Events carry a ``component`` field; the header records ``q`` and ``D``.
    """
    if q < 1:
        raise ValueError("q must be at least 1")
    if D < 0:
        raise ValueError("D must be nonnegative")
    step_law = step_law if step_law is not None else StepLaw(alpha)
    table = table if table is not None else get_table(step_law)
    cap = cap if cap is not None else max(DEFAULT_CAP, n)
    state = SdlaState(step_law, table, q, D, cap=cap)
    state.S_hat = solve_equilibrium(table, [0], cap)
    state.order.append((S_HAT, 0))
    log = EventLog(run_header(step_law, table, seed, n_target=n, q=q, D=D, process="sdla"))
    rng = np.random.Generator(np.random.PCG64(seed))
    _advance(state, rng, n, log.events)
    log.snapshots.append({"n": state.size, "t": state.t, "split_count": state.split_count,
                          "beta_q": state.beta_q, "b_q": state.b_q, "zeta_q": state.zeta_q})
    return state, log


# ----------------------------------------------------------------------
# threshold D


def median_quantile(values, p: float) -> float:
    """Empirical ``sup{t : fraction of values below t < p}``."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ValueError("no values")
    k = math.ceil(p * x.size - 1e-12)
    return float(x[max(k, 1) - 1])


def inverse_capacity_sum(log: EventLog, m: int, g0: float) -> float:
    """``sum_{i<=m} 1/capa(A_{tau(i)})`` read off a DLA log."""
    caps = [1.0 / g0] + [ev.capacity for ev in log.events]
    if len(caps) < m:
        raise ValueError("log shorter than m")
    return math.fsum(1.0 / c for c in caps[:m])


def estimate_M(alpha: float, n: int, runs: int, seed: int, *, p: float = 5 / 6,
               table: GreenTable | None = None, step_law: StepLaw | None = None,
               map_fn=map) -> float:
    """Empirical ``p``-quantile of ``sum_{i <= m} 1/capa(A_{tau(i)})`` with ``m = n/log n``.

    Run ``i`` uses seed ``seed + i``.  ``map_fn`` lets the caller fan the
    runs out to a worker pool; results are consumed in run order.
    """
    if runs < 20:
        raise ValueError("estimate_M needs at least 20 runs")
    step_law = step_law if step_law is not None else StepLaw(alpha)
    table = table if table is not None else get_table(step_law)
    m = max(1, int(n / math.log(n)))
    sums = list(map_fn(_inverse_sum_job, [(alpha, m, seed + i) for i in range(runs)]))
    return median_quantile(sums, p)


def _inverse_sum_job(args) -> float:
    alpha, m, seed = args
    law = StepLaw(alpha)
    table = get_table(law)
    log = dla_run(alpha, m, seed, table=table, step_law=law)
    return inverse_capacity_sum(log, m, table.g0)


def auto_D(step_law: StepLaw, n: int, M: float) -> int:
    return d_threshold(n, M, step_law.tail_constant, step_law.alpha)


# ----------------------------------------------------------------------
# trajectory realisation


def _positions(law: StepLaw, rng, start: int, size: int):
    """Partial sums ``start + X_1 + ... + X_k`` for ``k = 1..size`` (int64 or object)."""
    steps, over = law.sample_batch(rng, size)
    if not over.any():
        pos = np.cumsum(steps)
        if abs(start) < 2**61 and np.max(np.abs(pos)) < 2**61:
            return pos + start
    wide = law.sample_steps(rng, size) if over.any() else steps.tolist()
    out, acc = [], start
    for s in wide:
        acc += s
        out.append(acc)
    return np.array(out, dtype=object)


def _as_queries(ys):
    ys = list(ys)
    if all(-2**62 < y < 2**62 for y in ys):
        return np.asarray(ys, dtype=np.int64)
    return ys


@dataclass
class PathResult:
    points: list
    truncation: float
    exhausted: bool


def escape_path(pot: PotentialState, law: StepLaw, x: int, rng, *, eps: float = EPS_PATH,
                budget: int = PATH_BUDGET) -> PathResult:
    """Walk from ``x`` (outside ``A``) conditioned never to visit ``A``.

    Each step proposes ``y' = y + X`` and accepts with probability
    ``E_A(y')`` (zero inside ``A``), which realises the transition
    ``p(y, y') E_A(y') / E_A(y)``.  The path is cut once ``h(y) < eps``;
    ``h`` at the cut is returned as the truncation mass.
    """
    if pot._narrow and abs(x) < _KERNEL_LIMIT and np.max(np.abs(pot._pos)) < _KERNEL_LIMIT:
        return _escape_path_compiled(pot, law, x, rng, eps, budget)
    y = x
    pts = [x]
    h = float(pot.hit_probability(_as_queries([y]))[0])
    steps = 0
    while h >= eps:
        if steps >= budget:
            return PathResult(pts, h, True)
        batch = 16
        while True:
            cand = (y + np.asarray(law.sample_steps(rng, batch), dtype=object)).tolist()
            inside = np.array([c in pot for c in cand])
            hc = pot.hit_probability(_as_queries(cand))
            u = rng.random(batch)
            ok = np.flatnonzero(~inside & (u < 1.0 - hc))
            if ok.size:
                i = int(ok[0])
                y, h = cand[i], float(hc[i])
                break
        pts.append(y)
        steps += 1
    return PathResult(pts, h, False)


def _escape_path_compiled(pot, law, x, rng, eps, budget) -> PathResult:
    table = pot.table
    far_h = pot.capacity * green(table, _kernels.FAR)
    path, h, exhausted = _kernels.escape_walk(
        int(x), pot._pos, np.ascontiguousarray(pot.w), table.cache, float(table.asym_coeff),
        table.alpha - 1.0, *_sampler(law).args(), float(eps), float(far_h), int(budget),
        _kernels.rng_state(rng))
    return PathResult(path.tolist(), float(h), bool(exhausted))


def hit_point(pot: PotentialState, law: StepLaw, x: int, rng, *, budget: int = PATH_BUDGET):
    """First point of ``A`` visited by a walk from ``x`` conditioned to visit ``A``.

    Returns ``(point, exhausted)``; ``x`` itself counts if it is in ``A``.
    """
    if x in pot:
        return x, False
    y = x
    h = float(pot.hit_probability(_as_queries([y]))[0])
    for _ in range(budget):
        batch = int(min(4096, max(16, 2.0 / max(h, 1e-12))))
        while True:
            cand = (y + np.asarray(law.sample_steps(rng, batch), dtype=object)).tolist()
            inside = np.array([c in pot for c in cand])
            hc = np.ones(batch)
            if not inside.all():
                out = np.flatnonzero(~inside)
                hc[out] = pot.hit_probability(_as_queries([cand[i] for i in out]))
            ok = np.flatnonzero(inside | (rng.random(batch) < hc))
            if ok.size:
                i = int(ok[0])
                break
        if inside[i]:
            return cand[i], False
        y, h = cand[i], float(hc[i])
    return None, True


def continuation_visits(pot: PotentialState, law: StepLaw, z: int, rng, *, eps: float = EPS_PATH,
                        budget: int = PATH_BUDGET):
    """Unconditioned walk from ``z`` until ``h < eps``; returns visited members of ``A``.

    Returns ``(visits, truncation, exhausted)``.
    """
    visits = []
    y = z
    done = 0
    while done < budget:
        pos = _positions(law, rng, y, 64)
        lst = pos.tolist()
        inside = np.array([p in pot for p in lst])
        h = np.ones(len(lst))
        out = np.flatnonzero(~inside)
        if out.size:
            h[out] = pot.hit_probability(_as_queries([lst[i] for i in out]))
        stop = np.flatnonzero(~inside & (h < eps))
        end = int(stop[0]) if stop.size else len(lst) - 1
        visits.extend(lst[i] for i in np.flatnonzero(inside[:end + 1]))
        if stop.size:
            return visits, float(h[end]), False
        y = lst[-1]
        done += len(lst)
    return visits, float(h[-1]), True


# ----------------------------------------------------------------------
# coupling


@dataclass
class Interaction:
    t: float
    n: int
    kind: str  # "T_cap_S_hat" or "T_hat_cap_S"
    point: int | None


@dataclass
class CouplingReport:
    """Outcome of the DLA / ``q``-split coupling for one run and one ``q``."""

    seed: int
    n: int
    q: int
    D: int
    equal_at_tau: bool
    first_interaction: Interaction | None
    trajectory_budget_exceeded: bool
    truncation_error: float
    beta_q: float | None = None
    zeta_q: float | None = None
    b_q: int | None = None
    size_S: int = 0
    colour_consistent: bool = True
    stream_ids: list = field(default_factory=list)
    diverged_sizes: tuple | None = None

    def as_dict(self) -> dict:
        d = asdict(self)
        d["first_interaction"] = None if self.first_interaction is None else asdict(self.first_interaction)
        return d


class _Track:
    """Per-``q`` bookkeeping inside :func:`coupled_runs`."""

    def __init__(self, q):
        self.q = q
        self.S = None  # set of S^q points once born
        self.T = set()
        self.T_hat = None
        self.beta = self.zeta = self.b = None
        self.interaction = None
        self.colour_ok = True
        self.diverged_state = None

    @property
    def born(self):
        return self.S is not None

    @property
    def active(self):
        return self.interaction is None


def coupled_runs(alpha: float, n: int, q_max: int, D: int, seed: int, *, eps_path: float = EPS_PATH,
                 budget: int = PATH_BUDGET, continue_diverged: bool = False,
                 table: GreenTable | None = None, step_law: StepLaw | None = None,
                 cap: int | None = None) -> list:
    """Grow one DLA to ``n`` points and follow the ``q``-split process for ``q = 1..q_max``.

    The DLA uses ``PCG64(seed)`` exactly as :func:`dla_run`; trajectories
    draw from sub-stream ``(0,)`` of the seed, and a split process that
    separates from the DLA continues (if ``continue_diverged``) on
    sub-stream ``(q, 1)``.
    """
    step_law = step_law if step_law is not None else StepLaw(alpha)
    table = table if table is not None else get_table(step_law)
    cap = cap if cap is not None else max(DEFAULT_CAP, n)
    agg = Aggregate(step_law, table, seed=seed, cap=cap, split_threshold=D)
    traj_rng = _stream(seed, 0)
    tracks = [_Track(q) for q in range(1, q_max + 1)]
    colour = {0: 0}
    T_all = {0}
    trunc = 0.0
    trunc_at = {}
    exhausted = False

    def fire(tr, kind, point):
        tr.interaction = Interaction(agg.t, agg.n, kind, point)
        trunc_at[tr.q] = trunc

    while agg.n < n:
        prop: Proposal = agg.activate()
        big = abs(prop.step) > D
        k = agg.split_count if big else None
        live = [tr for tr in tracks if tr.active]
        a, x = prop.parent, prop.child

        if prop.accepted:
            path = escape_path(agg.potential, step_law, x, traj_rng, eps=eps_path, budget=budget)
            trunc += path.truncation
            exhausted |= path.exhausted
            pts = path.points
            for tr in live:
                if not tr.born:
                    if k == tr.q:
                        tr.S = {x}
                        tr.beta, tr.b = prop.t, x
                        tr.T_hat = set(T_all)
                        tr.T = set(pts)
                        if x in tr.T_hat:
                            fire(tr, "T_hat_cap_S", x)
                    continue
                if a in tr.S:
                    if big and tr.zeta is None:
                        tr.zeta = prop.t
                    tr.S.add(x)
                    tr.T.add(a)
                    tr.T.update(pts)
                    if x in tr.T_hat:
                        fire(tr, "T_hat_cap_S", x)
                else:
                    tr.T_hat.add(a)
                    tr.T_hat.update(pts)
                    if x in tr.T:
                        fire(tr, "T_cap_S_hat", x)
            T_all.add(a)
            T_all.update(pts)
            colour[x] = k if big else colour[a]
            agg.glue(prop)
            for tr in tracks:
                if tr.born and tr.zeta is None and tr.colour_ok and tr.active:
                    tr.colour_ok = tr.S == {p for p, c in colour.items() if c == tr.q}
            continue

        # rejected proposal
        needs_walk = []
        for tr in live:
            if not tr.born:
                if k == tr.q:
                    tr.S = {x}
                    tr.beta, tr.b = prop.t, x
                    tr.T_hat = set(T_all)
                    fire(tr, "T_cap_S_hat", x)
                continue
            own_S = a in tr.S
            if own_S and big and tr.zeta is None:
                tr.zeta = prop.t
            needs_walk.append((tr, own_S))
        if not needs_walk:
            continue
        z, ex = hit_point(agg.potential, step_law, x, traj_rng, budget=budget)
        exhausted |= ex
        if z is None:
            continue
        crossing = [(tr, own_S) for tr, own_S in needs_walk if (z in tr.S) != own_S]
        if not crossing:
            continue
        visits, tmass, ex = continuation_visits(agg.potential, step_law, z, traj_rng,
                                                eps=eps_path, budget=budget)
        trunc += tmass
        exhausted |= ex
        for tr, own_S in crossing:
            if not any((v in tr.S) == own_S for v in visits):
                fire(tr, "T_cap_S_hat" if own_S else "T_hat_cap_S", z)

    reports = []
    for tr in tracks:
        t_err = trunc_at.get(tr.q, trunc)
        rep = CouplingReport(
            seed=seed, n=n, q=tr.q, D=D, equal_at_tau=tr.interaction is None,
            first_interaction=tr.interaction, trajectory_budget_exceeded=exhausted,
            truncation_error=t_err, beta_q=tr.beta, zeta_q=tr.zeta, b_q=tr.b,
            size_S=len(tr.S) if tr.S else 0, colour_consistent=tr.colour_ok,
            stream_ids=[[seed], [seed, 0]])
        if continue_diverged and tr.interaction is not None:
            rep.diverged_sizes = _continue_split(step_law, table, agg, tr, n, D, seed, cap)
            rep.stream_ids.append([seed, tr.q, 1])
        reports.append(rep)
    return reports


def _continue_split(step_law, table, agg, tr, n, D, seed, cap):
    """Finish a separated split process on its own stream; returns ``(|S|, |S_hat|)``.

    The split process restarts from the coloured decomposition of the DLA at
    the end of the run, restricted to the points present at separation.
    """
    n_sep = tr.interaction.n
    pts = agg.points[:n_sep]
    S_pts = [p for p in pts if p in tr.S]
    if tr.b is not None and tr.b not in S_pts:
        S_pts.append(tr.b)
    H_pts = [p for p in pts if p not in tr.S]
    state = SdlaState(step_law, table, tr.q, D, cap=cap)
    state.S = solve_equilibrium(table, S_pts, cap) if S_pts else None
    state.S_hat = solve_equilibrium(table, H_pts, cap)
    state.order = [(S if p in tr.S else S_HAT, p) for p in pts]
    if tr.b is not None and tr.b not in pts:
        state.order.append((S, tr.b))
    state.t = tr.interaction.t
    state.split_count = tr.q
    state.beta_q, state.b_q, state.zeta_q = tr.beta, tr.b, tr.zeta
    _advance(state, _stream(seed, tr.q, 1), n, None)
    return (len(state.S.points) if state.S else 0, len(state.S_hat.points))


def coupled_run(alpha: float, n: int, q: int, D: int, seed: int, **kw) -> CouplingReport:
    """Coupling report for a single ``q``: ``coupled_runs(..., q_max=q)[q - 1]``.

    Walks are realised only when some followed ``q`` needs them, so the
    trajectory stream (not the DLA) depends on ``q_max``; the law does not.
    """
    return coupled_runs(alpha, n, q, D, seed, **kw)[q - 1]
