from __future__ import annotations

import json
import math

import numpy as np
import pytest
from scipy import stats

from alphadla import Aggregate, dla_run
from alphadla.sdla import (S, S_HAT, CouplingReport, auto_D, coupled_run, coupled_runs,
                           estimate_M, median_quantile, sdla_run)


def _core(ev):
    d = ev.as_dict()
    d.pop("component", None)
    return json.dumps(d, sort_keys=True)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_prefix_matches_dla(table05, law05, seed):
    D = 3000
    state, log = sdla_run(0.5, 150, 1, D, seed, table=table05, step_law=law05)
    ref = dla_run(0.5, 150, seed, split_threshold=D, table=table05, step_law=law05)
    assert state.beta_q is not None
    before = [e for e in log.events if e.t < state.beta_q]
    assert [_core(e) for e in before] == [_core(e) for e in ref.events[:len(before)]]
    assert all(e.component == S_HAT for e in before)


def test_degenerate_threshold_births_immediately(table05, law05):
    state, log = sdla_run(0.5, 10, 1, 0, 4, table=table05, step_law=law05)
    first = log.events[0]
    assert first.component == S and state.b_q == first.child
    assert state.beta_q == first.t and state.split_count >= 1
    assert state.b_q in state.S


def test_components_disjoint_and_sized(table05, law05):
    for seed in range(8):
        state, log = sdla_run(0.5, 100, 1, 2000, seed, table=table05, step_law=law05)
        s = set(state.points(S))
        h = set(state.points(S_HAT))
        assert not s & h and state.overlaps == 0
        assert len(s) + len(h) == 100
        assert (state.S is None) == (state.beta_q is None) == (state.split_count < 1)
        if state.zeta_q is not None:
            assert state.zeta_q > state.beta_q


def test_birth_is_unconditional(table05, law05):
    # with D = 0 the q-th activation founds S; replaying the same activations
    # through a DLA shows births on proposals the DLA itself rejected
    q, rejected_births = 3, 0
    for seed in range(40):
        state, _ = sdla_run(0.5, 6, q, 0, seed, table=table05, step_law=law05)
        agg = Aggregate(law05, table05, seed=seed)
        for _ in range(q):
            prop = agg.activate()
            if prop.accepted and _ < q - 1:
                agg.glue(prop)
        assert prop.child == state.b_q and prop.t == state.beta_q
        rejected_births += not prop.accepted
    assert rejected_births > 0


def test_split_free_start(law025, table025):
    # P(no split before min(2M, tau(n/log n))) >= 1/2 with D from the M quantile
    n = 256
    M = estimate_M(0.25, n, 50, 1000)
    D = auto_D(law025, n, M)
    m = int(n / math.log(n))
    clean = 0
    for seed in range(50):
        agg = Aggregate(law025, table025, seed=seed, split_threshold=D)
        first = []
        agg_split = lambda p: first.append(p.t) if abs(p.step) > D and not first else None
        while agg.n < m:
            agg.step(agg_split)
        horizon = min(2 * M, agg.t)
        clean += not first or first[0] > horizon
    assert clean >= 25


def test_estimate_M_properties(law025):
    n = 512
    m = int(n / math.log(n))
    M = estimate_M(0.25, n, 20, 7)
    assert M >= math.fsum(1 / i for i in range(1, m + 1))
    D = auto_D(law025, n, M)
    assert D / n**4 > 1.0
    with pytest.raises(ValueError):
        estimate_M(0.25, n, 5, 0)


def test_median_quantile():
    v = np.arange(1, 13, dtype=float)
    assert median_quantile(v, 5 / 6) == 10.0
    assert median_quantile(2 * v, 5 / 6) == 20.0
    assert median_quantile([3.0], 0.5) == 3.0
    with pytest.raises(ValueError):
        median_quantile([], 0.5)


def test_coupled_runs_bookkeeping(table05, law05):
    reps = coupled_runs(0.5, 60, 4, 500, 3, table=table05, step_law=law05, continue_diverged=True)
    assert [r.q for r in reps] == [1, 2, 3, 4]
    for r in reps:
        assert isinstance(r, CouplingReport)
        assert r.equal_at_tau == (r.first_interaction is None)
        assert r.truncation_error >= 0
        assert r.stream_ids[:2] == [[3], [3, 0]]
        if r.beta_q is None:
            assert r.size_S == 0 and r.first_interaction is None
        if r.first_interaction is not None:
            assert r.first_interaction.kind in ("T_cap_S_hat", "T_hat_cap_S")
            assert r.stream_ids[-1] == [3, r.q, 1]
            assert sum(r.diverged_sizes) == 60
        json.dumps(r.as_dict())
    single = coupled_run(0.5, 60, 2, 500, 3, table=table05, step_law=law05)
    pair = coupled_runs(0.5, 60, 2, 500, 3, table=table05, step_law=law05)
    assert single.as_dict() == pair[1].as_dict()


def test_coupling_colours_consistent(table025, law025):
    for seed in range(3):
        for r in coupled_runs(0.25, 128, 6, 10**9, seed, table=table025, step_law=law025):
            if r.equal_at_tau:
                assert r.colour_consistent


def test_birth_relative_laws_agree(table05, law05):
    # |S| a fixed time after birth: same law for q = 1 and q = 2
    D, dt = 300, 1.5
    sizes = {1: [], 2: []}
    for q in (1, 2):
        for seed in range(60):
            state, log = sdla_run(0.5, 60, q, D, seed, table=table05, step_law=law05)
            if state.beta_q is None:
                continue
            t_end = state.beta_q + dt
            if log.events[-1].t < t_end:
                continue
            sizes[q].append(sum(e.component == S and e.t <= t_end for e in log.events))
    assert min(len(v) for v in sizes.values()) >= 20
    assert stats.ks_2samp(sizes[1], sizes[2]).pvalue > 0.01


def test_bad_arguments(table05):
    with pytest.raises(ValueError):
        sdla_run(0.5, 10, 0, 5, 0, table=table05)
    with pytest.raises(ValueError):
        sdla_run(0.5, 10, 1, -1, 0, table=table05)
