from __future__ import annotations

import numpy as np
import pytest

from alphadla import solve_equilibrium
from alphadla.hitting import combine_hitting, hgpi_check, mc_hitting, simulate_walks


def test_hit_interval_contains_exact(law05, table05):
    pts = [-3, 0, 7]
    s = solve_equilibrium(table05, pts)
    res = mc_hitting(law05, pts, 10**4, n_walks=200_000, rng=np.random.default_rng(1), state=s)
    exact = float(s.hit_probability([10**4])[0])
    lo, hi = res.hit_interval
    assert lo <= exact <= hi
    assert res.n_hit + res.n_escaped + res.n_unresolved == res.n_walks


def test_return_probability_single_point(law05, table05):
    res = mc_hitting(law05, [0], 0, n_walks=100_000, rng=np.random.default_rng(2), table=table05)
    lo, hi = res.hit_interval
    assert lo <= 1 - 1 / table05.g0 <= hi


def test_hgpi_identity(law05, table05):
    rep = hgpi_check(table05, [0, 5], 37, step_law=law05, n_walks=20_000,
                     rng=np.random.default_rng(3))
    assert rep.max_z() <= 3.0
    assert np.all(rep.pi_hat.sum(axis=1) <= 1.0)
    # a single point: I - Pi is the escape probability
    rep1 = hgpi_check(table05, [0], 4, step_law=law05, n_walks=20_000,
                      rng=np.random.default_rng(4))
    assert rep1.column_z_scores[0] <= 3.0
    assert rep1.w[0] == pytest.approx(1 / table05.g0)


def test_hgpi_rejects_member(law05, table05):
    with pytest.raises(ValueError):
        hgpi_check(table05, [0, 5], 5, step_law=law05, n_walks=1000, rng=np.random.default_rng(0))


def test_determinism_and_pooling(law05, table05):
    s = solve_equilibrium(table05, [0, 3])
    a = mc_hitting(law05, [0, 3], 50, n_walks=5000, rng=np.random.default_rng(9), state=s)
    b = mc_hitting(law05, [0, 3], 50, n_walks=5000, rng=np.random.default_rng(9), state=s)
    assert a.hit_counts == b.hit_counts and a.last_point_counts == b.last_point_counts
    c = mc_hitting(law05, [0, 3], 50, n_walks=5000, rng=np.random.default_rng(10), state=s)
    pooled = combine_hitting([a, c])
    assert pooled.n_walks == 10000 and pooled.n_hit == a.n_hit + c.n_hit
    assert pooled.hit_counts == a.hit_counts + c.hit_counts
    d = mc_hitting(law05, [0, 3], 50, n_walks=1000, rng=np.random.default_rng(1), state=s,
                   eps_esc=1e-3)
    with pytest.raises(ValueError):
        combine_hitting([a, d])


def test_hit_records_previous_site(law05, table05):
    s = solve_equilibrium(table05, [0])
    out = simulate_walks(law05, s, np.full(2000, 10), np.random.default_rng(5))
    hit = out.status == 0
    assert np.all(out.hit_at[hit] == 0) and np.all(out.prev[hit] != 0)
    assert np.all(out.h_stop[out.status == 1] < 1e-4)


def test_wide_sets_rejected(law05, table05):
    s = solve_equilibrium(table05, [0, 2**61])
    with pytest.raises(ValueError):
        simulate_walks(law05, s, [5], np.random.default_rng(0))
