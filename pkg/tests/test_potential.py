from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alphadla import (StepLaw, cantor_set, get_table, gluing_measure, green, harmonic_measure,
                      progression_set, solve_equilibrium)
from alphadla.potential import NumericalBreachError, escape_outside, extend, green_between


def test_single_point(table05):
    s = solve_equilibrium(table05, [0])
    assert s.w[0] == pytest.approx(1 / table05.g0, rel=1e-14)
    assert s.capacity == pytest.approx(1 / table05.g0, rel=1e-14)


@pytest.mark.parametrize("d", [1, 7, 1000, 10**7])
def test_two_points_closed_form(table05, d):
    s = solve_equilibrium(table05, [0, d])
    w = 1 / (table05.g0 + green(table05, d))
    assert np.allclose(s.w, [w, w], rtol=1e-13)
    assert s.capacity == pytest.approx(2 * w, rel=1e-13)


def test_extend_matches_resolve(table05):
    for d in (1, 3, 40, 5000, 2**70):
        s1, delta = extend(solve_equilibrium(table05, [0]), d)
        s2 = solve_equilibrium(table05, [0, d])
        assert np.allclose(s1.w, s2.w, rtol=0, atol=1e-10)
        assert delta == pytest.approx(s2.capacity - 1 / table05.g0, abs=1e-12)


def test_capacity_increment_bounds(table025):
    rng = np.random.default_rng(0)
    for _ in range(50):
        pts = list(dict.fromkeys(rng.integers(-200, 200, size=20).tolist()))
        s = solve_equilibrium(table025, pts)
        x = int(rng.integers(-400, 400))
        while x in s:
            x += 1
        e = escape_outside(s, x)
        new, delta = extend(s, x)
        e2 = float(new.w[-1])
        assert abs(delta - e * e2) <= 1e-8 * new.capacity
        assert e2**2 - 1e-12 <= delta <= e**2 + 1e-12
        assert delta > 0


def test_incremental_growth_stays_exact(table05):
    rng = np.random.default_rng(1)
    s = solve_equilibrium(table05, [0], cap=600)
    while s.n < 600:
        x = int(rng.integers(-10**6, 10**6))
        if x not in s:
            s.add(x)
    fresh = solve_equilibrium(table05, s.points, cap=600)
    assert s.refactor_count >= 2
    assert np.max(np.abs(s.w - fresh.w)) < 1e-9
    assert s.verify() < 1e-9


def test_wide_coordinates(table05):
    pts = [0, 2**80, -(2**75), 12]
    s = solve_equilibrium(table05, pts)
    assert s.verify() < 1e-12
    # the three clusters barely interact
    near = solve_equilibrium(table05, [0, 12]).capacity
    assert s.capacity == pytest.approx(2 / table05.g0 + near, rel=1e-3)
    assert 0 < escape_outside(s, 2**80 + 1) < 1


def test_invariants_and_errors(table05):
    s = solve_equilibrium(table05, [-3, 0, 7])
    assert np.all((s.w > 0) & (s.w <= 1))
    assert 1 / table05.g0 <= s.capacity <= 3
    assert np.allclose(s.hit_probability([-3, 0, 7]), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        escape_outside(s, 0)
    with pytest.raises(ValueError):
        solve_equilibrium(table05, [1, 1])
    with pytest.raises(ValueError):
        solve_equilibrium(table05, list(range(10)), cap=5)
    with pytest.raises(ValueError):
        extend(s, 7)


def test_clamping_policy(table05):
    s = solve_equilibrium(table05, [0, 2])
    assert s._clamp(-1e-10) == 0.0 and s.clamp_count == 1
    with pytest.raises(NumericalBreachError):
        s._clamp(-1e-6)


def test_escape_monotone_in_set(table025):
    s = solve_equilibrium(table025, [0, 10])
    e0 = escape_outside(s, 33)
    for y in (5, -20, 1000):
        s, _ = extend(s, y)
        e1 = escape_outside(s, 33)
        assert e1 <= e0
        e0 = e1


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_far_escape_bounded_below(alpha):
    table = get_table(StepLaw(alpha))
    s = solve_equilibrium(table, list(range(51)))
    # distance at least one diameter beyond the right end
    assert min(escape_outside(s, x) for x in (100, 200, 10**4)) > 0.3


def test_harmonic_measure(table05):
    hm = harmonic_measure(solve_equilibrium(table05, [-9, 9]))
    assert np.allclose(hm.weights, 0.5, atol=1e-14)
    hm = harmonic_measure(solve_equilibrium(table05, [-3, 0, 7]))
    assert hm.weights.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(hm.weights > 0)


def test_gluing_single_point(law05, table05):
    s = solve_equilibrium(table05, [0])
    for x in (1, -4, 100):
        mu = gluing_measure(s, law05, x, 0)
        assert mu == pytest.approx(law05.pmf(x) * (table05.g0 - green(table05, x)), rel=1e-12)
    # sum_x pmf(x) G(x) = G(0) - 1, remainder beyond the cache from the power law
    X = table05.x_cache
    k = np.arange(1, X + 1)
    head = 2 * math.fsum(law05.pmf(k) * table05.cache[1:])
    rem = 2 * law05.norm * table05.asym_coeff * X ** -1.0  # integral of x^{-2} beyond X
    assert head + rem == pytest.approx(table05.g0 - 1, abs=1e-6)
    with pytest.raises(ValueError):
        gluing_measure(s, law05, 0, 0)


def test_gluing_marginal_is_escape():
    # sum over x outside A of pmf(a - x) E_A(x) = E_A(a): the first step leaves A and escapes
    law = StepLaw(0.75)
    table = get_table(law)
    pts = [-3, 0, 7]
    s = solve_equilibrium(table, pts)
    R = 10**6
    for i, a in enumerate(pts):
        x = np.arange(a - R, a + R + 1, dtype=np.int64)
        x = x[~np.isin(x, pts)]
        e = 1.0 - s.hit_probability(x)
        part = math.fsum(law.pmf(a - x) * e)
        rest = law.tail(R + 1)
        h_max = s.capacity * green(table, R - 10)
        assert part + rest * (1 - h_max) - 1e-10 <= s.w[i] <= part + rest + 1e-10
    # total mass of mu over A x (complement) is 1
    total = sum(s.w) / s.capacity
    assert total == pytest.approx(1.0, abs=1e-12)


def test_cantor_sets():
    assert cantor_set(0) == [0]
    assert cantor_set(1) == [0, 2]
    assert cantor_set(2) == [0, 2, 6, 8]
    c5 = cantor_set(5)
    assert len(c5) == 32 and all("1" not in np.base_repr(v, 3) for v in c5)
    with pytest.raises(ValueError):
        cantor_set(17)


def test_cantor_band(table05):
    # recorded band for alpha = 1/2: l * ratio >= 0.4 and ratio <= 1.2
    for level in range(1, 9):
        cap = solve_equilibrium(table05, cantor_set(level)).capacity
        ratio = cap / min(2**level, 3 ** (level * 0.5))
        assert 0.4 / level <= ratio <= 1.2


def test_progression_lower_bound(table05):
    for d in (1, 3, 10, 100):
        for m in (10, 50, 200):
            cap = solve_equilibrium(table05, progression_set(d, m)).capacity
            assert cap >= 0.3 * min(m, (d * m) ** 0.5)


def test_interval_band(table025):
    for n in (16, 64, 256):
        cap = solve_equilibrium(table025, range(n + 1)).capacity
        assert 0.5 * (n + 1) ** 0.75 <= cap <= 2 * n**0.75


point_sets = st.lists(st.integers(-500, 500), min_size=1, max_size=12, unique=True)


@settings(max_examples=40, deadline=None)
@given(point_sets, point_sets)
def test_monotone_and_green_coupled_subadditivity(A, B):
    table = get_table(StepLaw(0.5))
    capA = solve_equilibrium(table, A).capacity
    union = sorted(set(A) | set(B))
    capU = solve_equilibrium(table, union).capacity
    assert capU >= capA - 1e-12
    Bd = [b for b in B if b not in set(A)]
    if Bd:
        capB = solve_equilibrium(table, Bd).capacity
        assert capU <= capA + capB + 1e-12
        # E_{A+B}(a) >= E_A(a) - P_a(hit B); summing over both sets counts G(A, B) twice
        sA, sB = solve_equilibrium(table, A), solve_equilibrium(table, Bd)
        K = np.array([[green(table, a - b) for b in Bd] for a in A])
        cross = float(sA.w @ K @ np.ones(len(Bd)) + np.ones(len(A)) @ K @ sB.w)
        assert capU >= capA + capB - cross - 1e-12
        assert capU >= capA + capB - 2 * green_between(table, A, Bd) - 1e-12


def test_single_count_green_bound_is_too_strong(table05):
    # capa(A + B) >= capa A + capa B - G(A, B) fails already for two points
    capU = solve_equilibrium(table05, [0, 2]).capacity
    assert capU < 2 / table05.g0 - green_between(table05, [0], [2])


@settings(max_examples=25, deadline=None)
@given(point_sets, st.integers(0, 2**32 - 1))
def test_variational_principle(A, seed):
    table = get_table(StepLaw(0.25))
    s = solve_equilibrium(table, A)
    K = s.kernel
    psi0 = s.w / s.capacity
    assert np.max(np.abs(K @ psi0 - 1 / s.capacity)) <= 1e-9
    psi = np.random.default_rng(seed).dirichlet(np.ones(len(A)))
    assert np.max(K @ psi) >= 1 / s.capacity - 1e-12
