from __future__ import annotations

import json
import math

import numpy as np
import pytest

from alphadla.config import ExperimentConfig
from alphadla.harness import (
    Check,
    ExperimentResult,
    ResultRow,
    diameter_band,
    exp_cantor,
    exp_coupling,
    exp_harmonic,
    exp_scaling,
    fit_exponent,
    ordered_map,
    write_result,
)
from alphadla.potential import solve_equilibrium


def test_fit_exponent_exact_power():
    slope, lo, hi = fit_exponent([(2, 4), (4, 16), (8, 64), (16, 256)])
    assert slope == pytest.approx(2.0, abs=1e-12)
    assert lo <= slope <= hi and hi - lo < 1e-9


def test_fit_exponent_scale_invariance():
    rng = np.random.default_rng(7)
    ns = [2**k for k in range(2, 10)]
    vs = [n**1.3 * math.exp(rng.normal(0, 0.05)) for n in ns]
    s1 = fit_exponent(zip(ns, vs))
    s2 = fit_exponent(zip(ns, [17.0 * v for v in vs]))
    s3 = fit_exponent(zip([5 * n for n in ns], vs))
    assert s1 == pytest.approx(s2, abs=1e-12) and s1 == pytest.approx(s3, abs=1e-12)
    assert s1[1] < 1.3 < s1[2]


@pytest.mark.parametrize("series", [
    [(1, 1), (2, 2), (4, 4)],
    [(1, 1), (2, 2), (2, 3), (4, 4)],
    [(1, 1), (2, 0), (3, 3), (4, 4)],
    [(1, 1), (2, float("inf")), (3, 3), (4, 4)],
])
def test_fit_exponent_rejects(series):
    with pytest.raises(ValueError):
        fit_exponent(series)


def test_interval_capacity_slope(table05):
    ns = [16, 32, 64, 128, 256, 512]
    caps = [solve_equilibrium(table05, range(n + 1)).capacity for n in ns]
    slope, _, _ = fit_exponent(zip(ns, caps))
    assert 0.4 <= slope <= 0.6


def test_diameter_band():
    assert diameter_band(0.25) == (2.5, 5.5)
    lo, hi = diameter_band(0.5)
    assert lo == 1.5 and hi == pytest.approx(3.2)
    # the band must exclude an exponent that is off by one
    for a in (0.1, 0.2, 0.3):
        lo, hi = diameter_band(a)
        assert lo < 1 / a < hi and not lo < 1 / a + 1.6 < hi


def test_result_row_bracket():
    ResultRow("e", 0.5, 4, "s", 1.0, 0.5, 1.5, 3)
    with pytest.raises(ValueError):
        ResultRow("e", 0.5, 4, "s", 2.0, 0.5, 1.5, 3)


def test_check_states():
    assert Check("a", 1.0, 0.0, 2.0).passed
    assert not Check("a", 3.0, 0.0, 2.0).passed
    assert Check("a", 3.0, None, None).passed
    assert not Check("a", float("nan"), None, None).passed
    assert Check("a", 3.0, 0.0, 2.0, armed=False).line().startswith("[info]")
    assert Check("a", 1.0, None, 2.0).line() == "[PASS] a: 1 in [-inf, 2]"
    res = ExperimentResult("x", checks=[Check("a", 3.0, 0.0, 2.0, armed=False), Check("b", 1.0, 0, 2)])
    assert res.ok
    res.checks.append(Check("c", 5.0, 0, 2))
    assert not res.ok


def test_csv_and_files(tmp_path):
    rows = [ResultRow("e", 0.25, 8, "s", 0.1 + 0.2, 0.0, 1.0, 2)]
    res = ExperimentResult("e", rows=rows, checks=[Check("c", 1.0, 0.0, 2.0)],
                           provenance={"k": 1}, logs=[{"b": 2, "a": 1}])
    assert res.csv_text() == ("experiment,alpha,n,statistic,value,lo,hi,runs\n"
                              "e,0.25,8,s,0.30000000000000004,0.0,1.0,2\n")
    paths = write_result(res, tmp_path / "out")
    assert [p.rsplit("/", 1)[1] for p in paths] == ["e.csv", "e.provenance.json", "e.jsonl"]
    prov = json.loads(open(paths[1]).read())
    assert prov["k"] == 1 and prov["checks"][0]["passed"]
    assert open(paths[2]).read() == '{"a": 1, "b": 2}\n'


def test_ordered_map():
    assert ordered_map(math.sqrt, [4, 9, 16], threads=1) == [2.0, 3.0, 4.0]
    assert ordered_map(math.sqrt, [4, 9, 16], threads=2) == [2.0, 3.0, 4.0]


def test_config_validation(tmp_path):
    with pytest.raises(ValueError, match="unknown"):
        ExperimentConfig.from_dict({"alphas": [0.5], "bogus": 1})
    for bad in ({"alphas": [1.0]}, {"alphas": []}, {"runs": 0}, {"threads": 0},
                {"quantile_p": 1.0}, {"levels": 13}):
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict(bad)
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"alphas": [0.3], "runs": 3, "D": "1000"}))
    cfg = ExperimentConfig.from_json(p)
    assert cfg.alphas == [0.3] and cfg.D == 1000 and cfg.run_seeds() == [0, 1, 2]
    assert cfg.q_range(256) == math.ceil(math.log(256))
    p.write_text("[1, 2]")
    with pytest.raises(ValueError):
        ExperimentConfig.from_json(p)


def test_scaling_small():
    cfg = ExperimentConfig(alphas=[0.25], n_max=64, runs=4, seed=3)
    res = exp_scaling(cfg)
    assert res.ok and all(not c.armed for c in res.checks)
    med = [r for r in res.rows if r.statistic == "diameter_median"]
    assert [r.n for r in med] == [1, 2, 4, 8, 16, 32, 64]
    vals = [r.value for r in med]
    assert vals == sorted(vals) and vals[0] == 0
    assert res.provenance["config"]["n_max"] == 64
    assert len(res.provenance["green_fingerprints"]) == 1


def test_cantor_small():
    res = exp_cantor(ExperimentConfig(alphas=[0.5], levels=4))
    assert res.ok
    ratio = {r.n: r.value for r in res.rows if r.statistic == "ratio"}
    assert sorted(ratio) == [0, 1, 2, 3, 4]
    c_obs = next(r.value for r in res.rows if r.statistic == "c_observed")
    assert c_obs == pytest.approx(min(l * ratio[l] for l in range(1, 5)))


def test_harmonic_small():
    cfg = ExperimentConfig(alphas=[0.5], harmonic_starts=[100, 1000], harmonic_hits=300, seed=2)
    res = exp_harmonic(cfg)
    stats_ = {(r.n, r.statistic) for r in res.rows}
    assert (1000, "hit_sup_distance") in stats_ and (100, "symmetric_left_fraction") in stats_
    # the final start is below 10^5, so the distance check is reported only
    final = [c for c in res.checks if "hit sup-distance" in c.name]
    assert len(final) == 1 and not final[0].armed


def test_coupling_refuses_large_alpha():
    with pytest.raises(ValueError, match="1/3"):
        exp_coupling(ExperimentConfig(alphas=[0.5], runs=2, coupling_n=[32], D=100))


def test_coupling_forced_reports_only():
    cfg = ExperimentConfig(alphas=[0.3], runs=3, coupling_n=[32], D=200, q_max=2, force=True)
    res = exp_coupling(cfg)
    assert res.provenance["forced"] is True
    assert res.checks and all(not c.armed for c in res.checks)
    assert res.ok
    f = next(r for r in res.rows if r.statistic == "interaction_frequency")
    assert f.runs == 3 and f.lo <= f.value <= f.hi
    assert all(rec["forced"] for rec in res.logs)


def test_coupling_fixed_D():
    cfg = ExperimentConfig(alphas=[0.25], runs=4, coupling_n=[32, 64], D=10**6, q_max=3)
    res = exp_coupling(cfg)
    names = [c.name for c in res.checks]
    assert "alpha=0.25 frequency at n=64 minus n=32" in names
    assert len([r for r in res.rows if r.statistic.startswith("interaction_frequency_q")]) == 6


def test_threads_do_not_change_bytes(tmp_path):
    base = dict(alphas=[0.25], n_max=32, runs=3, seed=11)
    out = []
    for threads in (1, 2):
        res = exp_scaling(ExperimentConfig(threads=threads, **base))
        out.append(res.csv_text())
    assert out[0] == out[1]
