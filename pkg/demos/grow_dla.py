"""Grow a few aggregates and watch diameter and capacity scale.

Run with ``python demos/grow_dla.py [alpha] [n]``.
"""
from __future__ import annotations

import sys

import numpy as np

from alphadla import dla_run, replay
from alphadla.harness import fit_exponent


def main(alpha=0.25, n=256, seeds=range(5)):
    logs = [dla_run(alpha, n, s) for s in seeds]
    ns = [snap["n"] for snap in logs[0].snapshots]
    diam = np.median([[snap["diameter"] for snap in log.snapshots] for log in logs], axis=0)
    capa = np.median([[snap["capacity"] for snap in log.snapshots] for log in logs], axis=0)
    print(f"alpha={alpha}, {len(logs)} runs")
    print(f"{'n':>6} {'diameter':>14} {'capacity':>10}")
    for k, m in enumerate(ns):
        print(f"{m:6d} {diam[k]:14.4g} {capa[k]:10.4f}")
    keep = [i for i, m in enumerate(ns) if m >= 2]
    d = fit_exponent([(ns[i], diam[i]) for i in keep])[0]
    c = fit_exponent([(ns[i], capa[i]) for i in keep])[0]
    print(f"log-log slopes: diameter {d:.2f}, capacity {c:.2f}")

    # the event log alone rebuilds the aggregate
    last = logs[0].events[-1]
    agg = replay(logs[0])
    print(f"replayed run 0: {agg.n} points, capacity {agg.capacity:.6f} (logged {last.capacity:.6f})")
    big = max(logs[0].events, key=lambda ev: ev.step_size)
    print(f"largest accepted first step in run 0: {big.step_size} at n={big.n_before}")


if __name__ == "__main__":
    args = sys.argv[1:]
    main(float(args[0]) if args else 0.25, int(args[1]) if len(args) > 1 else 256)
