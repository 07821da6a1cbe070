"""Split DLA: pick a large-jump threshold and follow the coupled split processes.

Run with ``python demos/split_coupling.py``.  M is estimated from a small
ensemble here, so the threshold differs from the experiment default.
"""
from __future__ import annotations

from alphadla import StepLaw
from alphadla.sdla import auto_D, coupled_runs, estimate_M, sdla_run


def main(alpha=0.25, n=128):
    law = StepLaw(alpha)
    M = estimate_M(alpha, n, 20, 1000)
    D = auto_D(law, n, M)
    print(f"alpha={alpha}, n={n}: M={M:.3f}, D={D:.3e}, C1={law.tail_constant:.3f}")

    # a small threshold forces an early split so both components are visible
    state, _ = sdla_run(alpha, n, 1, 200, seed=3)
    print(f"D=200, q=1: |S|={len(state.S.points) if state.S else 0}, "
          f"|S_hat|={len(state.S_hat.points)}, birth at time {state.beta_q:.3f}")

    split = interacting = 0
    for seed in range(10):
        for rep in coupled_runs(alpha, n, 3, D, seed):
            split += rep.beta_q is not None
            interacting += rep.first_interaction is not None
    print(f"10 coupled runs, q<=3 at the auto threshold: {split} splits, {interacting} interactions")


if __name__ == "__main__":
    main()
