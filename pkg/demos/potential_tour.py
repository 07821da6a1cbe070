"""Green function, capacity and escape probabilities for a few small sets.

Run with ``python demos/potential_tour.py``.  The first call builds the
Green table for each alpha (a couple of seconds).
"""
from __future__ import annotations

from alphadla import StepLaw, cantor_set, get_table, green, harmonic_measure, solve_equilibrium
from alphadla.potential import escape_outside, extend


def main():
    for alpha in (0.25, 0.5, 0.75):
        law = StepLaw(alpha)
        table = get_table(law)
        # G decays like A_G |x|^(alpha - 1)
        print(f"alpha={alpha}: G(0)={table.g0:.4f}  A_G={table.asym_coeff:.4f}  "
              f"G(1000)*1000^(1-alpha)={green(table, 1000) * 1000 ** (1 - alpha):.4f}")

    table = get_table(StepLaw(0.5))
    A = [-3, 0, 7]
    s = solve_equilibrium(table, A)
    print(f"\nA={A}: capacity={s.capacity:.5f}")
    for a, h in harmonic_measure(s).as_dict().items():
        print(f"  harmonic measure at {a:3d}: {h:.4f}")

    # adding x raises the capacity by E_A(x) * E'_A(x)
    x = 20
    e = escape_outside(s, x)
    new, delta = extend(s, x)
    print(f"add x={x}: increment {delta:.6f} = {e:.4f} * {float(new.w[-1]):.4f}")

    print("\nCantor sets at alpha=0.5 (capacity / min(2^l, 3^(l/2))):")
    for level in range(0, 7):
        pts = cantor_set(level)
        cap = solve_equilibrium(table, pts).capacity
        print(f"  level {level}: {len(pts):3d} points, ratio {cap / min(2**level, 3 ** (level / 2)):.3f}")


if __name__ == "__main__":
    main()
