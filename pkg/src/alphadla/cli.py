"""The ``alphadla`` command line.

Global flags (``--config``, ``--seed``, ``--threads``, ``--out-dir``) may be
given before or after the subcommand.  The exit status is 0 when every
armed check passes, 1 when one fails and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

from .config import ExperimentConfig
from .dla import d_threshold, dla_run
from .green import get_table, green, load_table, save_table
from .harness import EXPERIMENTS, M_SEED_OFFSET, write_result
from .potential import cantor_set, progression_set, solve_equilibrium
from .sdla import auto_D, coupled_runs, estimate_M, sdla_run
from .steplaw import StepLaw


def _global_flags(parser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), help="JSON file with ExperimentConfig fields")
    parser.add_argument("--seed", type=int, default=d(None), help="base seed")
    parser.add_argument("--threads", type=int, default=d(None), help="worker processes")
    parser.add_argument("--out-dir", default=d(None), help="output directory")


def _table(args, law):
    if getattr(args, "table", None):
        table = load_table(args.table)
        if abs(table.alpha - law.alpha) > 0:
            raise SystemExit(f"table is for alpha={table.alpha}, not {law.alpha}")
        return table
    return get_table(law, args.x_cache)


def parse_set(spec: str) -> list:
    """``file:<path>``, ``interval:<n>``, ``cantor:<level>`` or ``progression:<d>,<m>``."""
    kind, _, arg = spec.partition(":")
    if kind == "file":
        with open(arg) as fh:
            return [int(line) for line in fh if line.strip()]
    if kind == "interval":
        return list(range(int(arg) + 1))
    if kind == "cantor":
        return cantor_set(int(arg))
    if kind == "progression":
        d, m = (int(v) for v in arg.split(","))
        return progression_set(d, m)
    raise ValueError(f"unknown set description {spec!r}")


def _split_threshold(spec: str, n: int, law: StepLaw):
    if spec == "none":
        return None
    kind, _, arg = spec.partition(":")
    if kind == "value":
        return int(float(arg)) if "e" in arg.lower() else int(arg)
    if kind == "eqDdef":
        M, C1 = (float(v) for v in arg.split(","))
        return d_threshold(n, M, C1, law.alpha)
    raise ValueError(f"unknown split threshold {spec!r}")


def _resolve_D(spec, alpha, n, seed, threads):
    if str(spec) != "auto":
        return int(float(spec)) if "e" in str(spec).lower() else int(spec)
    from .harness import _pool_map

    M = estimate_M(alpha, n, 50, seed + M_SEED_OFFSET, map_fn=_pool_map(threads))
    return auto_D(StepLaw(alpha), n, M)


def _out(args, name):
    if args.out:
        return args.out
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        return os.path.join(args.out_dir, name)
    return None


# ----------------------------------------------------------------------
# subcommands


def cmd_green(args) -> int:
    law = StepLaw(args.alpha)
    table = _table(args, law)
    print(f"alpha={law.alpha} x_cache={table.x_cache} A_G={table.asym_coeff!r} "
          f"fingerprint={table.fingerprint()}")
    for x in args.x:
        print(f"G({x}) = {green(table, x)!r}")
    if args.save:
        save_table(table, args.save)
    return 0


def cmd_capa(args) -> int:
    law = StepLaw(args.alpha)
    table = _table(args, law)
    pts = parse_set(args.set)
    state = solve_equilibrium(table, pts, max(len(set(pts)) + 1, 1024))
    print(f"points={state.n} capacity={state.capacity!r} residual={state.verify():.3e}")
    if args.show_w:
        for p, w in zip(state.points, state.w):
            print(f"{p} {float(w)!r}")
    return 0


def cmd_dla_run(args) -> int:
    law = StepLaw(args.alpha)
    D = _split_threshold(args.split_threshold, args.n, law)
    log = dla_run(args.alpha, args.n, args.seed, split_threshold=D,
                  snapshot_base=args.snapshot_base, table=_table(args, law), step_law=law)
    path = _out(args, f"dla_{args.alpha}_{args.n}_{args.seed}.jsonl")
    if path:
        log.save(path)
    last = log.snapshots[-1]
    print(f"n={last['n']} t={last['t']!r} diameter={last['diameter']} capacity={last['capacity']!r}")
    return 0


def cmd_sdla_run(args) -> int:
    law = StepLaw(args.alpha)
    table = _table(args, law)
    D = _resolve_D(args.D, args.alpha, args.n, args.seed, args.threads)
    path = _out(args, f"sdla_{args.alpha}_{args.n}_q{args.q or 1}.jsonl")
    for i in range(args.runs):
        seed = args.seed + i
        state, log = sdla_run(args.alpha, args.n, args.q or 1, D, seed, table=table, step_law=law)
        s = len(state.S.points) if state.S else 0
        print(json.dumps({"seed": seed, "D": D, "size_S": s, "size_S_hat": len(state.S_hat.points),
                          "beta_q": state.beta_q, "zeta_q": state.zeta_q, "b_q": state.b_q},
                         sort_keys=True))
        if path:
            root, ext = os.path.splitext(path)
            log.save(path if args.runs == 1 else f"{root}.{seed}{ext or '.jsonl'}")
    return 0


def cmd_sdla_couple(args) -> int:
    law = StepLaw(args.alpha)
    table = _table(args, law)
    D = _resolve_D(args.D, args.alpha, args.n, args.seed, args.threads)
    q_max = args.q or math.ceil(math.log(args.n))
    path = _out(args, f"couple_{args.alpha}_{args.n}.jsonl")
    lines, ok = [], True
    for i in range(args.runs):
        for rep in coupled_runs(args.alpha, args.n, q_max, D, args.seed + i, table=table, step_law=law):
            if args.q and rep.q != args.q:
                continue
            ok &= rep.colour_consistent
            lines.append(json.dumps(rep.as_dict(), sort_keys=True))
    text = "\n".join(lines) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0 if ok else 1


def cmd_exp(args) -> int:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    for name in ("seed", "threads"):
        if getattr(args, name) is not None:
            setattr(cfg, name, getattr(args, name))
    if args.out_dir is not None:
        cfg.out_dir = args.out_dir
    if args.force:
        cfg.force = True
    cfg.validate()
    try:
        result = EXPERIMENTS[args.which](cfg)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in write_result(result, cfg.out_dir):
        print(f"wrote {p}")
    for c in result.checks:
        print(c.line())
    return 0 if result.ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="alphadla", description=__doc__.splitlines()[0])
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)
    glob = argparse.ArgumentParser(add_help=False)
    _global_flags(glob, suppress=True)

    def common(sp):
        sp.add_argument("--alpha", type=float, required=True)
        sp.add_argument("--x-cache", type=int, default=2**16)
        sp.add_argument("--table", help="Green table file written by `green --save`")

    g = sub.add_parser("green", parents=[glob], help="Green function values")
    common(g)
    g.add_argument("--x", type=int, nargs="+", default=[0])
    g.add_argument("--save", help="write the table to this file")
    g.set_defaults(func=cmd_green)

    c = sub.add_parser("capa", parents=[glob], help="capacity of a finite set")
    common(c)
    c.add_argument("--set", required=True,
                   help="file:<path> | interval:<n> | cantor:<level> | progression:<d>,<m>")
    c.add_argument("--show-w", action="store_true", help="print escape probabilities")
    c.set_defaults(func=cmd_capa)

    dla = sub.add_parser("dla", help="DLA simulation").add_subparsers(dest="action", required=True)
    r = dla.add_parser("run", parents=[glob], help="grow one aggregate")
    common(r)
    r.add_argument("--n", type=int, required=True)
    r.add_argument("--snapshot-base", type=int, default=2)
    r.add_argument("--split-threshold", default="none",
                   help="none | value:<D> | eqDdef:<M>,<C1>")
    r.add_argument("--out")
    r.set_defaults(func=cmd_dla_run)

    sd = sub.add_parser("sdla", help="split DLA").add_subparsers(dest="action", required=True)
    for name, func in (("run", cmd_sdla_run), ("couple", cmd_sdla_couple)):
        s = sd.add_parser(name, parents=[glob])
        common(s)
        s.add_argument("--n", type=int, required=True)
        s.add_argument("--q", type=int, default=None)
        s.add_argument("--D", default="auto", help="auto | <value>")
        s.add_argument("--runs", type=int, default=1)
        s.add_argument("--out")
        s.set_defaults(func=func)

    e = sub.add_parser("exp", parents=[glob], help="ensemble experiments")
    e.add_argument("which", choices=sorted(EXPERIMENTS))
    e.add_argument("--force", action="store_true", help="allow coupling runs with alpha >= 1/3")
    e.set_defaults(func=cmd_exp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.func is not cmd_exp:
        args.seed = 0 if args.seed is None else args.seed
        args.threads = 1 if args.threads is None else args.threads
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
