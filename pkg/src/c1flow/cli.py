"""Command-line interface: ``c1flow run | rates | check | lambda``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

log = logging.getLogger("c1flow")


def _thread_limit(deterministic: bool):
    """Cap BLAS/OpenMP threads from C1FLOW_THREADS (1 under --deterministic)."""
    from threadpoolctl import threadpool_limits

    n = os.environ.get("C1FLOW_THREADS")
    if deterministic:
        n = "1"
    return threadpool_limits(int(n)) if n else None


def _resolve(args):
    from .config import RunConfig, load_config, preset

    if args.config:
        cfg = load_config(args.config)
        if args.preset:
            raise SystemExit("give either --config or --preset, not both")
    elif args.preset:
        cfg = preset(args.preset)
    else:
        cfg = RunConfig()
    over = dict(scheme=args.scheme, k=args.k, t_end=args.tend, out=args.out)
    if getattr(args, "levels", None):
        over["levels"] = args.levels
    if args.deterministic:
        over["deterministic"] = True
    if getattr(args, "nx", None):
        over["nx"] = args.nx
    return cfg.with_overrides(**over).validate()


def cmd_run(args) -> int:
    from .config import write_config
    from .output import write_csv, write_vtk
    from .simulation import build_problem, simulate

    cfg = _resolve(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out / "config.toml")
    problem = build_problem(cfg)
    log.info("%s: %d dofs per component, %d steps of k = %g", cfg.preset or "custom",
             problem.space.n_dofs, cfg.n_steps, cfg.k)
    traj = simulate(problem, keep_fields=cfg.vtk)
    write_csv(out / "norms.csv", traj.rows())
    if traj.errors:
        write_csv(out / "errors.csv", zip(traj.steps, traj.times, traj.errors))
    if cfg.vtk:
        write_vtk(out / "initial.vtk", traj.fields[0], "initial state")
        write_vtk(out / "final.vtk", traj.fields[-1], f"t = {traj.times[-1]:.6g}")
    last = traj.norms[-1]
    print(f"t = {traj.times[-1]:.6g}  l2 = {last.l2:.6e}  h1_semi = {last.h1_semi:.6e}  "
          f"h2_broken = {last.h2_broken:.6e}  l4 = {last.l4:.6e}")
    if traj.errors:
        e = traj.linf("errors")
        print(f"max error: l2 = {e.l2:.3e}  h1_semi = {e.h1_semi:.3e}  h2_broken = {e.h2_broken:.3e}")
    print(f"outputs written to {out}")
    return 0


def cmd_rates(args) -> int:
    from .config import write_config
    from .output import write_convergence_svg, write_rate_csv
    from .simulation import refinement_sweep

    cfg = _resolve(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out / "config.toml")
    table, _ = refinement_sweep(cfg)
    print(table.format())
    write_rate_csv(out / "rates.csv", table)
    write_convergence_svg(out / "convergence.svg", table)
    print(f"outputs written to {out}")
    return 0


def cmd_lambda(args) -> int:
    import math

    from .stepper import compute_lambda

    cfg = _resolve(args)
    lam = compute_lambda(cfg.coefficients())
    print(f"lambda = {lam:.12g}")
    print(f"stable step sizes: k < {lam / 2:.12g}" if math.isfinite(lam)
          else "no step-size restriction (beta1 = beta6 = 0)")
    ok = cfg.k < lam / 2
    print(f"configured k = {cfg.k:g}: {'ok' if ok else 'VIOLATES the guard'}")
    return 0 if ok else 1


def cmd_check(args) -> int:
    from .checks import run_checks

    results = run_checks(seed=args.seed)
    width = max(len(name) for name, _, _ in results)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    return 0 if all(ok for _, ok, _ in results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="c1flow", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="TOML key = value config file")
        sp.add_argument("--preset", help="named model preset")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--scheme", choices=["euler", "bdf2"])
        sp.add_argument("--k", type=float, help="time step")
        sp.add_argument("--tend", type=float, help="final time")
        sp.add_argument("--nx", type=int, help="cells per direction (coarsest level for rates)")
        sp.add_argument("--deterministic", action="store_true",
                        help="single-threaded, bitwise reproducible run")

    sp = sub.add_parser("run", help="single simulation")
    common(sp)
    sp.set_defaults(func=cmd_run)
    sp = sub.add_parser("rates", help="refinement sweep with convergence rates")
    common(sp)
    sp.add_argument("--levels", type=int, help="number of meshes")
    sp.set_defaults(func=cmd_rates)
    sp = sub.add_parser("lambda", help="print the step-size guard")
    common(sp)
    sp.set_defaults(func=cmd_lambda)
    sp = sub.add_parser("check", help="quick identity and property checks")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--deterministic", action="store_true")
    sp.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .config import ConfigError

    limit = _thread_limit(args.deterministic)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    finally:
        if limit is not None:
            limit.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
