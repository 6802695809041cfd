"""Command-line entry point ``fiberopt``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import echo_config, load_config
from .errors import FiberOptError, ParseError, SolverFailure, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_NONCONVERGENCE = 4


def _parser():
    p = argparse.ArgumentParser(prog="fiberopt", description="Multi-material fibre topology optimisation")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="optimise a design")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    r.add_argument("--max-iters", type=int, default=None)
    v = sub.add_parser("verify", help="check the sensitivity machinery against brute-force oracles")
    v.add_argument("--config", required=True)
    t = sub.add_parser("table", help="build and cache the derivative table")
    t.add_argument("--config", required=True)
    return p


def cmd_run(cfg, out):
    from .export import SnapshotFields, save_design, write_history, write_snapshot
    from .optimizer import CONVERGED, run

    out = Path(out)
    echo_config(cfg, out)
    interval = cfg.snapshot_interval

    def observer(step, problem, phi, orient, ev):
        if interval and step % interval == 0:
            write_snapshot(out, step, problem.mesh, SnapshotFields.from_state(problem.mesh, phi, orient, ev))

    result = run(cfg, observer)
    mesh = result.problem.mesh
    final = SnapshotFields.from_state(mesh, result.phi, result.orientation, result.evaluation)
    write_snapshot(out, result.iterations, mesh, final)
    write_history(out / "history.csv", result.history)
    save_design(out / "design.npz", result.phi, result.orientation)
    h = result.history
    print(f"{result.status} after {result.iterations} iterations: "
          f"J_C = {h.J_C[-1]:.6g}, g_W = {h.g_W[-1]:.3g}")
    return EXIT_OK if result.status == CONVERGED else EXIT_NONCONVERGENCE


def cmd_verify(cfg):
    """Eshelby closed form, moment-tensor cross-check and the theta* argmin check."""
    from .oracle import dense_theta_argmin, eshelby_closed_form, moment_tensor_full
    from .topoderiv import build_table, eshelby_interior, estimate_theta_star, elastic_moment

    cat = cfg.catalog()
    ok = True
    err = np.max(np.abs(eshelby_interior(cat.C_I) - eshelby_closed_form(cat.nu_I)))
    ok &= _report("eshelby closed form", err < 1e-8, f"max error {err:.2e}")
    worst = 0.0
    for a in ("V", "I", "F"):
        for b in ("V", "I", "F"):
            Ca, Cb = cat.tensor(a, 0.0), cat.tensor(b, 0.7)
            A = elastic_moment(Ca, Cb)
            worst = max(worst, np.max(np.abs(A - moment_tensor_full(Ca, Cb))) / max(np.max(np.abs(A)), 1e-30))
    ok &= _report("moment tensor", worst < 1e-8, f"max relative error {worst:.2e}")
    table = build_table(cat, cfg.n_angles)
    rng = np.random.default_rng(cfg.seed)
    hits = total = 0
    for a in ("I", "F"):
        for _ in range(100):
            E = rng.normal(size=3)
            theta = rng.uniform(0, np.pi) if a == "F" else 0.0
            est, _ = estimate_theta_star(table, E, theta, a)
            ref, _ = dense_theta_argmin(cat, E, a, theta=theta)
            d = abs(est - ref) % np.pi
            hits += min(d, np.pi - d) <= np.pi / cfg.n_angles
            total += 1
    ok &= _report("theta* argmin", hits >= 0.99 * total, f"{hits}/{total} within one grid step")
    return EXIT_OK if ok else EXIT_SOLVER


def _report(name, passed, detail):
    print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    return passed


def cmd_table(cfg):
    from .topoderiv import cached_table, table_key

    cache = cfg.table_cache or str(Path(cfg.output_dir) / "cache")
    cached_table(cfg.catalog(), cfg.n_angles, cache)
    print(Path(cache) / f"table_{table_key(cfg.catalog(), cfg.n_angles)}.npz")
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "run":
            if args.max_iters is not None:
                if args.max_iters < 0:
                    raise ValidationError("max_iters", "must be nonnegative")
                cfg = cfg.replace(max_iters=args.max_iters)
            return cmd_run(cfg, args.out or cfg.output_dir)
        if args.command == "verify":
            return cmd_verify(cfg)
        return cmd_table(cfg)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SolverFailure, FiberOptError, ValueError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
