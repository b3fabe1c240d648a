"""Command-line driver: ``dfheat run | rates | export``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .adaptivity import adaptive_loop, fit_rate, read_record
from .config import load_config
from .io import export_vtk, load_snapshot, save_snapshot

logger = logging.getLogger("dfheat")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    mesh, data = cfg.problem()
    cfg.save(out / "config.cfg")

    def snapshot(it, mesh, state, indicators):
        if cfg.snapshot_every and it % cfg.snapshot_every == 0:
            save_snapshot(out / f"snapshot_{it:04d}.npz", mesh, state, indicators, it)
            if cfg.write_vtk:
                export_vtk(mesh, state, indicators, out / f"solution_{it:04d}.vtk")

    result = adaptive_loop(mesh, data, cfg.n_iterations, tol=cfg.picard_tol, max_picard=cfg.max_picard,
                           quad_degree=cfg.quad_degree, callback=snapshot, config=cfg.as_dict(),
                           max_elements=cfg.max_elements or None)
    last = result.record.rows[-1]
    save_snapshot(out / "final.npz", result.mesh, result.state, result.indicators, last["iter"])
    if cfg.write_vtk:
        export_vtk(result.mesh, result.state, result.indicators, out / "final.vtk")
    if cfg.write_csv:
        result.record.to_csv(out / "record.csv")
    print(f"{len(result.record)} rounds; final mesh {last['nv']} vertices, {last['nt']} elements; "
          f"estimator {last['est_total']:.6e}; output in {out}")
    return 0


def cmd_rates(args) -> int:
    record = read_record(args.record)
    print(f"{fit_rate(record, args.tail):.6f}")
    return 0


def cmd_export(args) -> int:
    mesh, state, indicators = load_snapshot(args.snapshot)
    export_vtk(mesh, state, indicators, args.out)
    print(f"wrote {args.out} ({mesh.n_elements} cells)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dfheat", description="Adaptive Darcy-Forchheimer/heat solver")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an adaptive experiment from a config file")
    run.add_argument("config")
    run.add_argument("-o", "--output-dir", help="override output_dir from the config")
    run.set_defaults(func=cmd_run)

    rates = sub.add_parser("rates", help="fit the estimator decay rate of a record")
    rates.add_argument("record")
    rates.add_argument("--tail", type=int, default=10, help="number of final rows to fit (default 10)")
    rates.set_defaults(func=cmd_rates)

    export = sub.add_parser("export", help="convert a snapshot to legacy VTK")
    export.add_argument("snapshot")
    export.add_argument("out")
    export.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # report, do not trace back
        print(f"dfheat {args.command}: error: {exc}", file=sys.stderr)
        if args.verbose >= 2:
            raise
        return 1


if __name__ == "__main__":
    sys.exit(main())
