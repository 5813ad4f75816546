"""Command-line operator surface.

Subcommands:

- ``run``: one sampling run; writes trajectory CSV, summary JSON, optional
  latent snapshots and SVG plots.
- ``verify``: oracle-backed self checks; ``--long`` adds the stationarity
  test. Emits one JSON record per check.
- ``sweep``: parameter grids x seeds on a worker pool; one aggregate CSV.
- ``print-config``: effective configuration with all defaults applied.

The default output directory is ``--out-dir``, else ``$REWARDLANGEVIN_OUT_DIR``,
else the current directory.
"""

import argparse
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import outputs, sampler as smp, verify as verify_mod
from .config import ConfigError, load_config

OUT_DIR_ENV = "REWARDLANGEVIN_OUT_DIR"


def _out_dir(args):
    return args.out_dir or os.environ.get(OUT_DIR_ENV) or "."


def _load(args):
    return load_config(args.config, overrides=args.set or [], seed=args.seed)


def _source_image_distance(backbone, task, image):
    """RMS per-dimension distance of the output to the decoded source latent."""
    if task.z0 is None:
        return None
    ref = backbone.decode(task.z0)
    return float(np.linalg.norm(image - ref) / np.sqrt(ref.size))


def cmd_run(args):
    run_cfg = _load(args)
    backbone, bank, params, task, cfg = run_cfg.build()
    out_dir = _out_dir(args)
    os.makedirs(out_dir, exist_ok=True)
    engine = smp.SamplingEngine(backbone, bank, params, task, cfg)
    diverged = False
    try:
        image, traj = engine.run()
    except smp.DivergenceError as exc:
        print(f"run diverged: {exc}", file=sys.stderr)
        traj = exc.trajectory
        image = np.full(backbone.decoder.image_dim, np.nan)
        diverged = True

    outputs.write_trajectory_csv(traj, os.path.join(out_dir, "trajectory.csv"))
    extra = {"seed": cfg.seed}
    dist = None if diverged else _source_image_distance(backbone, task, image)
    if dist is not None:
        extra["distance_to_source_image"] = dist
    outputs.write_summary(os.path.join(out_dir, "summary.json"), image, traj,
                          run_cfg.effective(), extra)
    if cfg.snapshot_stride > 0:
        outputs.write_snapshots(traj, os.path.join(out_dir, "snapshots.bin"))
    if run_cfg.data["output"]["plots"] and traj.n_steps > 0:
        outputs.write_plots(traj, out_dir)
    if diverged:
        return 3
    print(f"wrote trajectory ({traj.n_steps} steps) and summary to {out_dir}")
    return 0


def cmd_verify(args):
    try:
        records, ok = verify_mod.run_checks(only=args.only, long=args.long)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    for rec in records:
        print(json.dumps(rec, sort_keys=True))
        status = "PASS" if rec["pass"] else "FAIL"
        print(f"  [{status}] {rec['id']}: measured {rec['measured']:.3g} "
              f"vs threshold {rec['threshold']:.3g}", file=sys.stderr)
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(records, fh, indent=2, sort_keys=True)
    failed = [r["id"] for r in records if not r["pass"]]
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


def _parse_grid(items):
    grid = []
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"grid entry {item!r} must look like key=v1,v2")
        key, _, values = item.partition("=")
        vals = [v for v in values.split(",") if v != ""]
        if not vals:
            raise ConfigError(f"grid entry {item!r} has no values")
        grid.append((key.strip(), vals))
    return grid


def _sweep_cell(payload):
    """One (grid point, seed) cell; runs in a worker process."""
    config_path, base_sets, cell_sets, seed = payload
    try:
        run_cfg = load_config(config_path, overrides=base_sets + cell_sets,
                              seed=seed)
        backbone, bank, params, task, cfg = run_cfg.build()
        image, traj = smp.run(backbone, bank, params, task, cfg)
        r_tot = float(traj.r_tot[-1]) if traj.n_steps else float("nan")
        dist = _source_image_distance(backbone, task, image)
        return {"cell": dict(s.split("=", 1) for s in cell_sets), "seed": seed,
                "final_r_tot": r_tot,
                "dist_source_image": float("nan") if dist is None else dist,
                "diverged": False, "error": ""}
    except smp.DivergenceError:
        return {"cell": dict(s.split("=", 1) for s in cell_sets), "seed": seed,
                "final_r_tot": float("nan"), "dist_source_image": float("nan"),
                "diverged": True, "error": ""}
    except Exception as exc:   # record the failed cell; the sweep continues
        return {"cell": dict(s.split("=", 1) for s in cell_sets), "seed": seed,
                "final_r_tot": float("nan"), "dist_source_image": float("nan"),
                "diverged": False, "error": str(exc)}


def cmd_sweep(args):
    grid = _parse_grid(args.grid)
    if not grid:
        print("no sweep points: provide at least one --grid key=v1,v2",
              file=sys.stderr)
        return 2
    keys = [k for k, _ in grid]
    base_sets = list(args.set or [])
    base_seed = args.seed if args.seed is not None else 0
    cells = []
    for combo in itertools.product(*(vals for _, vals in grid)):
        cell_sets = [f"{k}={v}" for k, v in zip(keys, combo)]
        for s in range(args.seeds):
            cells.append((args.config, base_sets, cell_sets, base_seed + s))

    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]

    out_dir = _out_dir(args)
    os.makedirs(out_dir, exist_ok=True)
    header = keys + ["seed", "final_r_tot", "dist_source_image", "diverged",
                     "error"]
    lines = [",".join(header)]
    for res in results:
        row = [res["cell"].get(k, "") for k in keys]
        row += [str(res["seed"]), repr(res["final_r_tot"]),
                repr(res["dist_source_image"]), str(int(res["diverged"])),
                res["error"].replace(",", ";")]
        lines.append(",".join(row))
    path = os.path.join(out_dir, "sweep.csv")
    outputs._atomic_write(path, "\n".join(lines) + "\n")
    n_failed = sum(1 for r in results if r["error"])
    print(f"wrote {len(results)} rows to {path} ({n_failed} failed cells)")
    return 0


def cmd_print_config(args):
    run_cfg = _load(args)
    run_cfg.build()   # validate dimensions before echoing
    sys.stdout.write(run_cfg.effective_yaml())
    return 0


def build_parser():
    ap = argparse.ArgumentParser(
        prog="rewardlangevin",
        description="Reward-guided Langevin sampling on analytic toy backbones")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="YAML config path")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="dotted-path config override (repeatable)")
        p.add_argument("--seed", type=int, default=None,
                       help="override sampler.seed")
        p.add_argument("--out-dir", default=None,
                       help=f"output directory (default ${OUT_DIR_ENV} or .)")

    p = sub.add_parser("run", help="execute one sampling run")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run oracle-backed self checks")
    p.add_argument("--only", default=None, help="check id prefix selector")
    p.add_argument("--long", action="store_true",
                   help="include the stationarity test")
    p.add_argument("--report", default=None, help="write JSON report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="run a parameter grid x seeds")
    common(p)
    p.add_argument("--grid", action="append", metavar="KEY=V1,V2",
                   help="sweep values for one dotted config key (repeatable)")
    p.add_argument("--seeds", type=int, default=1,
                   help="seeds per grid point (seed, seed+1, ...)")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("print-config", help="echo the effective configuration")
    common(p)
    p.set_defaults(func=cmd_print_config)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
