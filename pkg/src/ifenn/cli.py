"""Command-line entry point: ``ifenn generate|train|run|compare``.

Exit codes: 0 success, 2 configuration/input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .compare import CompareError, RunTable, compare_runs
from .config import ConfigError, ScenarioConfig
from .driver import RunError, _check_model, run_fem, run_ifenn
from .elasticity import SolverError
from .io import (
    read_snapshot, read_snapshot_index, read_table, write_loss, write_reactions,
    write_snapshots, write_timings,
)
from .picnn import ModelError, PicnnModel, TrainingError, load_model, save_model, train

log = logging.getLogger("ifenn")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class InputError(ValueError):
    """Bad command-line input that is not a config-file problem (exit code 2)."""


def _out_dir(cfg: ScenarioConfig, args) -> Path:
    out = Path(args.out if args.out else cfg.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _progress(every: int = 25):
    def report(rec):
        if rec.increment % every == 0:
            log.info("inc %4d  u=%.4e  F=%.4f  phi_max=%.4f  mode=%s", rec.increment, rec.u, rec.force, rec.phi_max, rec.mode)
    return report


def _write_run(out: Path, cfg: ScenarioConfig, record) -> None:
    h = cfg.hash()
    cfg.save(out / "config.yaml")
    write_reactions(out / "reaction.csv", record, h)
    write_timings(out / "timings.csv", record, h)
    write_snapshots(out, record, h)
    table = RunTable.from_record(record)
    lines = [f"# tool ifenn {__version__}", f"# config {h}"]
    if len(table.force):
        i = int(np.argmax(table.force))
        lines += [f"peak_force {table.force[i]!r}", f"peak_increment {int(table.increment[i])}", f"peak_u {table.u[i]!r}"]
        lines.append(f"final_force {table.force[-1]!r}")
    lines.append(f"activation_increment {record.activation_increment if record.activation_increment else '-'}")
    lines.append(f"increments {len(table.force)}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")


def _print_summary(record) -> None:
    t = RunTable.from_record(record)
    if not len(t.force):
        print("empty schedule: no increments run")
        return
    i = int(np.argmax(t.force))
    tot = record.column("t_total")
    ph = record.column("t_phase")
    eq = record.column("t_equilibrium")
    print(f"peak force {t.force[i]:.6g} N at increment {int(t.increment[i])} (u={t.u[i]:.6g} mm)")
    print(f"final force {t.force[-1]:.6g} N")
    print(f"activation increment {record.activation_increment if record.activation_increment else 'none'}")
    print(f"time total {tot.sum():.2f} s, equilibrium {eq.sum():.2f} s, phase field {ph.sum():.2f} s")
    for mode in ("fem", "ifenn"):
        sel = np.array(record.modes) == mode
        if sel.any():
            print(f"  {mode}: {int(sel.sum())} increments, phase-field stage {ph[sel].mean() * 1e3:.2f} ms/increment")


def cmd_generate(args) -> int:
    cfg = ScenarioConfig.load(args.config)
    out = _out_dir(cfg, args)
    if args.snapshot_every is not None:
        cfg.run.snapshot_every = args.snapshot_every
    rc = cfg.run.run_config(mode="fem", extra_snapshots=cfg.training.increments)
    record = run_fem(cfg.geometry.build(), cfg.material.params(), cfg.schedule.load_schedule(), rc, progress=_progress())
    _write_run(out, cfg, record)
    _print_summary(record)
    print(f"wrote {out}")
    return EXIT_OK


def _training_maps(cfg: ScenarioConfig, args, out: Path):
    if args.snapshots:
        files = [Path(p) for p in args.snapshots]
    else:
        index = read_snapshot_index(out)
        files = []
        for k in cfg.training.increments:
            if (k, "H") not in index:
                raise InputError(f"no H snapshot for increment {k} in {out}; run 'generate' first")
            files.append(index[(k, "H")])
    snaps = []
    for f in files:
        try:
            snaps.append(read_snapshot(f))
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"cannot read snapshot {f}: {exc}") from exc
    shapes = {s.grid.values.shape for s in snaps}
    if len(shapes) != 1:
        raise InputError(f"training snapshots have different shapes: {sorted(shapes)}")
    hs = {s.grid.h_px for s in snaps}
    if len(hs) != 1:
        raise InputError(f"training snapshots have different pixel spacings: {sorted(hs)}")
    return np.stack([s.grid.values for s in snaps]), hs.pop(), [str(f) for f in files]


def _model_path(cfg: ScenarioConfig, args, out: Path) -> Path:
    if args.model:
        return Path(args.model)
    if cfg.paths.model_file:
        return Path(cfg.paths.model_file)
    return out / "model.json"


def cmd_train(args) -> int:
    cfg = ScenarioConfig.load(args.config)
    out = _out_dir(cfg, args)
    maps, h_px, files = _training_maps(cfg, args, out)
    if args.seed is not None:
        cfg.training.seed = args.seed
    tc = cfg.training.train_config(cfg.run.conditioning.h_cap)
    model = PicnnModel(tc.channels, seed=tc.seed, dtype=tc.torch_dtype)
    every = max(1, tc.epochs // 20) if tc.epochs else 0
    res = train(model, maps, cfg.material.params(), h_px, tc, log_every=every, log=log.info)
    h = cfg.hash()
    path = _model_path(cfg, args, out)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, path, {"tool": f"ifenn {__version__}", "config": h, "seed": tc.seed,
                             "snapshots": [Path(f).name for f in files]})
    write_loss(out / "loss.csv", res.history, h)
    first = res.history[0] if res.history else float("nan")
    print(f"initial loss {first:.6e}")
    print(f"final loss {res.final_loss:.6e} (ratio {res.final_loss / first:.4e})")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = ScenarioConfig.load(args.config)
    out = _out_dir(cfg, args)
    mesh = cfg.geometry.build()
    # overrides go into the config so the written copy and hash describe the actual run
    if args.mode:
        cfg.run.mode = args.mode
    if args.snapshot_every is not None:
        cfg.run.snapshot_every = args.snapshot_every
    rc = cfg.run.run_config()
    if rc.mode == "ifenn":
        path = _model_path(cfg, args, out)
        if not path.exists():
            raise InputError(f"ifenn mode needs a trained model; {path} does not exist (pass --model)")
        model = load_model(path)
        try:
            _check_model(model, mesh)
        except RunError as exc:
            raise InputError(str(exc)) from exc
        record = run_ifenn(mesh, cfg.material.params(), cfg.schedule.load_schedule(), rc, model, progress=_progress())
    else:
        record = run_fem(mesh, cfg.material.params(), cfg.schedule.load_schedule(), rc, progress=_progress())
    _write_run(out, cfg, record)
    _print_summary(record)
    print(f"wrote {out}")
    return EXIT_OK


def load_run_table(run_dir) -> RunTable:
    run_dir = Path(run_dir)
    try:
        cols, _ = read_table(run_dir / "reaction.csv")
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read {run_dir / 'reaction.csv'}: {exc}") from exc
    phi = {k: read_snapshot(p).grid.values for (k, f), p in read_snapshot_index(run_dir).items() if f == "phi"}
    return RunTable(cols["increment"].astype(int), cols["u"], cols["F"], cols["tip_col"].astype(int),
                    [str(m) for m in cols["mode"]], phi)


def cmd_compare(args) -> int:
    a, b = load_run_table(args.run_a), load_run_table(args.run_b)
    report = compare_runs(a, b, tuple(args.window) if args.window else None)
    text = json.dumps(report, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    r, pp = report["reaction"], report["pre_peak"]
    print(f"peak A {report['peak_a']['F']:.6g} N, peak B {report['peak_b']['F']:.6g} N, rel diff {report['peak_rel_diff']:.4%}")
    print(f"reaction |dF| max {r['max_abs']:.6g} mean {r['mean_abs']:.6g} over {r['n']} increments")
    if pp:
        print(f"pre-peak |dF| max {pp['max_abs']:.6g} mean {pp['mean_abs']:.6g}")
    print(f"crack-tip max column difference (90% of propagation): {report['tip_col_max_diff']}")
    for k, d in report["phi"].items():
        print(f"phi @ {k}: rel L2 {d['rel_l2']:.4e}  Linf {d['linf']:.4e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ifenn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ifenn {__version__}")
    p.add_argument("-q", "--quiet", action="store_true", help="only print the final summary")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="FEM-only run that writes training snapshots")
    g.add_argument("--config", required=True)
    g.add_argument("--out")
    g.add_argument("--snapshot-every", type=int, default=None, metavar="K")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train the network on history snapshots")
    t.add_argument("--config", required=True)
    t.add_argument("--out")
    t.add_argument("--model", help="output model path (default: paths.model_file or OUT/model.json)")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("snapshots", nargs="*", help="H snapshot files (default: from OUT/snapshots.csv)")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("run", help="run a scenario in fem or ifenn mode")
    r.add_argument("--config", required=True)
    r.add_argument("--model")
    r.add_argument("--mode", choices=("fem", "ifenn"), help="override run.mode from the config")
    r.add_argument("--out")
    r.add_argument("--snapshot-every", type=int, default=None, metavar="K")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="compare two run directories")
    c.add_argument("run_a")
    c.add_argument("run_b")
    c.add_argument("--window", type=float, nargs=2, metavar=("U_LO", "U_HI"))
    c.add_argument("--out", help="write the JSON report here")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    if getattr(args, "snapshot_every", None) is not None and args.snapshot_every < 0:
        print("error: --snapshot-every must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, InputError, CompareError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, RunError, TrainingError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
