"""Desk-scale workflow through the CLI: generate, train once, run every desk scenario, compare.

Usage: python3 scripts/desk_pipeline.py [--out out/desk] [--skip-fem]

Expect roughly an hour on one core, most of it in training.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ifenn.cli import main as ifenn

ROOT = Path(__file__).resolve().parent.parent
DESK = ROOT / "configs" / "desk"
SCENARIOS = ("snt1_I", "snt1_II", "snt1_III", "snt_124", "sdnt")


def step(*argv) -> None:
    print("$ ifenn", " ".join(map(str, argv)), flush=True)
    code = ifenn([str(a) for a in argv])
    if code:
        sys.exit(code)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/desk")
    ap.add_argument("--skip-fem", action="store_true", help="only run the hybrid solver")
    args = ap.parse_args()
    out = Path(args.out)
    model = out / "model.json"

    step("generate", "--config", DESK / "snt1_I.yaml", "--out", out / "snt1_I-fem")
    if not model.exists():
        step("train", "--config", DESK / "snt1_I.yaml", "--out", out / "snt1_I-fem", "--model", model)
    for name in SCENARIOS:
        cfg = DESK / f"{name}.yaml"
        step("run", "--config", cfg, "--mode", "ifenn", "--model", model, "--out", out / f"{name}-ifenn")
        fem = out / f"{name}-fem"
        if args.skip_fem:
            continue
        if name != "snt1_I":
            step("run", "--config", cfg, "--mode", "fem", "--out", fem)
        step("compare", fem, out / f"{name}-ifenn", "--out", out / f"{name}-compare.json")


if __name__ == "__main__":
    main()
