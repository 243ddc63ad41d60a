"""Run the acceptance suite and print its per-criterion summary.

Usage: python3 scripts/run_acceptance.py [--quick] [extra pytest args]

--quick skips the desk-scale criteria (7-11), which need about 50 minutes
the first time and reuse cached results afterwards.
"""
from __future__ import annotations

import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    args = sys.argv[1:]
    select = []
    if "--quick" in args:
        args.remove("--quick")
        select = ["-k", "not (07 or 08 or 09 or 10 or 11)"]
    return pytest.main([str(ROOT / "tests" / "test_acceptance.py"), "-q", "-p", "no:cacheprovider", *select, *args])


if __name__ == "__main__":
    sys.exit(main())
