"""Quantitative comparison of two runs (typically FEM-only vs hybrid)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class CompareError(ValueError):
    pass


@dataclass
class RunTable:
    """Per-increment data of one run plus whatever phase-field snapshots exist."""

    increment: np.ndarray
    u: np.ndarray
    force: np.ndarray
    tip_col: np.ndarray
    mode: list = field(default_factory=list)
    phi: dict = field(default_factory=dict)  # increment -> 2D array

    @classmethod
    def from_record(cls, record) -> "RunTable":
        phi = {k: s["phi"].values for k, s in record.snapshots.items() if "phi" in s}
        return cls(record.column("increment").astype(int), record.column("u"), record.column("force"),
                   record.column("tip_col").astype(int), record.modes, phi)


def reaction_difference(a: RunTable, b: RunTable, window=None) -> dict:
    """Max/mean |F_a - F_b| over a displacement window (inclusive; whole run if None)."""
    _check_schedules(a, b)
    mask = np.ones(len(a.u), dtype=bool)
    if window is not None:
        lo, hi = window
        mask = (a.u >= lo) & (a.u <= hi)
    diff = np.abs(a.force - b.force)[mask]
    return {
        "window": [float(a.u[mask][0]), float(a.u[mask][-1])] if mask.any() else None,
        "n": int(mask.sum()),
        "max_abs": float(diff.max()) if diff.size else 0.0,
        "mean_abs": float(diff.mean()) if diff.size else 0.0,
    }


def peak(t: RunTable) -> tuple[int, float, float]:
    """(increment, u, F) at the maximum reaction."""
    i = int(np.argmax(t.force))
    return int(t.increment[i]), float(t.u[i]), float(t.force[i])


def compare_runs(a: RunTable, b: RunTable, window=None) -> dict:
    _check_schedules(a, b)
    pa, pb = peak(a), peak(b)
    fields = {}
    for k in sorted(set(a.phi) & set(b.phi)):
        pa_, pb_ = a.phi[k], b.phi[k]
        if pa_.shape != pb_.shape:
            raise CompareError(f"phi snapshot shapes differ at increment {k}: {pa_.shape} vs {pb_.shape}")
        d = pa_ - pb_
        ref = np.linalg.norm(pa_)
        fields[int(k)] = {
            "l2": float(np.linalg.norm(d)),
            "rel_l2": float(np.linalg.norm(d) / ref) if ref > 0 else float(np.linalg.norm(d)),
            "linf": float(np.abs(d).max()),
        }
    return {
        "n_increments": int(len(a.u)),
        "peak_a": {"increment": pa[0], "u": pa[1], "F": pa[2]},
        "peak_b": {"increment": pb[0], "u": pb[1], "F": pb[2]},
        "peak_rel_diff": abs(pb[2] - pa[2]) / abs(pa[2]) if pa[2] else 0.0,
        "reaction": reaction_difference(a, b, window),
        "pre_peak": reaction_difference(a, b, (float(a.u[0]), pa[1])) if len(a.u) else None,
        "tip_col": {"a": a.tip_col.tolist(), "b": b.tip_col.tolist()},
        "tip_col_max_diff": tip_agreement(a, b),
        "phi": fields,
    }


def propagation_span(t: RunTable) -> tuple[int, int]:
    """Index range [first, last] over which the tracked crack tip advances."""
    tips = t.tip_col
    if not len(tips) or tips.max() < 0:
        return (0, -1)
    first = int(np.flatnonzero(tips >= 0)[0])
    last = int(np.flatnonzero(tips == tips.max())[0])
    return first, last


def tip_agreement(a: RunTable, b: RunTable, fraction: float = 0.9) -> int | None:
    """Largest |tip_a - tip_b| over the first ``fraction`` of ``a``'s propagation (pixels)."""
    first, last = propagation_span(a)
    if last < first:
        return None
    stop = first + int(np.floor(fraction * (last - first)))
    d = np.abs(a.tip_col[first:stop + 1] - b.tip_col[first:stop + 1])
    return int(d.max())


def _check_schedules(a: RunTable, b: RunTable):
    if len(a.u) != len(b.u):
        raise CompareError(f"runs have different increment counts ({len(a.u)} vs {len(b.u)})")
    if not np.allclose(a.u, b.u, rtol=1e-12, atol=1e-15):
        raise CompareError("runs were driven by different displacement schedules")
