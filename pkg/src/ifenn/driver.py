"""Displacement-driven simulations: FEM-only staggered runs and hybrid FEM/PICNN runs.

A hybrid run starts as a normal FEM run. Once the largest nodal phase field
reaches ``activation_phi`` at the end of an increment, every later increment
replaces the phase-field FEM solve with network inference:

1. equilibrium with the phase field of the previous increment,
2. history update and conversion of the (capped) history to pixels,
3. network prediction, Gaussian smoothing, pixelwise irreversibility,
4. projection of the pixel map back onto the Gauss points,
5. optional fixed-point re-iteration of steps 1-4.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .elasticity import (
    Dirichlet, MaterialParams, assemble_equilibrium, boundary_dirichlet,
    gp_strains, solve_equilibrium, spectral_split, update_history,
)
from .mesh import StructuredMesh, gauss_grid, induced_history_mask
from .phasefield import assemble_phasefield, solve_phasefield
from .pixels import (
    ConditioningConfig, PixelGrid, cap_field, enforce_irreversibility,
    gaussian_smooth, gp_to_pixels, pixels_to_gp,
)

log = logging.getLogger(__name__)

AXES = {"x": 0, "y": 1}
OUTWARD = {"top": 1.0, "right": 1.0, "bottom": -1.0, "left": -1.0}
INDUCED_HISTORY = 1e6


class RunError(RuntimeError):
    def __init__(self, msg, increment=None):
        super().__init__(msg if increment is None else f"increment {increment}: {msg}")
        self.increment = increment


@dataclass(frozen=True)
class LoadSchedule:
    """Monotonic displacement steps applied to one boundary set.

    ``segments`` lists ``(count, delta_u)`` pairs. The loaded set moves
    outward along ``axis``; its transverse displacement and both components on
    the fixed set are held at zero.
    """

    segments: tuple = ((350, 2e-5),)
    loaded: str = "top"
    fixed: str = "bottom"
    axis: str = "y"

    def __post_init__(self):
        segs = tuple((int(n), float(du)) for n, du in self.segments)
        object.__setattr__(self, "segments", segs)
        for n, du in segs:
            if n < 0:
                raise ValueError(f"increment count must be non-negative, got {n}")
            if not du > 0:
                raise ValueError(f"delta_u must be positive, got {du}")
        if self.axis not in AXES:
            raise ValueError(f"axis must be 'x' or 'y', got {self.axis!r}")
        for name in (self.loaded, self.fixed):
            if name not in OUTWARD:
                raise ValueError(f"unknown boundary set {name!r}")
        if self.loaded == self.fixed:
            raise ValueError("loaded and fixed boundaries must differ")

    @property
    def n_increments(self) -> int:
        return sum(n for n, _ in self.segments)

    def displacements(self) -> np.ndarray:
        steps = np.concatenate([np.full(n, du) for n, du in self.segments]) if self.segments else np.zeros(0)
        return np.cumsum(steps)

    def dirichlet(self, mesh: StructuredMesh, u: float) -> Dirichlet:
        a = AXES[self.axis]
        bc = boundary_dirichlet(mesh, self.fixed, 0, 0.0) + boundary_dirichlet(mesh, self.fixed, 1, 0.0)
        bc = bc + boundary_dirichlet(mesh, self.loaded, 1 - a, 0.0)
        return bc + boundary_dirichlet(mesh, self.loaded, a, OUTWARD[self.loaded] * u)


@dataclass(frozen=True)
class RunConfig:
    mode: str = "fem"
    activation_phi: float = 0.99
    staggered: str = "single-pass"
    stag_tol: float | None = None  # fem default 1e-4, ifenn default 1e-3
    stag_max_iters: int = 10
    conditioning: ConditioningConfig = field(default_factory=ConditioningConfig)
    snapshot_increments: tuple = ()
    snapshot_every: int = 0
    linear_solver: str = "direct"
    phasefield_mass: str = "lumped"
    track_rows: tuple | None = None
    tip_threshold: float = 0.9

    def __post_init__(self):
        if self.mode not in ("fem", "ifenn"):
            raise ValueError(f"mode must be 'fem' or 'ifenn', got {self.mode!r}")
        if not 0 < self.activation_phi:
            raise ValueError("activation_phi must be positive")
        if self.staggered not in ("single-pass", "iterate"):
            raise ValueError(f"staggered must be 'single-pass' or 'iterate', got {self.staggered!r}")
        if self.stag_max_iters < 1:
            raise ValueError("stag_max_iters must be at least 1")
        object.__setattr__(self, "snapshot_increments", tuple(int(i) for i in self.snapshot_increments))

    def tolerance(self, mode: str) -> float:
        if self.stag_tol is not None:
            return self.stag_tol
        return 1e-4 if mode == "fem" else 1e-3


@dataclass
class IncrementRecord:
    increment: int
    u: float
    force: float
    mode: str
    stag_iters: int
    phi_max: float
    tip_col: int
    t_equilibrium: float
    t_phase: float
    t_total: float
    reactions: dict = field(default_factory=dict, repr=False)


@dataclass
class RunRecord:
    increments: list[IncrementRecord] = field(default_factory=list)
    snapshots: dict[int, dict[str, PixelGrid]] = field(default_factory=dict)
    activation_increment: int | None = None
    track_rows: tuple = ()
    history: np.ndarray | None = None
    phi_gp: np.ndarray | None = None
    u: np.ndarray | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.increments])

    @property
    def modes(self) -> list[str]:
        return [r.mode for r in self.increments]


def crack_rows(mesh: StructuredMesh) -> tuple:
    """Pixel rows straddling the horizontal notch lines (empty if there are none)."""
    rows = set()
    for n in mesh.notches:
        if n.orientation == "horizontal":
            j = int(round(n.start[1] / mesh.elem_size))
            rows.update((2 * j - 1, 2 * j))
    return tuple(sorted(r for r in rows if 0 <= r < 2 * mesh.ny))


def crack_tip_column(phi_pix: np.ndarray, rows, threshold: float = 0.9) -> int:
    """Rightmost pixel column with phi above ``threshold`` on the given rows, -1 if none."""
    if not len(rows):
        return -1
    hit = np.flatnonzero((np.asarray(phi_pix)[list(rows)] > threshold).any(axis=0))
    return int(hit[-1]) if len(hit) else -1


def reaction_curve(record: RunRecord) -> np.ndarray:
    """Table of (u, F) with F the outward reaction on the loaded boundary."""
    return np.column_stack([record.column("u"), record.column("force")]) if record.increments else np.zeros((0, 2))


def _check_model(model, mesh: StructuredMesh):
    ch = getattr(model, "channels", None)
    if ch is None or ch[0] != 1 or ch[-1] != 1:
        raise RunError(f"model channel plan {ch} cannot map a 1-channel H map to a 1-channel phase field")
    rows, cols = mesh.pixel_shape
    if rows < 2 or cols < 2:
        raise RunError(f"pixel grid {rows}x{cols} is too small for the network")


def run_fem(mesh, mat, schedule, cfg=None, progress=None, monitor=None) -> RunRecord:
    """FEM-only run: staggered equilibrium then phase-field solve every increment.

    ``progress(record)`` gets each IncrementRecord; ``monitor(k, history,
    phi_pix, mode)`` additionally sees the full fields after each increment.
    """
    cfg = cfg or RunConfig(mode="fem")
    return _run(mesh, mat, schedule, cfg, None, False, progress, monitor)


def run_ifenn(mesh, mat, schedule, cfg, model, progress=None, monitor=None) -> RunRecord:
    """Hybrid run; switches from FEM to network inference once at ``cfg.activation_phi``."""
    if cfg.mode != "ifenn":
        raise RunError("run_ifenn needs a config with mode='ifenn'")
    _check_model(model, mesh)
    return _run(mesh, mat, schedule, cfg, model, True, progress, monitor)


def _run(mesh, mat, schedule, cfg, model, allow_switch, progress, monitor) -> RunRecord:
    grid = gauss_grid(mesh)
    rows = tuple(cfg.track_rows) if cfg.track_rows is not None else crack_rows(mesh)
    record = RunRecord(track_rows=rows)
    history = np.where(induced_history_mask(mesh, grid), INDUCED_HISTORY, 0.0)
    phi_gp = np.zeros((mesh.n_elem, 4))
    phi_pix_committed = None
    mode = "fem"
    a = AXES[schedule.axis]
    sign = OUTWARD[schedule.loaded]
    cond = cfg.conditioning
    snap_set = set(cfg.snapshot_increments)
    u_nodes = None

    for k, u in enumerate(schedule.displacements(), start=1):
        t_start = time.perf_counter()
        bc = schedule.dirichlet(mesh, float(u))
        t_eq = t_ph = 0.0
        tol = cfg.tolerance(mode)
        max_iters = 1 if cfg.staggered == "single-pass" else cfg.stag_max_iters
        phi_iter = phi_gp
        iters = 0
        for iters in range(1, max_iters + 1):
            t0 = time.perf_counter()
            try:
                state = solve_equilibrium(
                    assemble_equilibrium(mesh, mat, phi_iter, bc), method=cfg.linear_solver)
            except Exception as exc:
                raise RunError(f"equilibrium failed: {exc}", k) from exc
            psi_plus, _ = spectral_split(gp_strains(mesh, state.u), mat)
            h_trial = update_history(history, psi_plus)
            t1 = time.perf_counter()
            t_eq += t1 - t0
            if mode == "fem":
                try:
                    pf = solve_phasefield(
                        assemble_phasefield(mesh, mat, h_trial, mass=cfg.phasefield_mass),
                        method=cfg.linear_solver)
                except Exception as exc:
                    raise RunError(f"phase-field solve failed: {exc}", k) from exc
                phi_new = pf.phi_gp
                phi_pix = None
                nodal_max = float(pf.phi_nodal.max())
            else:
                try:
                    phi_pix = _infer(model, gp_to_pixels(h_trial, grid), phi_pix_committed, cond)
                except ValueError as exc:
                    raise RunError(f"network inference failed: {exc}", k) from exc
                phi_new = pixels_to_gp(phi_pix, grid)
                nodal_max = float(phi_pix.values.max())
            t_ph += time.perf_counter() - t1
            if not (np.all(np.isfinite(phi_new)) and np.all(np.isfinite(h_trial))):
                raise RunError("non-finite field values", k)
            change = float(np.max(np.abs(phi_new - phi_iter))) if phi_new.size else 0.0
            phi_iter = phi_new
            if cfg.staggered == "single-pass" or change <= tol:
                break

        if np.any(h_trial < history):
            raise RunError("history decreased", k)
        history = h_trial
        phi_gp = phi_iter
        if phi_pix is None:
            phi_pix = gp_to_pixels(phi_gp, grid)
        if mode == "ifenn":
            if cond.enforce_irreversibility and np.any(phi_pix.values < phi_pix_committed.values):
                raise RunError("pixel phase field decreased", k)
            phi_pix_committed = phi_pix
        u_nodes = state.u
        rec = IncrementRecord(
            increment=k, u=float(u), force=float(sign * state.reactions[schedule.loaded][a]),
            mode=mode, stag_iters=iters, phi_max=nodal_max,
            tip_col=crack_tip_column(phi_pix.values, rows, cfg.tip_threshold),
            t_equilibrium=t_eq, t_phase=t_ph, t_total=time.perf_counter() - t_start,
            reactions={n: r.copy() for n, r in state.reactions.items()},
        )
        record.increments.append(rec)
        if k in snap_set or (cfg.snapshot_every and k % cfg.snapshot_every == 0):
            h_pix = gp_to_pixels(history, grid)
            record.snapshots[k] = {
                "H": h_pix,
                "H_capped": cap_field(h_pix, cond.h_cap),
                "phi": phi_pix,
            }
        if progress is not None:
            progress(rec)
        if monitor is not None:
            monitor(k, history, phi_pix, mode)
        if allow_switch and mode == "fem" and nodal_max >= cfg.activation_phi:
            mode = "ifenn"
            record.activation_increment = k
            phi_pix_committed = phi_pix
            log.info("network activated after increment %d (phi_max=%.4f)", k, nodal_max)

    record.history, record.phi_gp, record.u = history, phi_gp, u_nodes
    return record


def _infer(model, h_pix: PixelGrid, phi_prev: PixelGrid | None, cond: ConditioningConfig) -> PixelGrid:
    phi = h_pix.replace(model.predict(cap_field(h_pix, cond.h_cap).values))
    if cond.smooth and cond.smooth_before_irreversibility:
        phi = gaussian_smooth(phi, cond.smooth_kernel_size, cond.smooth_sigma)
    if cond.enforce_irreversibility and phi_prev is not None:
        phi = enforce_irreversibility(phi, phi_prev)
    if cond.smooth and not cond.smooth_before_irreversibility:
        phi = gaussian_smooth(phi, cond.smooth_kernel_size, cond.smooth_sigma)
    return phi
