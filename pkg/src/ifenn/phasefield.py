"""Finite-element solve of the AT2 phase-field equation driven by the history field.

With ``g(phi) = (1 - phi)^2`` the strong form
``-gc lc lap(phi) + (gc/lc) phi - 2 (1 - phi) H = 0`` is linear in phi:
``(gc/lc + 2H) phi - gc lc lap(phi) = 2H``, with zero normal flux on the
whole boundary (no boundary terms in the weak form).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .elasticity import MaterialParams, SolverError, SparsePattern, _linear_solve
from .mesh import StructuredMesh, shape_functions


@dataclass
class PhaseFieldState:
    phi_nodal: np.ndarray
    phi_gp: np.ndarray  # (n_elem, 4)
    raw_min: float  # before clamping
    raw_max: float
    residual: float


@dataclass
class PhaseFieldSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    mesh: StructuredMesh
    fixed_nodes: np.ndarray
    fixed_values: np.ndarray


@lru_cache(maxsize=16)
def _scalar_pattern(mesh: StructuredMesh) -> SparsePattern:
    return SparsePattern(np.asarray(mesh.elem_connectivity), mesh.n_nodes)


@lru_cache(maxsize=16)
def _gp_operators(elem_size: float):
    N, dN, w = shape_functions(elem_size)
    mass = np.einsum("qa,qb,q->qab", N, N, w)
    stiff = np.einsum("qia,qib,q->qab", dN, dN, w)
    return N, w, mass, stiff


def assemble_phasefield(
    mesh: StructuredMesh,
    mat: MaterialParams,
    history: np.ndarray,
    fixed_nodes=None,
    fixed_values=None,
    mass: str = "lumped",
) -> PhaseFieldSystem:
    """Assemble the linear phase-field system for a given history field.

    ``mass="lumped"`` row-sums the reaction and source terms onto the nodes.
    Together with the non-positive off-diagonals of the bilinear Laplacian on
    squares this gives an M-matrix, so the solution stays inside
    ``[0, max 2H/(gc/lc + 2H)]``. ``mass="consistent"`` is the plain Galerkin
    form, which overshoots 1 by up to ~1% ahead of a sharp crack.

    ``fixed_nodes``/``fixed_values`` optionally prescribe nodal phi (used for
    verification problems; the fracture runs have none).
    """
    H = np.asarray(history, dtype=float).reshape(mesh.n_elem, 4)
    if np.any(H < 0):
        raise ValueError("history field must be non-negative")
    N, w, mass_q, stiff = _gp_operators(mesh.elem_size)
    react = mat.gc / mat.lc + 2.0 * H
    if mass == "consistent":
        ke = np.einsum("eq,qab->eab", react, mass_q)
    elif mass == "lumped":
        diag = np.einsum("eq,qa,q->ea", react, N, w)
        ke = np.zeros((mesh.n_elem, 4, 4))
        ke[:, np.arange(4), np.arange(4)] = diag
    else:
        raise ValueError(f"unknown mass treatment {mass!r}")
    ke += mat.gc * mat.lc * stiff.sum(axis=0)[None]
    fe = 2.0 * np.einsum("eq,qa,q->ea", H, N, w)
    pattern = _scalar_pattern(mesh)
    A = pattern.assemble(ke)
    b = pattern.assemble_vector(fe)
    fixed_nodes = np.zeros(0, dtype=np.int64) if fixed_nodes is None else np.asarray(fixed_nodes, dtype=np.int64)
    fixed_values = np.zeros(len(fixed_nodes)) if fixed_values is None else np.broadcast_to(
        np.asarray(fixed_values, dtype=float), fixed_nodes.shape).copy()
    return PhaseFieldSystem(A, b, mesh, fixed_nodes, fixed_values)


def solve_phasefield(system: PhaseFieldSystem, method: str = "direct", tol: float = 1e-10, clamp: bool = True) -> PhaseFieldState:
    mesh = system.mesh
    n = system.matrix.shape[0]
    phi = np.zeros(n)
    phi[system.fixed_nodes] = system.fixed_values
    is_fixed = np.zeros(n, dtype=bool)
    is_fixed[system.fixed_nodes] = True
    free = np.flatnonzero(~is_fixed)
    A = system.matrix
    rhs = system.rhs[free] - (A @ phi)[free]
    A_ff = A[free][:, free]
    rel = 0.0
    if np.any(rhs != 0):
        x, _ = _linear_solve(A_ff, rhs, method, tol, 20000)
        rel = np.linalg.norm(A_ff @ x - rhs) / np.linalg.norm(rhs)
        if not np.isfinite(rel) or rel > (1e-8 if method == "direct" else 10 * tol):
            raise SolverError(f"phase-field solve inaccurate: relative residual {rel:.3e}")
        phi[free] = x
    raw_min, raw_max = float(phi.min()), float(phi.max())
    if clamp:
        np.clip(phi, 0.0, 1.0, out=phi)
    return PhaseFieldState(phi, nodal_to_gp(mesh, phi), raw_min, raw_max, float(rel))


def nodal_to_gp(mesh: StructuredMesh, phi_nodal: np.ndarray) -> np.ndarray:
    N, _, _, _ = _gp_operators(mesh.elem_size)
    return phi_nodal[mesh.elem_connectivity] @ N.T
