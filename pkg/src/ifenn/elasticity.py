"""Plane-strain equilibrium with phase-field degraded stiffness.

Strains are stored per Gauss point as tensor components ``(exx, eyy, exy)``
(tensor, not engineering, shear). The hybrid formulation degrades the full
isotropic stiffness with ``g(phi)`` while only the tensile energy from the
spectral split drives the phase field.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import StructuredMesh, shape_functions

K_RES = 1e-6
SINGULAR_PIVOT = 1e-12


class SolverError(RuntimeError):
    """Linear solve failed or produced a non-finite/inaccurate solution."""


@dataclass(frozen=True)
class MaterialParams:
    lam: float  # first Lame constant, N/mm^2
    mu: float  # shear modulus, N/mm^2
    gc: float  # critical energy release rate, N/mm
    lc: float  # characteristic length, mm

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.lam > -2.0 / 3.0 * self.mu:
            raise ValueError(f"lambda must exceed -2/3 mu, got {self.lam}")
        if not self.gc > 0:
            raise ValueError(f"gc must be positive, got {self.gc}")
        if not self.lc > 0:
            raise ValueError(f"lc must be positive, got {self.lc}")

    @property
    def plane_strain_modulus(self) -> float:
        """E / (1 - nu^2): uniaxial stiffness with free lateral contraction."""
        return 4.0 * self.mu * (self.lam + self.mu) / (self.lam + 2.0 * self.mu)


@dataclass(frozen=True)
class Dirichlet:
    dofs: np.ndarray
    values: np.ndarray

    @classmethod
    def empty(cls) -> "Dirichlet":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0))

    def __add__(self, other: "Dirichlet") -> "Dirichlet":
        dofs = np.concatenate([self.dofs, other.dofs])
        values = np.concatenate([self.values, other.values])
        # later entries win on duplicates
        _, last = np.unique(dofs[::-1], return_index=True)
        keep = np.sort(len(dofs) - 1 - last)
        return Dirichlet(dofs[keep], values[keep])


def boundary_dirichlet(mesh: StructuredMesh, set_name: str, component: int, value: float) -> Dirichlet:
    nodes = mesh.boundary_sets[set_name]
    return Dirichlet(2 * nodes + component, np.full(len(nodes), float(value)))


@dataclass
class GpElasticFields:
    strain: np.ndarray  # (n_elem, 4, 3)
    psi_plus: np.ndarray  # (n_elem, 4)
    psi_minus: np.ndarray
    history: np.ndarray


@dataclass
class DisplacementState:
    u: np.ndarray
    dirichlet: Dirichlet
    reactions: dict[str, np.ndarray]  # boundary set -> (Fx, Fy)
    residual: float
    iterations: int = 0


@dataclass
class EquilibriumSystem:
    matrix: sp.csr_matrix  # reduced to free dofs
    rhs: np.ndarray
    full: sp.csr_matrix
    free: np.ndarray
    dirichlet: Dirichlet
    boundary_sets: dict[str, np.ndarray] = field(repr=False)


def plane_strain_matrix(mat: MaterialParams) -> np.ndarray:
    lam, mu = mat.lam, mat.mu
    return np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])


def degradation(phi: np.ndarray, k_res: float = K_RES) -> np.ndarray:
    return (1.0 - k_res) * (1.0 - phi) ** 2 + k_res


def strain_displacement(elem_size: float) -> np.ndarray:
    """B matrices at the 4 Gauss points, shape (4, 3, 8), engineering shear row."""
    _, dN, _ = shape_functions(elem_size)
    B = np.zeros((4, 3, 8))
    B[:, 0, 0::2] = dN[:, 0]
    B[:, 1, 1::2] = dN[:, 1]
    B[:, 2, 0::2] = dN[:, 1]
    B[:, 2, 1::2] = dN[:, 0]
    return B


def _elem_dofs(mesh: StructuredMesh) -> np.ndarray:
    c = mesh.elem_connectivity
    return np.stack([2 * c, 2 * c + 1], axis=2).reshape(mesh.n_elem, 8)


class SparsePattern:
    """Fixed CSR structure for repeated assembly of element matrices.

    Element contributions ``(n_elem, k, k)`` are scattered with a single
    bincount into precomputed slots.
    """

    def __init__(self, elem_dofs: np.ndarray, n_dof: int):
        k = elem_dofs.shape[1]
        rows = np.repeat(elem_dofs, k, axis=1).ravel()
        cols = np.tile(elem_dofs, (1, k)).ravel()
        key = rows.astype(np.int64) * n_dof + cols
        uniq, self.slot = np.unique(key, return_inverse=True)
        self.indices = (uniq % n_dof).astype(np.int32)
        urows = uniq // n_dof
        self.indptr = np.zeros(n_dof + 1, dtype=np.int64)
        np.add.at(self.indptr, urows + 1, 1)
        self.indptr = np.cumsum(self.indptr).astype(np.int32)
        self.n_dof = n_dof
        self.elem_dofs = elem_dofs

    def assemble(self, ke: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.slot, weights=ke.ravel(), minlength=len(self.indices))
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=(self.n_dof, self.n_dof))

    def assemble_vector(self, fe: np.ndarray) -> np.ndarray:
        return np.bincount(self.elem_dofs.ravel(), weights=fe.ravel(), minlength=self.n_dof)


@lru_cache(maxsize=16)
def _vector_pattern(mesh: StructuredMesh) -> SparsePattern:
    return SparsePattern(_elem_dofs(mesh), 2 * mesh.n_nodes)


@lru_cache(maxsize=16)
def _gp_stiffness(elem_size: float, lam: float, mu: float) -> np.ndarray:
    """Per-Gauss-point undamaged stiffness contributions B^T D B w, shape (4, 8, 8)."""
    B = strain_displacement(elem_size)
    D = plane_strain_matrix(MaterialParams(lam, mu, 1.0, 1.0))
    _, _, w = shape_functions(elem_size)
    return np.einsum("qia,ij,qjb,q->qab", B, D, B, w)


def element_stiffness(mesh: StructuredMesh, mat: MaterialParams, phi_gp: np.ndarray, k_res: float = K_RES) -> np.ndarray:
    """Degraded element stiffness matrices, shape (n_elem, 8, 8)."""
    kq = _gp_stiffness(mesh.elem_size, mat.lam, mat.mu)
    g = degradation(np.asarray(phi_gp, dtype=float).reshape(mesh.n_elem, 4), k_res)
    return np.einsum("eq,qab->eab", g, kq)


def assemble_equilibrium(
    mesh: StructuredMesh,
    mat: MaterialParams,
    phi_gp: np.ndarray,
    dirichlet: Dirichlet,
    k_res: float = K_RES,
) -> EquilibriumSystem:
    """Assemble the degraded stiffness and eliminate prescribed dofs.

    Body forces are zero and the free boundary is traction free, so the load
    vector comes only from the prescribed displacements.
    """
    phi_gp = np.asarray(phi_gp, dtype=float)
    if phi_gp.size != mesh.n_gp:
        raise ValueError(f"phi_gp has {phi_gp.size} values, mesh has {mesh.n_gp} Gauss points")
    pattern = _vector_pattern(mesh)
    K = pattern.assemble(element_stiffness(mesh, mat, phi_gp, k_res))
    n_dof = pattern.n_dof
    is_fixed = np.zeros(n_dof, dtype=bool)
    is_fixed[dirichlet.dofs] = True
    free = np.flatnonzero(~is_fixed)
    u_fixed = np.zeros(n_dof)
    u_fixed[dirichlet.dofs] = dirichlet.values
    rhs = -(K @ u_fixed)[free]
    K_ff = K[free][:, free].tocsc()
    return EquilibriumSystem(K_ff, rhs, K, free, dirichlet, mesh.boundary_sets)


def solve_equilibrium(system: EquilibriumSystem, method: str = "direct", tol: float = 1e-10, maxiter: int = 20000) -> DisplacementState:
    """Solve for nodal displacements and boundary reaction resultants."""
    n_dof = system.full.shape[0]
    u = np.zeros(n_dof)
    u[system.dirichlet.dofs] = system.dirichlet.values
    iterations = 0
    if len(system.free):
        u_free, iterations = _linear_solve(system.matrix, system.rhs, method, tol, maxiter)
        u[system.free] = u_free
        res = np.linalg.norm(system.matrix @ u_free - system.rhs)
        scale = np.linalg.norm(system.rhs)
        rel = res / scale if scale > 0 else res
        limit = 1e-8 if method == "direct" else 10 * tol
        if not np.isfinite(rel) or rel > limit:
            raise SolverError(f"equilibrium solve inaccurate: relative residual {rel:.3e}")
    else:
        rel = 0.0
    r = system.full @ u
    fixed = np.zeros(n_dof, dtype=bool)
    fixed[system.dirichlet.dofs] = True
    reactions = {}
    for name, nodes in system.boundary_sets.items():
        f = np.zeros(2)
        for c in (0, 1):
            d = 2 * nodes + c
            d = d[fixed[d]]
            f[c] = r[d].sum()
        reactions[name] = f
    return DisplacementState(u, system.dirichlet, reactions, float(rel), iterations)


def _linear_solve(A: sp.spmatrix, b: np.ndarray, method: str, tol: float, maxiter: int):
    if method == "direct":
        try:
            lu = spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SolverError(f"factorization failed ({exc}); unconstrained region?") from exc
        # SuperLU happily factors a singular matrix when the rhs is consistent;
        # a vanishing pivot is the reliable signal (damaged zones sit near k_res ~ 1e-6)
        piv = np.abs(lu.U.diagonal())
        if piv.size and piv.min() <= SINGULAR_PIVOT * piv.max():
            raise SolverError(
                f"matrix is numerically singular (pivot ratio {piv.min() / piv.max():.1e}); unconstrained region?")
        x = lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SolverError("factorization produced non-finite values; unconstrained region?")
        return x, 1
    if method == "cg":
        diag = A.diagonal()
        if np.any(diag <= 0):
            raise SolverError("non-positive diagonal; system is not SPD")
        M = sp.diags(1.0 / diag)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=maxiter, M=M, callback=cb)
        if info != 0:
            raise SolverError(f"conjugate gradient did not converge after {count[0]} iterations")
        return x, count[0]
    raise ValueError(f"unknown linear solver {method!r}")


def gp_strains(mesh: StructuredMesh, u: np.ndarray) -> np.ndarray:
    """Tensor strain components (exx, eyy, exy) at every Gauss point, (n_elem, 4, 3)."""
    B = strain_displacement(mesh.elem_size)
    ue = u[_elem_dofs(mesh)]
    eps = np.einsum("qia,ea->eqi", B, ue)
    eps[..., 2] *= 0.5
    return eps


def spectral_split(strain: np.ndarray, mat: MaterialParams):
    """Tensile and compressive strain energy densities.

    ``strain`` has trailing axis ``(exx, eyy, exy)``. Principal strains of the
    2x2 tensor are split by sign; with plane strain the out-of-plane principal
    strain is zero and contributes nothing.
    """
    strain = np.asarray(strain, dtype=float)
    exx, eyy, exy = strain[..., 0], strain[..., 1], strain[..., 2]
    tr = exx + eyy
    mean = 0.5 * tr
    rad = np.hypot(0.5 * (exx - eyy), exy)
    e1, e2 = mean + rad, mean - rad
    pos = lambda x: np.maximum(x, 0.0)  # noqa: E731
    neg = lambda x: np.minimum(x, 0.0)  # noqa: E731
    psi_plus = 0.5 * mat.lam * pos(tr) ** 2 + mat.mu * (pos(e1) ** 2 + pos(e2) ** 2)
    psi_minus = 0.5 * mat.lam * neg(tr) ** 2 + mat.mu * (neg(e1) ** 2 + neg(e2) ** 2)
    return psi_plus, psi_minus


def strain_energy(strain: np.ndarray, mat: MaterialParams) -> np.ndarray:
    """Undamaged energy density lambda/2 tr(e)^2 + mu e:e."""
    strain = np.asarray(strain, dtype=float)
    exx, eyy, exy = strain[..., 0], strain[..., 1], strain[..., 2]
    return 0.5 * mat.lam * (exx + eyy) ** 2 + mat.mu * (exx**2 + eyy**2 + 2 * exy**2)


def update_history(history: np.ndarray, psi_plus_new: np.ndarray) -> np.ndarray:
    return np.maximum(history, psi_plus_new)


def elastic_fields(mesh: StructuredMesh, mat: MaterialParams, u: np.ndarray, history: np.ndarray) -> GpElasticFields:
    eps = gp_strains(mesh, u)
    pp, pm = spectral_split(eps, mat)
    return GpElasticFields(eps, pp, pm, update_history(history, pp))
