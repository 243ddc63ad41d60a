import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ifenn.elasticity import (
    K_RES, Dirichlet, MaterialParams, SolverError, assemble_equilibrium, boundary_dirichlet,
    degradation, element_stiffness, gp_strains, solve_equilibrium, spectral_split,
    strain_energy, update_history,
)
from ifenn.mesh import build_mesh

finite = st.floats(-1e-2, 1e-2, allow_nan=False, allow_infinity=False)


def _scalar_split(exx, eyy, exy, lam, mu):
    # independent route: numpy eigendecomposition of the 2x2 tensor
    w = np.linalg.eigvalsh(np.array([[exx, exy], [exy, eyy]]))
    tr = exx + eyy
    pp = 0.5 * lam * max(tr, 0) ** 2 + mu * sum(max(x, 0) ** 2 for x in w)
    pm = 0.5 * lam * min(tr, 0) ** 2 + mu * sum(min(x, 0) ** 2 for x in w)
    return pp, pm


def test_split_of_zero_strain(steel):
    pp, pm = spectral_split(np.zeros(3), steel)
    assert pp == 0 and pm == 0


def test_split_uniaxial_value(steel):
    pp, pm = spectral_split(np.array([1e-3, 0.0, 0.0]), steel)
    # (lambda/2 + mu) e^2, evaluated by hand: (60577 + 80770) * 1e-6
    assert pp == pytest.approx(0.141347, rel=1e-12)
    assert pm == 0.0
    assert pp == pytest.approx(_scalar_split(1e-3, 0, 0, steel.lam, steel.mu)[0], rel=1e-14)


def test_split_pure_shear_value(steel):
    pp, pm = spectral_split(np.array([0.0, 0.0, 5e-4]), steel)
    assert pp == pytest.approx(2.01925e-2, rel=1e-12)
    assert pm == pytest.approx(2.01925e-2, rel=1e-12)


def test_split_sums_and_rotation_invariance(steel, rng):
    eps = rng.uniform(-1e-2, 1e-2, size=(10_000, 3))
    pp, pm = spectral_split(eps, steel)
    total = strain_energy(eps, steel)
    assert np.max(np.abs(pp + pm - total) / total) <= 1e-10
    theta = rng.uniform(0, 2 * np.pi, size=len(eps))
    c, s = np.cos(theta), np.sin(theta)
    exx, eyy, exy = eps.T
    rot = np.stack([
        c * c * exx + s * s * eyy + 2 * c * s * exy,
        s * s * exx + c * c * eyy - 2 * c * s * exy,
        (c * c - s * s) * exy + c * s * (eyy - exx),
    ], axis=1)
    qp, qm = spectral_split(rot, steel)
    scale = np.maximum(total, 1e-300)
    assert np.max(np.abs(qp - pp) / scale) <= 1e-10
    assert np.max(np.abs(qm - pm) / scale) <= 1e-10


@settings(max_examples=200, deadline=None)
@given(exx=finite, eyy=finite, exy=finite)
def test_split_matches_eigen_route(exx, eyy, exy):
    mat = MaterialParams(121154.0, 80770.0, 2.7, 0.03)
    pp, pm = spectral_split(np.array([exx, eyy, exy]), mat)
    qp, qm = _scalar_split(exx, eyy, exy, mat.lam, mat.mu)
    assert pp >= 0 and pm >= 0
    assert pp == pytest.approx(qp, rel=1e-9, abs=1e-20)
    assert pm == pytest.approx(qm, rel=1e-9, abs=1e-20)


def test_material_invariants():
    with pytest.raises(ValueError):
        MaterialParams(1.0, 0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        MaterialParams(-1.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        MaterialParams(1.0, 1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        MaterialParams(1.0, 1.0, 1.0, -1.0)


def _hand_element_stiffness(lam, mu, h):
    """Loop-based 2x2 Gauss assembly of one square bilinear element."""
    D = np.array([[lam + 2 * mu, lam, 0], [lam, lam + 2 * mu, 0], [0, 0, mu]], dtype=float)
    corners = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
    K = np.zeros((8, 8))
    g = 1 / math.sqrt(3)
    for xi in (-g, g):
        for eta in (-g, g):
            B = np.zeros((3, 8))
            for a, (xa, ya) in enumerate(corners):
                dxi = 0.25 * xa * (1 + eta * ya)
                deta = 0.25 * ya * (1 + xi * xa)
                dx, dy = dxi * 2 / h, deta * 2 / h
                B[0, 2 * a] = dx
                B[1, 2 * a + 1] = dy
                B[2, 2 * a] = dy
                B[2, 2 * a + 1] = dx
            K += B.T @ D @ B * (h / 2) ** 2
    return K


def test_single_element_stiffness_matches_hand_assembly():
    mesh = build_mesh(1.0, 1.0, 1, 1)
    mat = MaterialParams(0.0, 1.0, 1.0, 1.0)
    K = element_stiffness(mesh, mat, np.zeros(4), k_res=0.0)[0]
    ref = _hand_element_stiffness(0.0, 1.0, 1.0)
    assert np.allclose(K, ref, rtol=0, atol=1e-14)
    # textbook values for E = 2, nu = 0: diagonal E/2, (u1, v1) coupling E/8
    assert np.allclose(np.diag(K), 1.0)
    assert K[0, 1] == pytest.approx(0.25)
    # three rigid-body modes
    assert np.sum(np.abs(np.linalg.eigvalsh(K)) < 1e-12) == 3


def test_degradation_endpoints():
    assert degradation(np.array(0.0)) == 1.0
    assert degradation(np.array(1.0)) == pytest.approx(K_RES)


@pytest.mark.parametrize("phi", [0.0, 0.3, 1.0])
def test_uniform_damage_scales_stiffness(steel, phi):
    mesh = build_mesh(1.0, 1.0, 4, 4)
    bc = Dirichlet.empty()
    K0 = assemble_equilibrium(mesh, steel, np.zeros(mesh.n_gp), bc).full
    K = assemble_equilibrium(mesh, steel, np.full(mesh.n_gp, phi), bc).full
    g = (1 - K_RES) * (1 - phi) ** 2 + K_RES
    assert abs(K - g * K0).max() <= 1e-12 * abs(K0).max()


def _uniaxial(mesh, u_top):
    bc = boundary_dirichlet(mesh, "bottom", 1, 0.0) + boundary_dirichlet(mesh, "top", 1, u_top)
    corner = np.intersect1d(mesh.boundary_sets["bottom"], mesh.boundary_sets["left"])
    return bc + Dirichlet(2 * corner, np.zeros(1))


def test_uniaxial_reaction_closed_form(steel):
    mesh = build_mesh(2.0, 1.0, 8, 4)
    u_top = 1e-3
    st_ = solve_equilibrium(assemble_equilibrium(mesh, steel, np.zeros(mesh.n_gp), _uniaxial(mesh, u_top)))
    expected = steel.plane_strain_modulus * u_top * mesh.lx / mesh.ly
    assert st_.reactions["top"][1] == pytest.approx(expected, rel=1e-10)
    assert st_.reactions["bottom"][1] == pytest.approx(-expected, rel=1e-10)
    assert st_.residual <= 1e-10


def test_prescribed_values_held_exactly(steel):
    mesh = build_mesh(1.0, 1.0, 5, 5)
    bc = _uniaxial(mesh, 3.7e-4)
    st_ = solve_equilibrium(assemble_equilibrium(mesh, steel, np.zeros(mesh.n_gp), bc))
    assert np.array_equal(st_.u[bc.dofs], bc.values)


def test_homogeneous_problem_has_zero_solution(steel):
    mesh = build_mesh(1.0, 1.0, 3, 3)
    bc = boundary_dirichlet(mesh, "bottom", 0, 0.0) + boundary_dirichlet(mesh, "bottom", 1, 0.0)
    st_ = solve_equilibrium(assemble_equilibrium(mesh, steel, np.zeros(mesh.n_gp), bc))
    assert np.all(st_.u == 0)
    assert all(np.all(r == 0) for r in st_.reactions.values())


def test_patch_test_constant_strain(steel):
    mesh = build_mesh(1.0, 1.0, 6, 6)
    A = np.array([[2e-4, -1e-4], [3e-4, 5e-4]])
    nodes = np.unique(np.concatenate(list(mesh.boundary_sets.values())))
    disp = mesh.node_coords[nodes] @ A.T
    bc = Dirichlet(np.concatenate([2 * nodes, 2 * nodes + 1]), np.concatenate([disp[:, 0], disp[:, 1]]))
    st_ = solve_equilibrium(assemble_equilibrium(mesh, steel, np.zeros(mesh.n_gp), bc))
    eps = gp_strains(mesh, st_.u)
    expected = [A[0, 0], A[1, 1], 0.5 * (A[0, 1] + A[1, 0])]
    assert np.max(np.abs(eps - expected)) <= 1e-10 * np.abs(A).max() + 1e-16


def test_reactions_balance(steel, rng):
    mesh = build_mesh(1.0, 1.0, 6, 6)
    phi = rng.uniform(0, 0.9, mesh.n_gp)
    bc = (boundary_dirichlet(mesh, "bottom", 0, 0.0) + boundary_dirichlet(mesh, "bottom", 1, 0.0)
          + boundary_dirichlet(mesh, "top", 0, 2e-4) + boundary_dirichlet(mesh, "top", 1, 1e-3))
    st_ = solve_equilibrium(assemble_equilibrium(mesh, steel, phi, bc))
    total = st_.reactions["top"] + st_.reactions["bottom"]
    assert np.max(np.abs(total)) <= 1e-8 * np.abs(st_.reactions["top"]).max()


def test_cg_agrees_with_direct(steel):
    mesh = build_mesh(1.0, 1.0, 10, 10)
    sys_ = assemble_equilibrium(mesh, steel, np.zeros(mesh.n_gp), _uniaxial(mesh, 1e-3))
    a = solve_equilibrium(sys_, "direct")
    b = solve_equilibrium(sys_, "cg", tol=1e-12)
    assert np.allclose(a.u, b.u, rtol=0, atol=1e-12)
    assert b.iterations > 0


def test_unconstrained_system_fails(steel):
    mesh = build_mesh(1.0, 1.0, 2, 2)
    sys_ = assemble_equilibrium(mesh, steel, np.zeros(mesh.n_gp), boundary_dirichlet(mesh, "top", 1, 1e-3))
    with pytest.raises(SolverError):
        solve_equilibrium(sys_)


def test_update_history_examples():
    assert update_history(np.array([1.0, 5.0]), np.array([3.0, 2.0])).tolist() == [3.0, 5.0]
    h = update_history(np.array([1.0, 5.0]), np.array([3.0, 2.0]))
    assert np.array_equal(update_history(h, np.array([3.0, 2.0])), h)


def test_history_tracks_monotone_stretch(steel):
    mesh = build_mesh(1.0, 1.0, 4, 4)
    history = np.zeros((mesh.n_elem, 4))
    for u in np.linspace(1e-4, 1e-3, 5):
        st_ = solve_equilibrium(assemble_equilibrium(mesh, steel, np.zeros(mesh.n_gp), _uniaxial(mesh, u)))
        pp, _ = spectral_split(gp_strains(mesh, st_.u), steel)
        history = update_history(history, pp)
        assert np.allclose(history, pp, rtol=1e-12, atol=0)
