"""Operators on the half-disk: forms, constraints, traces, inequalities."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from abpole.assembly import (WeightField, assemble, boundary_integral,
                             edge_load, hardy_ratio, poincare_check,
                             psi_j_eval, psi_j_grad, stiffness_mass)
from abpole.eigen import solve_lowest
from abpole.mesh import DIRICHLET_ARC, build_half_disk_mesh, insert_slit

HALF_AREA = np.pi / 2.0


def test_sector_harmonic_point_values():
    pts = np.array([[1.0, 0.0], [0.0, 0.7], [0.0, -0.7],
                    [np.cos(np.pi / 4), np.sin(np.pi / 4)]])
    p1 = psi_j_eval(pts, 1)
    assert p1[0] == pytest.approx(1.0, abs=1e-14)
    assert abs(p1[1]) < 1e-14 and abs(p1[2]) < 1e-14  # Dirichlet line
    p2 = psi_j_eval(pts, 2)
    assert abs(p2[0]) < 1e-14                          # nodal ray of degree 2
    assert p2[3] == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(0.01, 2.0), y=st.floats(-2.0, 2.0),
       s=st.floats(0.1, 3.0), j=st.integers(1, 4))
def test_sector_harmonic_homogeneity(x, y, s, j):
    p = np.array([[x, y]])
    assert psi_j_eval(s * p, j) == pytest.approx(s**j * psi_j_eval(p, j), rel=1e-12)


def test_sector_harmonic_gradient_matches_finite_differences():
    rs = np.random.default_rng(3)
    pts = np.column_stack([rs.uniform(0.1, 1.0, 20), rs.uniform(-0.8, 0.8, 20)])
    eps = 1e-6
    for j in (1, 2, 3):
        g = psi_j_grad(pts, j)
        for k, unit in enumerate(np.eye(2)):
            fd = (psi_j_eval(pts + eps * unit, j) - psi_j_eval(pts - eps * unit, j)) / (2 * eps)
            assert np.allclose(g[:, k], fd, atol=5e-9)


def test_mass_and_stiffness_basic_identities():
    mesh = build_half_disk_mesh(1.0, 0.08)
    K, M = stiffness_mass(mesh)
    assert abs((K - K.T)).max() < 1e-12
    assert abs((M - M.T)).max() < 1e-13
    ones = np.ones(mesh.num_dofs)
    # constants: zero energy, mass = polygonal area (chord error O(h^2))
    assert abs(K @ ones).max() < 1e-10
    assert float(ones @ (M @ ones)) == pytest.approx(HALF_AREA, rel=1e-3)
    # P2 reproduces the degree-2 harmonic exactly, so the discrete energy is
    # int 4 r^2 = pi up to the chord polygonization defect
    psi2 = psi_j_eval(mesh.dof_coords(), 2)
    assert float(psi2 @ (K @ psi2)) == pytest.approx(np.pi, rel=2e-3)


def test_affine_weight_enters_mass_matrix():
    mesh = build_half_disk_mesh(1.0, 0.1)
    w = WeightField.affine(0.5, 0.0)       # q = 1 + x/2
    _, Mq = stiffness_mass(mesh, weight=w)
    ones = np.ones(mesh.num_dofs)
    # int (1 + x/2) over the half-disk: area + (1/2) * (2/3) = pi/2 + 1/3
    assert float(ones @ (Mq @ ones)) == pytest.approx(HALF_AREA + 1.0 / 3.0, rel=1e-3)


def test_continuous_mode_reglues_the_slit():
    poly = [np.zeros(2), np.array([0.55, 0.3])]
    base = build_half_disk_mesh(1.0, 0.09, constraint_polylines=[poly])
    slit, topo = insert_slit(base, poly)
    lam_base = solve_lowest(assemble(base), 1).values[0]
    lam_glued = solve_lowest(assemble(slit, topo, mode="continuous"), 1).values[0]
    assert lam_glued == pytest.approx(lam_base, rel=1e-12, abs=1e-10)


def test_antiperiodic_reduction_flips_across_the_slit():
    poly = [np.zeros(2), np.array([0.55, 0.3])]
    base = build_half_disk_mesh(1.0, 0.09, constraint_polylines=[poly])
    slit, topo = insert_slit(base, poly)
    asm = assemble(slit, topo, mode="antiperiodic")
    assert np.all(asm.g == 0.0)
    y = np.sin(np.arange(asm.R.shape[1]))
    x = asm.R @ y
    for plus, minus in topo.pairs:
        assert x[minus] == pytest.approx(-x[plus], abs=1e-13)
    # Dirichlet boundary and the interior tip are pinned
    for d in slit.boundary_dofs((DIRICHLET_ARC, "DIAMETER")):
        assert x[d] == 0.0
    tip = topo.end_id if topo.end_kind == "tip" else topo.start_id
    assert x[tip] == 0.0


def test_edge_load_total_equals_weighted_length():
    poly = [np.zeros(2), np.array([0.5, 0.25])]
    mesh = build_half_disk_mesh(1.0, 0.09, constraint_polylines=[poly])
    slit, topo = insert_slit(mesh, poly)
    f = edge_load(slit, [topo.chain_plus], lambda p: np.ones(len(p)))
    assert float(f.sum()) == pytest.approx(np.hypot(0.5, 0.25), rel=1e-12)


def test_boundary_integral_of_first_harmonic_trace():
    mesh = build_half_disk_mesh(1.0, 0.06)
    vals = psi_j_eval(mesh.dof_coords(), 1)
    # int over the arc of cos^2, up to the chord polygonization defect
    assert boundary_integral(mesh, vals, {DIRICHLET_ARC}) == pytest.approx(
        np.pi / 2.0, rel=2e-3)


def test_hardy_moment_of_first_harmonic():
    mesh = build_half_disk_mesh(1.0, 0.06)
    vals = psi_j_eval(mesh.dof_coords(), 1)
    # (1/4) int x^2/|x|^2 / int |grad x|^2 = (1/4)(pi/4)/(pi/2) = 1/8,
    # with the pole sitting exactly on a mesh vertex
    assert hardy_ratio(mesh, vals, (0.0, 0.0)) == pytest.approx(0.125, abs=2e-3)
    # off-vertex pole: regular quadrature branch; psi_1 does not vanish at
    # this pole, so no upper bound applies, only finiteness
    r2 = hardy_ratio(mesh, vals, (0.31, 0.17))
    assert 0.0 < r2 < 10.0


def test_poincare_pieces_on_first_harmonic():
    mesh = build_half_disk_mesh(1.0, 0.06)
    vals = psi_j_eval(mesh.dof_coords(), 1)
    out = poincare_check(mesh, vals)
    assert out["bulk"] == pytest.approx(np.pi / 8.0, rel=2e-3)
    assert out["trace"] == pytest.approx(np.pi / 2.0, rel=2e-3)
    assert out["energy"] == pytest.approx(np.pi / 2.0, rel=2e-3)
    assert out["residual"] == 0.0
