"""Crack limit problem: constrained solves, identities, direction scans.

Frozen coefficients below were produced by this solver once the two-route and
half-energy identities agreed; they pin regressions, they are not external
truth.
"""
import numpy as np
import pytest

from abpole.assembly import assemble, edge_load, stiffness_mass
from abpole.crack import (CrackProblemSpec, omega_fourier, scan_directions,
                          slit_load_strength, solve_crack_fixed_radius,
                          solve_limit_profile, special_angle_classification,
                          special_angle_identity)

M_FROZEN = {
    (1, 0.0): 0.786577,
    (2, 0.0): -0.391663,
}


def test_slit_load_strength_zeros_and_values():
    assert slit_load_strength(0.0, 1) == pytest.approx(0.0, abs=1e-15)
    assert slit_load_strength(np.pi / 4, 2) == pytest.approx(0.0, abs=1e-15)
    assert slit_load_strength(-np.pi / 4, 2) == pytest.approx(0.0, abs=1e-15)
    assert slit_load_strength(np.pi / 6, 1) == pytest.approx(0.5, rel=1e-12)
    assert slit_load_strength(0.0, 2) == pytest.approx(-2.0, rel=1e-12)


def test_special_angle_classification():
    assert special_angle_classification(0.0, 1) == "half-energy-positive"
    assert special_angle_classification(0.0, 2) == "half-energy-negative"
    assert special_angle_classification(np.pi / 4, 2) == "half-energy-positive"
    assert special_angle_classification(-np.pi / 4, 2) == "half-energy-positive"
    assert special_angle_classification(0.3, 1) is None
    assert special_angle_classification(0.3, 2) is None


def test_problem_spec_validation():
    with pytest.raises(ValueError):
        CrackProblemSpec(alpha=1.5, j=1)          # too close to the boundary
    with pytest.raises(ValueError):
        CrackProblemSpec(alpha=0.0, j=0)
    with pytest.raises(ValueError):
        CrackProblemSpec(alpha=0.0, j=1, radii=(1.0, 2.0))
    with pytest.raises(ValueError):
        CrackProblemSpec(alpha=0.0, j=1, radii=(8.0,))


@pytest.fixture(scope="module")
def solve_2_pi8():
    spec = CrackProblemSpec(alpha=np.pi / 8, j=2, radii=(4.0, 8.0))
    return solve_crack_fixed_radius(spec, 8.0)


def test_transmission_constraint_is_satisfied(solve_2_pi8):
    assert solve_2_pi8.jump_residual < 1e-10


def test_two_routes_to_the_coefficient_agree(solve_2_pi8):
    r = solve_2_pi8
    assert r.m_fourier == pytest.approx(r.m_energy, rel=2e-2)


def test_angular_projection_scales_like_the_exterior_harmonic(solve_2_pi8):
    # omega(r) * r^j constant up to the R^-2j truncation defect
    vals = [omega_fourier(solve_2_pi8, r) * r**2 for r in (1.0, 2.0)]
    assert vals[1] == pytest.approx(vals[0], rel=1e-2)
    assert omega_fourier(solve_2_pi8, 1.0) == solve_2_pi8.omega[1.0]
    with pytest.raises(ValueError):
        omega_fourier(solve_2_pi8, 0.5)
    with pytest.raises(ValueError):
        omega_fourier(solve_2_pi8, 5.0)


def test_solution_decays_toward_the_truncation_arc(solve_2_pi8):
    assert solve_2_pi8.decay_arc_max < 0.1


def test_solution_minimizes_the_constrained_functional(solve_2_pi8):
    # the difference of two admissible fields is antiperiodic across the slit
    # and vanishes on the Dirichlet boundary and at the tip, which is exactly
    # the reduced space of the antiperiodic assembly on the same mesh
    res = solve_2_pi8
    K, _ = stiffness_mass(res.mesh)
    j, alpha = res.spec.j, res.spec.alpha
    W = slit_load_strength(alpha, j)

    def wfn(points):
        return np.hypot(points[:, 0], points[:, 1]) ** (j - 1)

    f = W * (edge_load(res.mesh, [res.topology.chain_plus], wfn)
             - edge_load(res.mesh, [res.topology.chain_minus], wfn))
    R = assemble(res.mesh, res.topology, mode="antiperiodic").R
    x = res.values_full
    grad = K @ x + f
    rs = np.random.default_rng(7)
    for _ in range(20):
        d = R @ rs.standard_normal(R.shape[1])
        d /= np.linalg.norm(d)
        assert abs(d @ grad) < 1e-9 * np.linalg.norm(grad)
        eps = 1e-2
        delta_j = eps * (d @ grad) + 0.5 * eps**2 * (d @ (K @ d))
        assert delta_j >= -1e-8


def test_mirror_symmetric_directions_agree(solve_2_pi8):
    spec = CrackProblemSpec(alpha=-np.pi / 8, j=2, radii=(4.0, 8.0))
    other = solve_crack_fixed_radius(spec, 8.0)
    assert other.m_energy == pytest.approx(solve_2_pi8.m_energy, rel=1e-2)


def test_half_energy_identities_at_special_angles():
    for (j, alpha), m_ref in M_FROZEN.items():
        spec = CrackProblemSpec(alpha=alpha, j=j, radii=(4.0, 8.0, 16.0))
        prof = solve_limit_profile(spec)
        assert special_angle_identity(spec, prof) < 2e-2
        sign = 1.0 if special_angle_classification(alpha, j) == "half-energy-positive" else -1.0
        assert np.sign(prof.m_energy) == sign
        assert prof.m_extrapolated == pytest.approx(m_ref, rel=2e-3)


def test_special_angle_identity_rejects_generic_directions(solve_2_pi8):
    with pytest.raises(ValueError):
        special_angle_identity(solve_2_pi8.spec, solve_2_pi8)


def test_truncation_ladder_contracts_and_extrapolates():
    prof = solve_limit_profile(CrackProblemSpec(alpha=0.0, j=2, radii=(4.0, 8.0, 16.0)))
    ms = [s.m_energy for s in prof.solves]
    d1, d2 = ms[1] - ms[0], ms[2] - ms[1]
    assert abs(d2) < abs(d1) / 1.5
    assert prof.converged
    assert 1.0 < prof.observed_order < 8.0
    # extrapolation lands between the last value and one more contraction step
    assert abs(prof.m_extrapolated - ms[2]) <= abs(d2)
    assert prof.ladder == [(s.radius, s.m_energy) for s in prof.solves]
    assert prof.finest is prof.solves[-1]


def test_direction_scan_reports_sign_changes():
    res, crossings = scan_directions(2, np.radians([-40.0, 0.0, 40.0]),
                                     radii=(4.0, 8.0))
    ms = [r.m_extrapolated for r in res]
    assert ms[0] > 0 > ms[1] and ms[2] > 0
    assert len(crossings) == 2
    # mirror pair of directions gives mirror coefficients
    assert ms[0] == pytest.approx(ms[2], rel=1e-2)
