"""Frequency function, corner expansion fit, and blow-up comparison."""
import numpy as np
import pytest

from abpole.almgren import (FieldSampler, blowup_modulus_compare,
                            boundary_average_H, energy_E, frequency,
                            frequency_profile, logH_derivative_check,
                            vanishing_order_and_beta)
from abpole.assembly import psi_j_eval, psi_j_grad
from abpole.oracles import half_disk_modes, mode_field


def _psi_sampler(j: int) -> FieldSampler:
    return FieldSampler.from_callable(
        lambda pts, j=j: psi_j_eval(np.asarray(pts, float), j),
        grad_fn=lambda pts, j=j: psi_j_grad(np.asarray(pts, float), j))


def test_frequency_of_homogeneous_harmonics_is_the_degree():
    for j in (1, 2, 3):
        s = _psi_sampler(j)
        for r in (0.3, 0.7, 1.4):
            assert frequency(s, r) == pytest.approx(j, abs=1e-10)


def test_arc_average_normalization():
    # H(r) = (1/r) int_arc u^2 ds; for psi_1 that is r^2 * pi/2
    s = _psi_sampler(1)
    assert boundary_average_H(s, 0.5) == pytest.approx(np.pi / 8.0, rel=1e-12)
    with pytest.raises(ValueError):
        boundary_average_H(s, 0.0)


def test_frequency_profile_structure(ref1):
    samp = FieldSampler.from_fe(ref1.mesh, ref1.values_full)
    radii = np.linspace(0.1, 0.3, 5)
    prof = frequency_profile(samp, radii, lam=ref1.lam)
    assert set(prof) == {"radii", "H", "E", "N"}
    assert prof["H"].shape == radii.shape
    assert np.allclose(prof["N"], prof["E"] / prof["H"])
    assert np.all(prof["H"] > 0)
    with pytest.raises(ValueError):
        frequency_profile(samp, [0.3, 0.2, 0.1])


def test_log_derivative_identity_on_harmonics():
    # windows near r ~ 2 keep the O(step^2 * j / r^3) difference term small
    for j, lo, hi in [(1, 1.9, 2.1), (2, 2.4, 2.6), (3, 2.8, 3.0)]:
        out = logH_derivative_check(_psi_sampler(j), np.linspace(lo, hi, 21))
        assert out["max_abs_residual"] <= 1e-5
        assert np.allclose(out["frequency"], j, atol=1e-9)


def test_log_derivative_residual_is_second_order_in_the_step():
    s = _psi_sampler(1)
    coarse = logH_derivative_check(s, np.arange(1.0, 1.2001, 0.02))
    fine = logH_derivative_check(s, np.arange(1.0, 1.2001, 0.01))
    ratio = coarse["max_abs_residual"] / fine["max_abs_residual"]
    assert 3.0 < ratio < 5.0


def test_log_derivative_grid_validation():
    s = _psi_sampler(1)
    with pytest.raises(ValueError):
        logH_derivative_check(s, [1.0, 1.1])
    with pytest.raises(ValueError):
        logH_derivative_check(s, [1.0, 1.1, 1.3])


def test_corner_fit_recovers_order_and_coefficient_of_closed_form_modes():
    for mode in half_disk_modes(3):
        fit = vanishing_order_and_beta(FieldSampler.from_callable(mode_field(mode)))
        assert fit["order"] == mode.m
        assert fit["beta"] == pytest.approx(mode.beta, rel=5e-3)
        assert fit["misfit"] < 1e-3


def test_corner_fit_order_hint():
    s = FieldSampler.from_callable(mode_field(half_disk_modes(1)[0]))
    forced = vanishing_order_and_beta(s, j_hint=2)
    assert forced["order"] == 2
    assert 1 in forced["all_orders"]
    with pytest.raises(ValueError):
        vanishing_order_and_beta(s, j_hint=99)


def test_fe_eigenfield_frequency_and_corner_fit(ref1, ref2):
    modes = half_disk_modes(2)
    for ref, mode in zip((ref1, ref2), modes):
        samp = FieldSampler.from_fe(ref.mesh, ref.values_full)
        n0 = frequency(samp, 0.05, lam=ref.lam)
        assert n0 == pytest.approx(mode.m, rel=5e-2)
        fit = vanishing_order_and_beta(samp)
        assert fit["order"] == mode.m
        assert fit["beta"] == pytest.approx(mode.beta, rel=5e-2)


def test_energy_radius_validation(ref1):
    samp = FieldSampler.from_fe(ref1.mesh, ref1.values_full)
    with pytest.raises(ValueError):
        energy_E(samp, 1.5)


def test_blowup_compare_is_exact_on_a_self_similar_field():
    s = _psi_sampler(1)
    out = blowup_modulus_compare(
        s, scale=0.3, beta=1.0, j=1,
        limit_modulus_fn=lambda pts: np.abs(psi_j_eval(np.asarray(pts, float), 1)),
        crack_angle=0.2)
    assert out["sup_diff"] < 1e-12
    assert out["limit_scale"] > 0
    # the skipped sleeve around the crack ray really is excluded
    pts = out["points"]
    d = np.abs(pts[:, 0] * np.sin(0.2) - pts[:, 1] * np.cos(0.2))
    along = pts[:, 0] * np.cos(0.2) + pts[:, 1] * np.sin(0.2)
    assert np.all((d >= 0.1) | (along <= 0.0))
