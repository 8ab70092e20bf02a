"""Pole sweeps along a ray: schedules, fits, extrapolation, the short loop."""
import numpy as np
import pytest

from abpole.crack import CrackProblemSpec, solve_limit_profile
from abpole.rays import (ModelProblem, default_cut, default_ray_schedule,
                         dogleg_cut, extrapolate_coefficient, fit_power_law,
                         run_ray, solve_at_pole, verify_theorem)


def test_power_law_fit_recovers_pure_power():
    ts = default_ray_schedule()
    fit = fit_power_law(ts, 3.0 * ts**4)
    assert fit.exponent == pytest.approx(4.0, abs=1e-9)
    assert fit.coefficient == pytest.approx(3.0, rel=1e-9)
    assert fit.n_used == len(ts)


def test_power_law_fit_tolerates_higher_order_remainder():
    ts = default_ray_schedule()
    fit = fit_power_law(ts, 3.0 * ts**4 * (1.0 + ts))
    assert fit.exponent == pytest.approx(4.0, abs=0.1)


def test_power_law_fit_rejects_bad_input():
    ts = default_ray_schedule()
    ys = 3.0 * ts**2
    ys[3] *= -1.0
    with pytest.raises(ValueError):
        fit_power_law(ts, ys)
    with pytest.raises(ValueError):
        fit_power_law(ts[:4], 3.0 * ts[:4] ** 2)
    with pytest.raises(ValueError):
        # noise floor leaves too few usable samples
        fit_power_law(ts, 3.0 * ts**2, noise_floor=1.0)


def test_coefficient_extrapolation_on_synthetic_tails():
    ts = default_ray_schedule()
    for gs in (5.0 + 2.0 * ts, 5.0 - 3.0 * ts**2):
        g_star, order, converged = extrapolate_coefficient(ts, gs)
        assert converged
        assert g_star == pytest.approx(5.0, abs=1e-6)
        assert order > 0.5


def test_schedule_and_cut_geometry():
    ts = default_ray_schedule(t0=0.2, ratio=0.7, count=6)
    assert len(ts) == 6 and ts[0] == 0.2
    assert np.allclose(ts[1:] / ts[:-1], 0.7)
    alpha, t = 0.35, 0.12
    p = np.array([np.cos(alpha), np.sin(alpha)])
    for cut in (default_cut(alpha, t), dogleg_cut(alpha, t)):
        cut = np.asarray(cut, float)
        assert np.allclose(cut[0], t * p)                  # starts at the pole
        assert np.hypot(*cut[-1]) == pytest.approx(1.0)    # ends on the rim
    assert len(dogleg_cut(alpha, t)) > 2


def test_run_ray_validates_the_schedule():
    model = ModelProblem(index=1)
    with pytest.raises(ValueError):
        run_ray(model, 0.0, ts=[0.1, 0.2, 0.3, 0.2, 0.1])
    with pytest.raises(ValueError):
        run_ray(model, 0.0, ts=default_ray_schedule(t0=0.4))
    with pytest.raises(ValueError):
        run_ray(model, 0.0, ts=default_ray_schedule(ratio=0.9))


def test_solve_at_pole_validates_the_distance(ref1):
    model = ModelProblem(index=1)
    with pytest.raises(ValueError):
        solve_at_pole(model, ref1, 0.0, 0.0)
    with pytest.raises(ValueError):
        solve_at_pole(model, ref1, 0.0, 0.35)


def test_short_sweep_end_to_end(ref1):
    model = ModelProblem(index=1)
    ray = run_ray(model, 0.0, ts=default_ray_schedule(count=5), reference=ref1)
    assert ray.j == 1
    assert ray.beta == pytest.approx(5.3674938900876, rel=5e-2)
    # the gap closes from above at rate about t^2
    assert np.all(np.asarray(ray.gs) < 0)
    assert abs(ray.fit.exponent - 2.0) < 0.15
    assert np.all(np.diff([abs(d) for d in ray.diffs]) < 0)
    for s in ray.samples:
        assert s.residual_anti < 1e-8 and s.residual_cont < 1e-8
        assert s.overlap > 0.9
        assert s.hardy <= 1.0
        assert s.poincare_residual <= 1e-6

    crack = solve_limit_profile(CrackProblemSpec(alpha=0.0, j=1))
    report = verify_theorem(ray, crack)
    assert report["pass"]
    assert report["sign_ok"]
    assert report["rel_err"] < 0.10
    assert report["exponent_target"] == 2


def test_verify_theorem_rejects_mismatched_problems(ref1):
    model = ModelProblem(index=1)
    ray = run_ray(model, 0.0, ts=default_ray_schedule(count=5), reference=ref1)
    wrong_j = solve_limit_profile(CrackProblemSpec(alpha=0.0, j=2, radii=(4.0, 8.0, 16.0)))
    with pytest.raises(ValueError):
        verify_theorem(ray, wrong_j)
    wrong_alpha = solve_limit_profile(CrackProblemSpec(alpha=0.2, j=1, radii=(4.0, 8.0, 16.0)))
    with pytest.raises(ValueError):
        verify_theorem(ray, wrong_alpha)
