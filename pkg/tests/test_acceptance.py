"""Acceptance gates: one test per criterion, one PASS/FAIL line each.

Everything here runs the real pipeline end to end; the heavy pieces (seven
pole sweeps, five truncation ladders, one 17-direction scan) are shared
session fixtures.  Budget is a few minutes total.
"""
import time

import numpy as np
import pytest

from abpole.almgren import (FieldSampler, blowup_modulus_compare, frequency,
                            logH_derivative_check)
from abpole.assembly import assemble, psi_j_eval, psi_j_grad
from abpole.crack import (CrackProblemSpec, omega_fourier, scan_directions,
                          solve_limit_profile, special_angle_identity)
from abpole.eigen import solve_lowest
from abpole.mesh import build_half_disk_mesh
from abpole.oracles import half_disk_modes
from abpole.rays import (ModelProblem, dogleg_cut, run_ray, solve_at_pole,
                         verify_theorem)

ACCEPT_RADII = (16.0, 32.0, 64.0)
J1_ANGLES = (0.0, np.pi / 6, -np.pi / 6, np.pi / 4)
J2_ANGLES = (0.0, np.pi / 4, -np.pi / 4)


def _gate(ok: bool, label: str, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")
    assert ok, f"{label}: {detail}"


@pytest.fixture(scope="session")
def sweeps(ref1, ref2):
    """All seven ray studies, with wall time; fields kept on (j=1, alpha=0)."""
    out = {}
    start = time.perf_counter()
    m1, m2 = ModelProblem(index=1), ModelProblem(index=2)
    for alpha in J1_ANGLES:
        out[(1, alpha)] = run_ray(m1, alpha, reference=ref1,
                                  keep_fields=(alpha == 0.0))
    for alpha in J2_ANGLES:
        out[(2, alpha)] = run_ray(m2, alpha, reference=ref2)
    out["runtime"] = time.perf_counter() - start
    return out


@pytest.fixture(scope="session")
def cracks():
    """Truncation ladders for every direction the theorem check needs."""
    keys = [(1, 0.0), (1, np.pi / 6), (1, -np.pi / 6), (2, 0.0), (2, np.pi / 4)]
    return {(j, a): solve_limit_profile(
        CrackProblemSpec(alpha=a, j=j, radii=ACCEPT_RADII)) for j, a in keys}


@pytest.fixture(scope="session")
def direction_scan():
    alphas = np.radians(np.linspace(-80.0, 80.0, 17))
    results, crossings = scan_directions(2, alphas)
    return alphas, results, crossings


def test_criterion_01_reference_spectrum():
    start = time.perf_counter()
    mesh = build_half_disk_mesh(1.0, 0.05, gradings=[((0.0, 0.0), 0.02, 0.05)])
    sol = solve_lowest(assemble(mesh), 4)
    elapsed = time.perf_counter() - start
    rels = [abs(p.value - m.value) / m.value
            for p, m in zip(sol.pairs, half_disk_modes(4))]
    ok = max(rels) <= 1e-3 and elapsed <= 60.0
    _gate(ok, "criterion 1 (reference spectrum)",
          f"max rel err {max(rels):.2e} (<= 1e-3), solve {elapsed:.1f} s (<= 60)")


def test_criterion_02_gauge_invariance(ref1):
    model = ModelProblem(index=1)
    radial = solve_at_pole(model, ref1, 0.0, 0.1)
    dogleg = solve_at_pole(model, ref1, 0.0, 0.1,
                           cut_polyline=dogleg_cut(0.0, 0.1))
    rel = abs(radial.lambda_anti - dogleg.lambda_anti) / radial.lambda_anti
    _gate(rel <= 5e-3, "criterion 2 (gauge invariance)",
          f"two cuts differ by rel {rel:.2e} (<= 5e-3)")


def test_criterion_03_convergence_to_the_limit(sweeps):
    worst = []
    for key in [(1, 0.0), (1, np.pi / 4), (2, 0.0), (2, np.pi / 4)]:
        dd = np.abs(np.asarray(sweeps[key].diffs))
        tail = dd[-4:]
        worst.append((key, bool(np.all(np.diff(tail) < 0))))
    ok = all(flag for _, flag in worst)
    _gate(ok, "criterion 3 (eigenvalue convergence)",
          f"last-four |gap| strictly decreasing for {[k for k, _ in worst]}")


def test_criterion_04_rate_matches_twice_the_order(sweeps):
    details = []
    ok = True
    for j, angles, tol in ((1, J1_ANGLES[:3], 0.15), (2, J2_ANGLES, 0.3)):
        for alpha in angles:
            exp = sweeps[(j, alpha)].fit.exponent
            ok &= abs(exp - 2 * j) <= tol
            details.append(f"j={j} a={np.degrees(alpha):+.0f}deg: {exp:.3f}")
    runtime = sweeps["runtime"]
    ok &= runtime <= 600.0
    _gate(ok, "criterion 4 (gap rate 2j)",
          "; ".join(details) + f"; sweeps {runtime:.0f} s (<= 600)")


def test_criterion_05_sharp_coefficient(sweeps, cracks):
    details = []
    ok = True
    pairs = [(1, 0.0, 0.10), (1, np.pi / 6, 0.10), (1, -np.pi / 6, 0.10),
             (2, 0.0, 0.15), (2, np.pi / 4, 0.15)]
    for j, alpha, rtol in pairs:
        rep = verify_theorem(sweeps[(j, alpha)], cracks[(j, alpha)],
                             coefficient_rtol=rtol)
        ok &= rep["rel_ok"] and rep["sign_ok"]
        details.append(f"j={j} a={np.degrees(alpha):+.0f}deg: "
                       f"g*={rep['g_star']:.2f} vs {rep['minus2beta2mp']:.2f} "
                       f"({rep['rel_err']:.1%})")
    _gate(ok, "criterion 5 (limit coefficient -2|beta|^2 m)", "; ".join(details))


def test_criterion_06_sign_structure(sweeps):
    def gaps(key, tmax=np.inf):
        return [s.lambda_anti - s.lambda_cont
                for s in sweeps[key].samples if s.t <= tmax + 1e-12]

    lowered = all(g < 0 for g in gaps((2, 0.0), 0.1))
    raised = all(g > 0 for g in gaps((2, np.pi / 4), 0.1) +
                 gaps((2, -np.pi / 4), 0.1))
    diamagnetic = all(g > 0 for a in J1_ANGLES for g in gaps((1, a)))
    ok = lowered and raised and diamagnetic
    _gate(ok, "criterion 6 (sign structure)",
          f"nodal tangent lowers: {lowered}; bisectors raise: {raised}; "
          f"ground state always raised: {diamagnetic}")


def test_criterion_07_limit_problem_identities(cracks):
    finest = cracks[(1, 0.0)].finest
    two_route = abs(finest.m_energy - finest.m_fourier) / abs(finest.m_energy)
    scaled = np.array([omega_fourier(finest, r) * r**finest.spec.j
                       for r in (1.0, 2.0, 4.0)])
    omega_dev = float(np.max(np.abs(scaled / scaled.mean() - 1.0)))
    idents = {f"j={j} a={np.degrees(a):+.0f}deg":
              special_angle_identity(cracks[(j, a)].spec, cracks[(j, a)])
              for j, a in [(1, 0.0), (2, 0.0), (2, np.pi / 4)]}
    ok = (two_route <= 2e-2 and omega_dev <= 1e-2
          and max(idents.values()) <= 2e-2)
    _gate(ok, "criterion 7 (limit-problem identities)",
          f"two-route {two_route:.2%} (<= 2%); omega*r^j dev {omega_dev:.2%} "
          f"(<= 1%); half-energy residuals {max(idents.values()):.2%} (<= 2%)")


def test_criterion_08_coefficient_continuity_and_zeros(direction_scan):
    alphas, results, crossings = direction_scan
    ms = np.array([r.m_extrapolated for r in results])
    special = {a: solve_limit_profile(
        CrackProblemSpec(alpha=a, j=2)).m_extrapolated
        for a in (-np.pi / 4, np.pi / 4)}
    edge_ok = (abs(ms[0]) < abs(special[-np.pi / 4])
               and abs(ms[-1]) < abs(special[np.pi / 4]))
    ok = len(crossings) >= 2 and edge_ok
    _gate(ok, "criterion 8 (coefficient zeros across directions)",
          f"{len(crossings)} sign changes (>= 2); |m(+-80deg)| = "
          f"{abs(ms[0]):.3f}/{abs(ms[-1]):.3f} < |m(+-45deg)| = "
          f"{abs(special[-np.pi/4]):.3f}/{abs(special[np.pi/4]):.3f}")


def test_criterion_09_frequency_diagnostics(ref1, ref2):
    harmonic_errs = []
    for j in (1, 2, 3):
        s = FieldSampler.from_callable(
            lambda pts, j=j: psi_j_eval(np.asarray(pts, float), j),
            grad_fn=lambda pts, j=j: psi_j_grad(np.asarray(pts, float), j))
        harmonic_errs.append(abs(frequency(s, 0.7) - j))
    fe_devs, resids = [], []
    for ref in (ref1, ref2):
        samp = FieldSampler.from_fe(ref.mesh, ref.values_full)
        fe_devs.append(abs(frequency(samp, 0.05, lam=ref.lam) - ref.j) / ref.j)
        resids.append(logH_derivative_check(
            samp, np.linspace(0.2, 0.3, 21), lam=ref.lam)["max_abs_residual"])
    ok = (max(harmonic_errs) <= 1e-6 and max(fe_devs) <= 5e-2
          and max(resids) <= 1e-2)
    _gate(ok, "criterion 9 (frequency diagnostics)",
          f"harmonic N-j {max(harmonic_errs):.1e} (<= 1e-6); eigenfield dev "
          f"{max(fe_devs):.1%} (<= 5%); log-derivative {max(resids):.1e} (<= 1e-2)")


def test_criterion_10_blowup_convergence(sweeps, cracks):
    ray = sweeps[(1, 0.0)]
    limit = cracks[(1, 0.0)]
    sups, scale = [], None
    for s in ray.samples:
        samp = FieldSampler.from_fe(s.mesh, s.values_anti)
        out = blowup_modulus_compare(samp, scale=s.t, beta=ray.beta, j=1,
                                     limit_modulus_fn=limit.limit_modulus,
                                     crack_angle=0.0)
        sups.append(out["sup_diff"])
        scale = out["limit_scale"]
    shrinking = all(b <= 1.2 * a for a, b in zip(sups, sups[1:]))
    small = sups[-1] <= 0.1 * scale
    _gate(shrinking and small, "criterion 10 (blow-up at modulus level)",
          f"sup distance {sups[0]:.3f} -> {sups[-1]:.4f}, bound "
          f"{0.1 * scale:.3f}, monotone within slack: {shrinking}")


def test_criterion_11_form_domain_inequalities(sweeps):
    hardy, poincare = [], []
    for key in list(sweeps):
        if key == "runtime":
            continue
        for s in sweeps[key].samples:
            hardy.append(s.hardy)
            poincare.append(s.poincare_residual)
    ok = max(hardy) <= 1.0 and max(poincare) <= 1e-6
    _gate(ok, "criterion 11 (Hardy/Poincare diagnostics)",
          f"hardy max {max(hardy):.3f} (<= 1); poincare residual max "
          f"{max(poincare):.1e} (<= 1e-6) over {len(hardy)} eigenfields")
