"""End-to-end acceptance criteria.

Each test records one PASS/FAIL line, shown in the terminal summary,
and then asserts.  The slow tests share one sweep and one zero search
through session fixtures.
"""
import math

import numpy as np
import pytest

from wgtrap import explorer, smx
from wgtrap.extract import (
    augmented_limit_matrix,
    augmented_scattering_matrix,
    limit_scattering_matrix,
    solve_scattering,
)
from wgtrap.geometry import DomainSpec, build_domain, reference_half_guide, reference_omega_inf, reference_omega_L, reference_Omega_inf

K0 = 0.8 * math.pi
H = 0.02
BETA = math.sqrt(math.pi**2 - K0**2)


def _record(report, n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    report.append(line)
    print(line)
    return ok


# --- shared expensive results ---------------------------------------------------------------


@pytest.fixture(scope="session")
def reference_sweep(tmp_path_factory):
    path = tmp_path_factory.mktemp("sweep") / "sweep.csv"
    return explorer.sweep(reference_omega_L(2.0), 1.1, 6.0, K0, step=0.025, h=H, checkpoint=str(path))


@pytest.fixture(scope="session")
def reference_limit():
    return limit_scattering_matrix(reference_omega_inf(), K0, H)


@pytest.fixture(scope="session")
def second_zero(reference_sweep):
    mins = explorer.observed_minima(reference_sweep.params, reference_sweep.column(1, 2))
    m2 = mins[1]
    return explorer.find_zero_transmission(reference_omega_L(2.0), K0, (m2 - 0.1, m2 + 0.1), h=H)


# --- 1: algebra -----------------------------------------------------------------------------


def test_criterion_1_algebraic_identities(acceptance_report):
    rng = np.random.default_rng(2024)
    worst = dict(unit=0.0, zero=0.0, root=0.0)
    radii_ok = True
    kept, seed = 0, 0
    while kept < 1000:
        seed += 1
        S = smx.random_symmetric_unitary(3, seed=seed)
        m = S.entries
        if abs(m[0, 1] * m[0, 2] * m[1, 2]) <= 1e-3:
            continue
        kept += 1
        k = rng.uniform(0.1, math.pi - 0.1)
        for L in rng.uniform(0.5, 20.0, 16):
            A = smx.asymptotic_matrix(S, k, L)
            worst["unit"] = max(worst["unit"], A.unitarity_residual(), A.symmetry_residual())
        circles = smx.circles_of(S)
        worst["zero"] = max(worst["zero"], float(circles[1].distance(0.0)))
        radii_ok &= all(0.0 < c.radius < 1.0 for c in circles)
        for L in smx.zero_transmission_phases(S, k, L_max=10.0):
            worst["root"] = max(worst["root"], abs(smx.asymptotic_matrix(S, k, L)[1, 2]))
    worst_t0 = 0.0
    for seed in range(200):
        p = smx.minus_one_predicates(smx.relation_t0_matrix(seed=seed))
        worst_t0 = max(worst_t0, abs(p.im_Z22), p.tangency_residual)
    ok = (worst["unit"] <= 1e-12 and worst["zero"] <= 1e-10 and radii_ok and worst["root"] <= 1e-10
          and worst_t0 <= 1e-8)
    _record(acceptance_report, 1, ok,
            f"unitary/symmetric {worst['unit']:.1e}, dist(0, gamma12) {worst['zero']:.1e}, radii in (0,1) {radii_ok}, "
            f"|s12| at roots {worst['root']:.1e}, T0 predicates {worst_t0:.1e}")
    assert ok


# --- 2: straight duct ---------------------------------------------------------------------------


def test_criterion_2_straight_duct(acceptance_report):
    S = solve_scattering(DomainSpec(), K0, 0.05).matrix
    r, t = abs(S[1, 1]), abs(S[1, 2] - 1.0)
    ok = r <= 1e-6 and t <= 1e-6
    _record(acceptance_report, 2, ok, f"|s11| = {r:.1e}, |s12 - 1| = {t:.1e}")
    assert ok


# --- 3: residuals and refinement --------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_3_residuals(acceptance_report, reference_sweep):
    unit = max(r.unitarity for r in reference_sweep.rows)
    sym = max(r.symmetry for r in reference_sweep.rows)
    coarse = solve_scattering(reference_omega_L(2.496), K0, H).matrix
    fine = solve_scattering(reference_omega_L(2.496), K0, 0.01).matrix
    ok = (all(r.ok for r in reference_sweep.rows) and unit <= 5e-3 and sym <= 1e-3
          and fine.unitarity_residual() <= 2.5e-3 and fine.symmetry_residual() <= 5e-4
          and fine.unitarity_residual() <= 0.5 * coarse.unitarity_residual()
          and fine.symmetry_residual() <= 0.5 * coarse.symmetry_residual())
    _record(acceptance_report, 3, ok,
            f"h=0.02 over {len(reference_sweep)} solves: unitarity {unit:.1e}, symmetry {sym:.1e}; "
            f"L=2.496: h=0.02 {coarse.unitarity_residual():.1e}/{coarse.symmetry_residual():.1e}, "
            f"h=0.01 {fine.unitarity_residual():.1e}/{fine.symmetry_residual():.1e}")
    assert ok


# --- 4: zero transmission ------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_4_zero_transmission(acceptance_report, reference_sweep, second_zero):
    mins = explorer.observed_minima(reference_sweep.params, reference_sweep.column(1, 2))
    spacing = mins[-1] - mins[-2]
    L_star = second_zero.location
    ok = (len(mins) >= 3 and abs(L_star - 2.496) <= 0.05 and second_zero.objective <= 1e-3
          and abs(spacing - 1.25) <= 0.03)
    _record(acceptance_report, 4, ok,
            f"minima of |s12| at {', '.join(f'{m:.4f}' for m in mins)}; second zero L* = {L_star:.5f} "
            f"with |s12| = {second_zero.objective:.1e}; late spacing {spacing:.4f}")
    assert ok


# --- 5: asymptotics -------------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_5_asymptotic_fit(acceptance_report, reference_sweep, reference_limit):
    fit = explorer.fit_asymptotics(reference_sweep, reference_limit)
    late = fit.params >= 4.0
    circle = float(np.max(fit.circle_distance["12"][late]))
    rate_ok = fit.rate is not None and abs(fit.rate - BETA) <= 0.25 * BETA
    ok = rate_ok and circle <= 5e-3
    rate = "none" if fit.rate is None else f"{fit.rate:.3f}"
    _record(acceptance_report, 5, ok,
            f"decay rate {rate} vs beta = {BETA:.3f} (25% band), max distance to gamma12 for L >= 4: {circle:.1e}")
    assert ok


# --- 6: augmented matrix ----------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_6_augmented_properties(acceptance_report, second_zero):
    flat = 0.0
    for calL in np.linspace(0.6, 2.0, 8):
        S = augmented_scattering_matrix(build_domain(kind="Omega_L", x_right=0.5 + calL, H=0.5), K0, H)
        flat = max(flat, abs(abs(S[2, 2]) - 1.0), abs(S[1, 2]))
    Sinf = augmented_limit_matrix(reference_Omega_inf(second_zero.location), K0, H)
    p = smx.minus_one_predicates(Sinf)
    worst = max(p.relationT0_residual, abs(p.im_Z22), p.tangency_residual)
    ok = flat <= 1e-6 and worst <= 5e-3 and second_zero.objective <= 1e-3
    _record(acceptance_report, 6, ok,
            f"flat half-duct {flat:.1e} over 8 lengths; at L* = {second_zero.location:.5f}: relation T0 "
            f"{p.relationT0_residual:.1e}, Im Z22 {p.im_Z22:.1e}, tangency {p.tangency_residual:.1e}")
    assert ok


# --- 7: trapped mode --------------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_7_trapped_mode(acceptance_report):
    res = explorer.find_trapped_mode(reference_half_guide(1.354), (0.78 * math.pi, 0.82 * math.pi), h=H)
    k_star, calL_star = res.location
    d = res.diagnostics
    ok = (res.converged and abs(k_star - 2.5126) <= 0.01 and abs(calL_star - 1.354) <= 0.02
          and res.objective <= 1e-3 and d["abs_S21"] <= 1e-3 and d["im_Z22_sign_change"])
    _record(acceptance_report, 7, ok,
            f"k* = {k_star:.7f}, calL* = {calL_star:.6f}, |S22 + 1| = {res.objective:.1e}, "
            f"far-channel amplitude {d['abs_S21']:.1e}, Im Z22 {d['im_Z22']['lo']:+.3f} -> {d['im_Z22']['hi']:+.3f}")
    assert ok


# --- 8: transparency -----------------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_8_transparency(acceptance_report):
    spec = reference_omega_L(2.496)
    base = solve_scattering(spec, K0, H)
    longer = solve_scattering(reference_omega_L(2.496, x_left=-3.0, x_right=3.0), K0, H)
    modes = solve_scattering(spec, K0, H, n_modes=25)
    moved = solve_scattering(spec, K0, H, sections={1: (-1.3, -1.7), 2: (1.3, 1.7)})
    d_trunc = float(np.max(np.abs(base.matrix.entries - longer.matrix.entries)))
    d_modes = float(np.max(np.abs(base.matrix.entries - modes.matrix.entries)))
    d_sect = 0.0
    for a, b in zip(base.amplitudes, moved.amplitudes):
        for cid in a:
            d_sect = max(d_sect, abs(a[cid].incoming - b[cid].incoming), abs(a[cid].outgoing - b[cid].outgoing))
    ok = d_trunc <= 1e-6 and d_modes <= 1e-8 and d_sect <= 1e-6
    _record(acceptance_report, 8, ok,
            f"truncation -2 -> -3: {d_trunc:.1e}; DtN modes 15 -> 25: {d_modes:.1e}; section shift: {d_sect:.1e}")
    assert ok
