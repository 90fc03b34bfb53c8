import math
import types

import numpy as np
import pytest

from wgtrap import explorer, smx
from wgtrap.errors import (
    BracketError,
    HypothesisNotObservedError,
    InconsistentInputError,
    InvalidArgumentError,
    InvalidGeometryError,
    SolverError,
)
from wgtrap.explorer import SweepRow, SweepTable
from wgtrap.geometry import reference_half_guide, reference_omega_L
from wgtrap.smx import ScatteringMatrix

K = 0.8 * math.pi


def _fake_solver(monkeypatch, matrix_of):
    """Replace the finite-element solve by ``matrix_of(spec, k)``."""
    calls = []

    def fake(spec, k, **kw):
        calls.append((spec, k))
        return types.SimpleNamespace(matrix=matrix_of(spec, k))

    monkeypatch.setattr(explorer, "solve_scattering", fake)
    return calls


# --- grid, workers, guards -----------------------------------------------------------


def test_sweep_grid():
    g = explorer.sweep_grid(1.1, 6.0, 0.025)
    assert len(g) == 197
    assert g[0] == 1.1 and g[-1] == pytest.approx(6.0)
    assert len(explorer.sweep_grid(2.0, 2.0, 0.1)) == 0
    with pytest.raises(InvalidArgumentError):
        explorer.sweep_grid(1.0, 2.0, 0.0)


def test_worker_count(monkeypatch):
    monkeypatch.delenv(explorer.WORKERS_ENV, raising=False)
    assert explorer.worker_count() == 1
    monkeypatch.setenv(explorer.WORKERS_ENV, "3")
    assert explorer.worker_count() == 3
    assert explorer.worker_count(2) == 2
    monkeypatch.setenv(explorer.WORKERS_ENV, "many")
    with pytest.raises(InvalidArgumentError):
        explorer.worker_count()
    with pytest.raises(InvalidArgumentError):
        explorer.worker_count(0)


def test_threshold_guard():
    spec = reference_omega_L(2.0)
    with pytest.raises(InvalidArgumentError):
        explorer.check_wavenumber(spec, math.pi - 5e-4)
    explorer.check_wavenumber(spec, 0.8 * math.pi)
    wide = explorer.validate(explorer.replace(spec, branch_width=1.25))
    with pytest.raises(InvalidArgumentError):
        explorer.check_wavenumber(wide, math.pi / 1.25 + 2e-4)


# --- sweep tables ---------------------------------------------------------------------------


def test_sweep_table_rejects_unordered_rows():
    M = ScatteringMatrix(np.eye(2))
    with pytest.raises(InvalidArgumentError):
        SweepTable("omega_L", K, rows=[SweepRow(2.0, K, M), SweepRow(1.0, K, M)])


def test_empty_range_gives_empty_table(tmp_path):
    path = tmp_path / "s.csv"
    t = explorer.sweep(reference_omega_L(2.0), 3.0, 3.0, K, checkpoint=str(path))
    assert len(t) == 0
    lines = path.read_text().splitlines()
    assert len(lines) == 2 and lines[0].startswith("# wgtrap-sweep v1") and lines[1].startswith("L,k,")


def test_sweep_rejects_invalid_range():
    with pytest.raises(InvalidGeometryError):
        explorer.sweep(reference_omega_L(2.0), 0.9, 1.2, K, step=0.1)


def test_sweep_checkpoint_round_trip_and_resume(tmp_path, monkeypatch):
    Sinf = smx.random_symmetric_unitary(3, seed=1)
    calls = _fake_solver(monkeypatch, lambda spec, k: smx.asymptotic_matrix(Sinf, k, spec.branch_top))
    path = str(tmp_path / "sweep.csv")
    t = explorer.sweep(reference_omega_L(2.0), 2.0, 2.5, K, step=0.1, checkpoint=path)
    assert len(calls) == 6
    back = SweepTable.from_csv(path)
    assert np.array_equal(back.params, t.params)
    for a, b in zip(back.rows, t.rows):
        assert np.array_equal(a.matrix.entries, b.matrix.entries)
        assert a.unitarity == b.unitarity
    # drop the last rows and resume: only the missing points are solved
    lines = open(path).read().splitlines()
    with open(path, "w") as fh:
        fh.write("\n".join(lines[:4]) + "\n")
    calls.clear()
    t2 = explorer.sweep(reference_omega_L(2.0), 2.0, 2.5, K, step=0.1, checkpoint=path)
    assert len(calls) == 4
    assert np.array_equal(t2.params, t.params)
    assert all(np.array_equal(a.matrix.entries, b.matrix.entries) for a, b in zip(t2.rows, t.rows))


def test_checkpoint_of_other_sweep_is_refused(tmp_path, monkeypatch):
    Sinf = smx.random_symmetric_unitary(3, seed=1)
    _fake_solver(monkeypatch, lambda spec, k: smx.asymptotic_matrix(Sinf, k, spec.branch_top))
    path = str(tmp_path / "sweep.csv")
    explorer.sweep(reference_omega_L(2.0), 2.0, 2.2, K, step=0.1, checkpoint=path)
    with pytest.raises(InvalidArgumentError):
        explorer.sweep(reference_omega_L(2.0), 2.0, 2.2, 2.0, step=0.1, checkpoint=path)


def test_failed_points_are_recorded(monkeypatch, tmp_path):
    Sinf = smx.random_symmetric_unitary(3, seed=1)

    def matrix_of(spec, k):
        if abs(spec.branch_top - 2.1) < 1e-9:
            raise SolverError("synthetic failure")
        return smx.asymptotic_matrix(Sinf, k, spec.branch_top)

    _fake_solver(monkeypatch, matrix_of)
    path = str(tmp_path / "s.csv")
    t = explorer.sweep(reference_omega_L(2.0), 2.0, 2.3, K, step=0.1, checkpoint=path)
    assert [r.ok for r in t.rows] == [True, False, True, True]
    assert "synthetic failure" in t.rows[1].error
    back = SweepTable.from_csv(path)
    assert not back.rows[1].ok and "synthetic failure" in back.rows[1].error
    assert np.isnan(back.column(1, 2)[1])


def test_parallel_sweep_matches_serial():
    spec = reference_omega_L(2.0)
    a = explorer.sweep(spec, 2.0, 2.2, K, step=0.1, h=0.1, workers=1)
    b = explorer.sweep(spec, 2.0, 2.2, K, step=0.1, h=0.1, workers=2)
    for ra, rb in zip(a.rows, b.rows):
        assert np.array_equal(ra.matrix.entries, rb.matrix.entries)


def test_real_sweep_rows_satisfy_residual_bounds():
    t = explorer.sweep(reference_omega_L(2.0), 2.4, 2.6, K, step=0.1, h=0.05)
    assert all(r.unitarity <= 5e-3 and r.symmetry <= 1e-3 for r in t.rows)


# --- asymptotic fit ---------------------------------------------------------------------------


def _table_from(Sinf, params, k, err=None):
    rows = []
    for p in params:
        m = smx.asymptotic_matrix(Sinf, k, p).entries
        if err is not None:
            m = m + err(p)
        M = ScatteringMatrix(m, k=k, param=p)
        rows.append(SweepRow(p, k, M, M.unitarity_residual(), M.symmetry_residual()))
    return SweepTable("omega_L", k, rows=rows)


def test_fit_on_exact_asymptotics_is_rejected_as_degenerate():
    Sinf = smx.random_symmetric_unitary(3, seed=4)
    t = _table_from(Sinf, explorer.sweep_grid(1.1, 6.0, 0.025), K)
    fit = explorer.fit_asymptotics(t, ScatteringMatrix(Sinf.entries, k=K, kind="limit"))
    for key in ("11", "12", "22"):
        assert np.max(fit.circle_distance[key]) <= 1e-12
        assert np.max(fit.asy_distance[key]) <= 1e-12
    assert fit.rate is None and "degenerate" in fit.fit_note


def test_fit_recovers_synthetic_rate():
    Sinf = smx.random_symmetric_unitary(3, seed=4)
    E = np.array([[1.0, 0.5j], [0.5j, -0.3]])
    t = _table_from(Sinf, explorer.sweep_grid(1.1, 6.0, 0.05), K, err=lambda L: 0.1 * math.exp(-1.7 * L) * E)
    fit = explorer.fit_asymptotics(t, Sinf)
    assert fit.rate == pytest.approx(1.7, rel=1e-9)


def test_fit_compares_zero_locations():
    Sinf = smx.random_symmetric_unitary(3, seed=9)
    t = _table_from(Sinf, explorer.sweep_grid(1.1, 6.0, 0.025), K)
    fit = explorer.fit_asymptotics(t, Sinf)
    assert len(fit.observed_minima) >= 3
    assert np.allclose(np.diff(fit.predicted_zeros), math.pi / K)
    assert max(abs(o) for o in fit.zero_offsets) < 5e-3


def test_fit_degenerate_limit_matrix():
    m = np.diag(np.exp(1j * np.array([0.3, 0.5, 0.9])))
    m[0, 1] = m[1, 0] = 0.0
    t = _table_from(smx.random_symmetric_unitary(3, seed=1), [2.0, 2.1, 2.2], K)
    fit = explorer.fit_asymptotics(t, ScatteringMatrix(m, k=K, kind="limit"))
    assert fit.degenerate and fit.rate is None and fit.circle_distance == {}


def test_fit_rejects_mismatched_k():
    Sinf = smx.random_symmetric_unitary(3, seed=4)
    t = _table_from(Sinf, [2.0, 2.1, 2.2], K)
    with pytest.raises(InconsistentInputError):
        explorer.fit_asymptotics(t, ScatteringMatrix(Sinf.entries, k=2.0, kind="limit"))


def test_observed_minima_parabola():
    x = np.arange(0.0, 1.0, 0.1)
    mins = explorer.observed_minima(x, x - 0.43)
    assert mins == [pytest.approx(0.43, abs=1e-12)]


# --- zero-transmission search -----------------------------------------------------------------


def test_find_zero_on_exact_asymptotics(monkeypatch):
    Sinf = smx.random_symmetric_unitary(3, seed=9)
    _fake_solver(monkeypatch, lambda spec, k: smx.asymptotic_matrix(Sinf, k, spec.branch_top))
    roots = smx.zero_transmission_phases(Sinf, K, L_max=6.0)
    target = next(r for r in roots if r > 2.0)
    res = explorer.find_zero_transmission(reference_omega_L(2.0), K, (target - 0.3, target + 0.3))
    assert res.location == pytest.approx(target, abs=1e-4)
    assert res.converged and res.objective <= 1e-3
    a, b = res.diagnostics["bracket_objective"]
    assert res.objective <= min(a, b)


def test_find_zero_bracket_without_minimum(monkeypatch):
    Sinf = smx.random_symmetric_unitary(3, seed=9)
    _fake_solver(monkeypatch, lambda spec, k: smx.asymptotic_matrix(Sinf, k, spec.branch_top))
    roots = smx.zero_transmission_phases(Sinf, K, L_max=6.0)
    r = next(r for r in roots if r > 2.0)
    with pytest.raises(BracketError):
        explorer.find_zero_transmission(reference_omega_L(2.0), K, (r + 0.05, r + 0.4))


def test_find_zero_rejects_bad_input():
    with pytest.raises(InvalidArgumentError):
        explorer.find_zero_transmission(reference_half_guide(1.0), K, (2.2, 2.8))
    with pytest.raises(InvalidArgumentError):
        explorer.find_zero_transmission(reference_omega_L(2.0), K, (2.8, 2.2))
    with pytest.raises(InvalidGeometryError):
        explorer.find_zero_transmission(reference_omega_L(2.0), K, (0.5, 2.2))


# --- trapped-mode search ------------------------------------------------------------------------


def _rotating_family(monkeypatch, k0):
    """Augmented limit matrices whose circle Gamma_22 touches -1 exactly at k0."""
    base = smx.relation_t0_matrix(seed=3).entries

    def Sinf(k):
        d = np.diag([1.0, np.exp(1j * (k - k0)), 1.0])
        return ScatteringMatrix(d @ base @ d, k=k, kind="augmented-limit")

    monkeypatch.setattr(explorer, "augmented_limit_matrix", lambda spec, k, **kw: Sinf(k))
    _fake_solver(monkeypatch, lambda spec, k: smx.asymptotic_matrix(Sinf(k), k, spec.x_right))
    return Sinf


def test_find_trapped_on_synthetic_family(monkeypatch):
    k0 = 2.5
    Sinf = _rotating_family(monkeypatch, k0)
    res = explorer.find_trapped_mode(reference_half_guide(1.354), (2.45, 2.55))
    k_star, calL_star = res.location
    assert k_star == pytest.approx(k0, abs=1e-5)
    assert res.converged and res.objective <= 1e-3
    S = smx.asymptotic_matrix(Sinf(k_star), k_star, 0.5 + calL_star)
    assert abs(S[2, 2] + 1.0) <= 1e-3
    assert res.diagnostics["im_Z22_sign_change"]
    lo, hi = res.diagnostics["alpha_minus_pi"]["lo"], res.diagnostics["alpha_minus_pi"]["hi"]
    assert np.sign(lo) != np.sign(hi)


def test_find_trapped_hypothesis_not_observed(monkeypatch):
    _rotating_family(monkeypatch, 2.5)
    with pytest.raises(HypothesisNotObservedError) as err:
        explorer.find_trapped_mode(reference_half_guide(1.354), (2.52, 2.6))
    assert "im_Z22" in err.value.diagnostic


def test_find_trapped_rejects_bad_input():
    with pytest.raises(InvalidArgumentError):
        explorer.find_trapped_mode(reference_omega_L(2.0), (2.4, 2.6))
    with pytest.raises(InvalidArgumentError):
        explorer.find_trapped_mode(reference_half_guide(1.0), (2.6, 2.4))
    with pytest.raises(InvalidArgumentError):
        explorer.find_trapped_mode(reference_half_guide(1.0), (2.4, 2.6), peak_index=0)


def test_predicted_window_maximises_asymptotic_modulus():
    Sinf = smx.random_symmetric_unitary(3, seed=12)
    k, H = 2.0, 0.5
    wins = explorer.predicted_windows(Sinf, k, H, 0.2, 4.0)
    assert np.allclose(np.diff(wins), math.pi / k)
    grid = np.linspace(wins[0] - math.pi / (2 * k), wins[0] + math.pi / (2 * k), 2001)
    mods = [abs(smx.asymptotic_matrix(Sinf, k, H + c)[2, 2]) for c in grid]
    assert grid[int(np.argmax(mods))] == pytest.approx(wins[0], abs=2e-3)


def test_search_result_to_dict():
    r = explorer.SearchResult((2.5, 1.3), 1e-4, True, [{"k": 2.5}], (2.4, 2.6), {"x": 1})
    d = r.to_dict()
    assert d["location"] == [2.5, 1.3] and d["converged"] and d["bracket"] == [2.4, 2.6]
