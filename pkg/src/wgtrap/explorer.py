"""Parameter sweeps, zero-transmission and trapped-mode searches.

The searches drive the finite-element extraction of :mod:`wgtrap.extract`
over a one-parameter family of domains (the branch top ``L`` for
``omega_L``, the half-guide length for ``Omega_L``) and compare the
results with the closed-form asymptotics of :mod:`wgtrap.smx`.

Sweeps are embarrassingly parallel.  The number of worker processes is
read from the ``WGTRAP_WORKERS`` environment variable (default 1); rows
are always merged in parameter order so results do not depend on it.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from . import smx
from .errors import (
    BracketError,
    DegenerateCaseError,
    HypothesisNotObservedError,
    InconsistentInputError,
    InvalidArgumentError,
    SolverError,
    WgtrapError,
)
from .extract import augmented_limit_matrix, solve_scattering
from .geometry import DomainSpec, validate, with_param
from .smx import ScatteringMatrix

log = logging.getLogger(__name__)

WORKERS_ENV = "WGTRAP_WORKERS"
DEFAULT_STEP = 0.025
DEFAULT_H = 0.02
THRESHOLD_GUARD = 1e-3
ZERO_TOL = 1e-3
TRAPPED_TOL = 1e-3
CSV_VERSION = "wgtrap-sweep v1"


def worker_count(workers: Optional[int] = None) -> int:
    """Worker processes to use: explicit value, else ``WGTRAP_WORKERS``, else 1."""
    if workers is None:
        raw = os.environ.get(WORKERS_ENV, "1")
        try:
            workers = int(raw)
        except ValueError:
            raise InvalidArgumentError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    if workers < 1:
        raise InvalidArgumentError(f"worker count must be at least 1, got {workers}")
    return workers


def check_wavenumber(spec: DomainSpec, k: float) -> None:
    """Reject wavenumbers too close to a channel threshold."""
    if not 0.0 < k < math.pi:
        raise InvalidArgumentError(f"k must lie in (0, pi), got {k}")
    if math.pi - k < THRESHOLD_GUARD:
        raise InvalidArgumentError(f"k={k:.10g} is within {THRESHOLD_GUARD:g} of the duct threshold pi")
    if spec.has_branch:
        kb = math.pi / spec.branch_width
        if abs(k - kb) < THRESHOLD_GUARD:
            raise InvalidArgumentError(f"k={k:.10g} is within {THRESHOLD_GUARD:g} of the branch threshold {kb:.10g}")


def phase_offset(spec: DomainSpec) -> float:
    """Shift from the family parameter to the closing-wall coordinate."""
    return spec.H if spec.kind == "Omega_L" else 0.0


def sweep_grid(start: float, stop: float, step: float = DEFAULT_STEP) -> np.ndarray:
    """Uniform grid ``start, start + step, ...`` up to ``stop`` (inclusive)."""
    if not step > 0:
        raise InvalidArgumentError(f"step must be positive, got {step}")
    if not stop > start:
        return np.empty(0)
    n = int(math.floor((stop - start) / step + 1e-9))
    return start + step * np.arange(n + 1)


# --- sweep tables -----------------------------------------------------------


@dataclass
class SweepRow:
    param: float
    k: float
    matrix: Optional[ScatteringMatrix]
    unitarity: float = float("nan")
    symmetry: float = float("nan")
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.matrix is not None


def _entry_names(n: int) -> List[str]:
    return [f"s{i}{j}" for i in range(1, n + 1) for j in range(1, n + 1)]


@dataclass
class SweepTable:
    """Scattering matrices of a one-parameter family at fixed ``k``.

    ``phase_offset`` is added to the parameter to obtain the wall
    coordinate used by the asymptotic formulas.
    """

    kind: str
    k: float
    n: int = 2
    rows: List[SweepRow] = field(default_factory=list)
    phase_offset: float = 0.0

    def __post_init__(self):
        ps = [r.param for r in self.rows]
        if any(b <= a for a, b in zip(ps, ps[1:])):
            raise InvalidArgumentError("sweep rows must have strictly increasing parameters")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def params(self) -> np.ndarray:
        return np.array([r.param for r in self.rows], dtype=float)

    def ok_rows(self) -> List[SweepRow]:
        return [r for r in self.rows if r.ok]

    def column(self, i: int, j: int) -> np.ndarray:
        """Entry ``s_ij`` (1-based) of every row, NaN for failed rows."""
        return np.array([r.matrix[i, j] if r.ok else complex("nan") for r in self.rows], dtype=complex)

    @property
    def param_name(self) -> str:
        """CSV name of the parameter column."""
        return "calL" if self.kind == "Omega_L" else "L"

    def header(self) -> str:
        return f"# {CSV_VERSION} kind={self.kind} k={self.k!r} n={self.n} phase_offset={self.phase_offset!r}"

    def columns(self) -> List[str]:
        cols = [self.param_name, "k"]
        for name in _entry_names(self.n):
            cols += [f"{name}_re", f"{name}_im"]
        return cols + ["unitarity", "symmetry", "error"]

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.header() + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns())
            for r in self.rows:
                w.writerow(_row_cells(r, self.n))

    @classmethod
    def from_csv(cls, path: str) -> "SweepTable":
        with open(path, newline="") as fh:
            meta = _parse_header(fh.readline())
            table = cls(meta["kind"], float(meta["k"]), int(meta["n"]), phase_offset=float(meta["phase_offset"]))
            rows = [_parse_row(rec, table) for rec in csv.DictReader(fh)]
        rows.sort(key=lambda r: r.param)
        table.rows = rows
        table.__post_init__()
        return table


def _fmt(x: float) -> str:
    return "%.17g" % x


def _row_cells(r: SweepRow, n: int) -> List[str]:
    cells = [_fmt(r.param), _fmt(r.k)]
    if r.ok:
        for z in r.matrix.entries.ravel():
            cells += [_fmt(z.real), _fmt(z.imag)]
    else:
        cells += ["nan"] * (2 * n * n)
    return cells + [_fmt(r.unitarity), _fmt(r.symmetry), r.error]


def _parse_header(line: str) -> Dict[str, str]:
    if not line.startswith("# " + CSV_VERSION):
        raise InvalidArgumentError(f"not a sweep table (expected header '# {CSV_VERSION} ...')")
    return dict(tok.split("=", 1) for tok in line[2 + len(CSV_VERSION):].split())


def _parse_row(rec: Dict[str, str], table: SweepTable) -> SweepRow:
    param, k = float(rec[table.param_name]), float(rec["k"])
    err = rec.get("error") or ""
    matrix = None
    if not err:
        vals = [complex(float(rec[f"{nm}_re"]), float(rec[f"{nm}_im"])) for nm in _entry_names(table.n)]
        matrix = ScatteringMatrix(np.array(vals).reshape(table.n, table.n), k=k, param=param,
                                  kind=_matrix_kind(table.kind))
    return SweepRow(param, k, matrix, float(rec["unitarity"]), float(rec["symmetry"]), err)


def _matrix_kind(domain_kind: str) -> str:
    return {"omega_L": "standard", "omega_inf": "limit", "Omega_L": "augmented", "Omega_inf": "augmented-limit"}[domain_kind]


# --- sweeps -----------------------------------------------------------------


def _solve_point(spec: DomainSpec, param: float, k: float, solver: dict) -> SweepRow:
    """One grid point; solver failures become an error row."""
    member = with_param(spec, param)
    try:
        M = solve_scattering(member, k, **solver).matrix
    except WgtrapError as exc:
        log.warning("sweep point %s=%.10g failed: %s", spec.kind, param, exc)
        return SweepRow(float(param), float(k), None, error=f"{type(exc).__name__}: {exc}".replace("\n", " "))
    return SweepRow(float(param), float(k), M, M.unitarity_residual(), M.symmetry_residual())


def _solve_point_star(args) -> SweepRow:
    return _solve_point(*args)


def _map_points(spec: DomainSpec, params: Sequence[float], k: float, solver: dict, workers: int,
                on_row: Optional[Callable[[SweepRow], None]] = None) -> List[SweepRow]:
    jobs = [(spec, float(p), k, solver) for p in params]
    rows = []
    if workers == 1 or len(jobs) <= 1:
        for job in jobs:
            rows.append(_solve_point_star(job))
            if on_row:
                on_row(rows[-1])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_solve_point_star, job) for job in jobs]
            for fut in as_completed(futures):
                rows.append(fut.result())
                if on_row:
                    on_row(rows[-1])
    rows.sort(key=lambda r: r.param)
    return rows


def sweep(
    spec: DomainSpec,
    start: float,
    stop: float,
    k: float,
    step: float = DEFAULT_STEP,
    h: float = DEFAULT_H,
    order: int = 2,
    n_modes: int = 15,
    params: Optional[Sequence[float]] = None,
    checkpoint: Optional[str] = None,
    workers: Optional[int] = None,
) -> SweepTable:
    """Scattering matrices along the family of ``spec``.

    Parameters
    ----------
    spec : DomainSpec
        Member of the family; only its family parameter is varied.
    start, stop, step : float
        Uniform grid, both ends included.  Ignored if ``params`` is given.
    checkpoint : str, optional
        CSV file written row by row.  If it already holds rows of the same
        sweep they are reused and only the missing points are solved.

    Returns
    -------
    SweepTable
        One row per grid point, in increasing parameter order.  Points
        whose solve failed carry the error message instead of a matrix.
    """
    check_wavenumber(spec, k)
    grid = np.asarray(params, dtype=float) if params is not None else sweep_grid(start, stop, step)
    if np.any(np.diff(grid) <= 0):
        raise InvalidArgumentError("sweep parameters must be strictly increasing")
    for p in grid:  # geometric validity of the whole range before any solve
        with_param(spec, float(p))
    table = SweepTable(spec.kind, float(k), 3 if spec.kind in ("omega_inf", "Omega_inf") else 2,
                       phase_offset=phase_offset(spec))
    done: Dict[float, SweepRow] = {}
    if checkpoint and os.path.exists(checkpoint) and os.path.getsize(checkpoint) > 0:
        old = SweepTable.from_csv(checkpoint)
        if old.header() != table.header():
            raise InvalidArgumentError(f"checkpoint {checkpoint} belongs to another sweep ({old.header()})")
        done = {round(r.param, 12): r for r in old.rows}
        log.info("resuming sweep from %s: %d rows present", checkpoint, len(done))
    todo = [p for p in grid if round(float(p), 12) not in done]

    fh = None
    writer = None
    if checkpoint:
        fresh = not done
        fh = open(checkpoint, "w" if fresh else "a", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        if fresh:
            fh.write(table.header() + "\n")
            writer.writerow(table.columns())
            fh.flush()

    def on_row(r: SweepRow) -> None:
        if writer is not None:
            writer.writerow(_row_cells(r, table.n))
            fh.flush()

    solver = {"h": h, "order": order, "n_modes": n_modes}
    try:
        new = _map_points(spec, todo, float(k), solver, worker_count(workers), on_row)
    finally:
        if fh is not None:
            fh.close()
    merged = {round(r.param, 12): r for r in new}
    merged.update({key: r for key, r in done.items() if key not in merged})
    keys = {round(float(p), 12) for p in grid}
    table.rows = [merged[key] for key in sorted(keys)]
    if checkpoint:
        table.to_csv(checkpoint)  # final rewrite in parameter order
    nbad = sum(not r.ok for r in table.rows)
    log.info("sweep of %d points at k=%.8g done (%d failed)", len(table), k, nbad)
    return table


def _raise_failed(rows: Sequence[SweepRow]) -> None:
    for r in rows:
        if not r.ok:
            raise SolverError(f"solve failed at parameter {r.param:.10g}, k={r.k:.10g}: {r.error}",
                              {"param": r.param, "k": r.k})


# --- search results -----------------------------------------------------------


@dataclass
class SearchResult:
    """Outcome of a zero-transmission or trapped-mode search.

    ``location`` is ``L*`` (float) or ``(k*, calL*)``; ``objective`` is
    ``|s12|`` or ``|S22 + 1|`` there.  ``history`` lists every evaluated
    point in order.
    """

    location: object
    objective: float
    converged: bool
    history: List[dict] = field(default_factory=list)
    bracket: Tuple[float, float] = (float("nan"), float("nan"))
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        loc = list(self.location) if isinstance(self.location, tuple) else self.location
        return {
            "location": loc,
            "objective": self.objective,
            "converged": self.converged,
            "bracket": list(self.bracket),
            "history": self.history,
            "diagnostics": self.diagnostics,
        }


def _minimize_in(f: Callable[[float], float], xs: np.ndarray, fs: np.ndarray, tol: float) -> Tuple[float, float]:
    """Refine the best sample of ``f`` between its neighbours.

    Bounded Brent search (golden sections with parabolic steps) to an
    absolute width ``tol``.
    """
    i = int(np.argmin(fs))
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": tol})
    x, fx = float(res.x), float(res.fun)
    if fs[i] < fx:
        x, fx = float(xs[i]), float(fs[i])
    return x, fx


def find_zero_transmission(
    spec: DomainSpec,
    k: float,
    bracket: Tuple[float, float],
    h: float = DEFAULT_H,
    tol: float = 1e-4,
    samples: int = 13,
    order: int = 2,
    n_modes: int = 15,
    workers: Optional[int] = None,
) -> SearchResult:
    """Minimise ``|s12(L)|`` over the branch top inside ``bracket``.

    The bracket is sampled uniformly; the best interior sample and its
    neighbours then bound a Brent search to width ``tol``.  Converged
    means ``|s12| <= 1e-3`` at the minimiser.

    Raises
    ------
    BracketError
        If the smallest sample is an end point of the bracket.
    """
    if spec.kind != "omega_L":
        raise InvalidArgumentError(f"zero-transmission search needs an omega_L family, got {spec.kind}")
    check_wavenumber(spec, k)
    a, b = (float(v) for v in bracket)
    if not b > a:
        raise InvalidArgumentError(f"bracket must satisfy a < b, got ({a}, {b})")
    if samples < 3:
        raise InvalidArgumentError("need at least 3 samples")
    with_param(spec, a)
    with_param(spec, b)
    solver = {"h": h, "order": order, "n_modes": n_modes}
    history: List[dict] = []
    cache: Dict[float, float] = {}

    def record(L: float, M: ScatteringMatrix) -> float:
        s = abs(M[1, 2])
        cache[L] = s
        history.append({"L": L, "abs_s12": s})
        return s

    xs = np.linspace(a, b, samples)
    rows = _map_points(spec, xs, float(k), solver, worker_count(workers))
    _raise_failed(rows)
    fs = np.array([record(r.param, r.matrix) for r in rows])
    i = int(np.argmin(fs))
    if i == 0 or i == len(xs) - 1:
        raise BracketError(
            f"|s12| has no interior minimum in ({a:g}, {b:g}): smallest sample at the end L={xs[i]:g}"
        )

    def f(L: float) -> float:
        L = float(L)
        if L not in cache:
            record(L, solve_scattering(with_param(spec, L), k, **solver).matrix)
        return cache[L] ** 2

    L_star, f_star = _minimize_in(f, xs, fs**2, tol)
    obj = math.sqrt(f_star)
    res = SearchResult(
        location=L_star,
        objective=obj,
        converged=obj <= ZERO_TOL,
        history=history,
        bracket=(a, b),
        diagnostics={"k": float(k), "h": h, "evaluations": len(history), "bracket_objective": [fs[0], fs[-1]]},
    )
    log.info("zero transmission at L=%.6f, |s12|=%.3e (%d solves)", L_star, obj, len(history))
    return res


# --- trapped modes ------------------------------------------------------------


def limit_family(spec: DomainSpec) -> DomainSpec:
    """Full guide with the closed branch of the half-guide ``spec``."""
    return validate(replace(spec, kind="Omega_inf", x_right=max(2.0, spec.core_box[1] + 0.5)))


def predicted_windows(Sinf: ScatteringMatrix, k: float, H: float, calL_min: float, calL_max: float) -> List[float]:
    """Half-guide lengths where the asymptotic ``S22`` is farthest from 0.

    That point of the circle ``Gamma_22`` is the one nearest to ``-1``
    when the circle passes close to it.
    """
    m = Sinf.entries
    _, _, g22 = smx.circles_of(m)
    z = g22.center
    target = z * (1.0 + g22.radius / abs(z)) if abs(z) > 0 else -1.0 + 0j
    w = m[2, 2] + m[1, 2] * m[2, 1] / (target - m[1, 1])
    period = math.pi / k
    X = (-np.angle(w) / (2.0 * k)) % period
    out = []
    c = X - H
    while c < calL_min:
        c += period
    while c <= calL_max:
        out.append(float(c))
        c += period
    return out


@dataclass
class _Inner:
    k: float
    calL: float
    S: ScatteringMatrix
    im_Z22: float

    @property
    def S22(self) -> complex:
        return self.S[2, 2]

    @property
    def alpha_minus_pi(self) -> float:
        """``arg S22 - pi`` taken in ``(-pi, pi]``."""
        return float(np.angle(-self.S22))


def find_trapped_mode(
    spec: DomainSpec,
    k_bracket: Tuple[float, float],
    peak_index: int = 1,
    h: float = DEFAULT_H,
    k_tol: float = 1e-5,
    calL_tol: float = 1e-6,
    calL_min: float = 0.5,
    calL_max: float = 3.5,
    window: float = 0.15,
    samples: int = 9,
    order: int = 2,
    n_modes: int = 15,
    workers: Optional[int] = None,
) -> SearchResult:
    """Locate ``S22(calL, k) = -1`` for the half-guide family of ``spec``.

    For each ``k`` the inner level maximises ``|S22|`` over the half-guide
    length in the ``peak_index``-th window predicted by the asymptotic
    circle ``Gamma_22`` (windows start at ``calL_min``).  The outer level
    finds the sign change of ``arg S22 - pi`` at the inner optimum with a
    bracketing root finder to ``k_tol``.  ``Im Z22`` at both bracket ends is
    reported as a diagnostic.

    Raises
    ------
    HypothesisNotObservedError
        If ``arg S22 - pi`` has the same sign at both ends of ``k_bracket``.
    """
    if spec.kind != "Omega_L":
        raise InvalidArgumentError(f"trapped-mode search needs an Omega_L family, got {spec.kind}")
    ka, kb = (float(v) for v in k_bracket)
    if not kb > ka:
        raise InvalidArgumentError(f"k bracket must satisfy a < b, got ({ka}, {kb})")
    check_wavenumber(spec, ka)
    check_wavenumber(spec, kb)
    if peak_index < 1:
        raise InvalidArgumentError("peak_index is 1-based")
    solver = {"h": h, "order": order, "n_modes": n_modes}
    nw = worker_count(workers)
    lim = limit_family(spec)
    history: List[dict] = []
    inner_cache: Dict[float, _Inner] = {}

    def S_at(calL: float, k: float) -> ScatteringMatrix:
        M = solve_scattering(with_param(spec, calL), k, **solver).matrix
        history.append({"k": k, "calL": calL, "abs_S22": abs(M[2, 2]), "abs_S22_plus_1": abs(M[2, 2] + 1.0)})
        return M

    def inner(k: float) -> _Inner:
        if k in inner_cache:
            return inner_cache[k]
        Sinf = augmented_limit_matrix(lim, k, **solver)
        im_z = smx.circles_of(Sinf)[2].center.imag
        wins = predicted_windows(Sinf, k, spec.H, calL_min, calL_max)
        if len(wins) < peak_index:
            raise InvalidArgumentError(
                f"only {len(wins)} windows in ({calL_min:g}, {calL_max:g}) at k={k:.8g}; peak_index={peak_index}"
            )
        c = wins[peak_index - 1]
        xs = np.linspace(max(c - window, calL_min), c + window, samples)
        rows = _map_points(spec, xs, k, solver, nw)
        _raise_failed(rows)
        for r in rows:
            history.append({"k": k, "calL": r.param, "abs_S22": abs(r.matrix[2, 2]),
                            "abs_S22_plus_1": abs(r.matrix[2, 2] + 1.0)})
        mats = {float(r.param): r.matrix for r in rows}
        fs = np.array([-abs(r.matrix[2, 2]) for r in rows])

        def f(calL: float) -> float:
            calL = float(calL)
            if calL not in mats:
                mats[calL] = S_at(calL, k)
            return -abs(mats[calL][2, 2])

        x, _ = _minimize_in(f, xs, fs, calL_tol)
        out = _Inner(k, x, mats[x], float(im_z))
        inner_cache[k] = out
        log.info("inner k=%.10f: calL=%.6f |S22|=%.6f arg-pi=%+.3e", k, x, abs(out.S22), out.alpha_minus_pi)
        return out

    lo, hi = inner(ka), inner(kb)
    diag = {
        "im_Z22": {"k_lo": ka, "k_hi": kb, "lo": lo.im_Z22, "hi": hi.im_Z22},
        "alpha_minus_pi": {"lo": lo.alpha_minus_pi, "hi": hi.alpha_minus_pi},
        "im_Z22_sign_change": bool(np.sign(lo.im_Z22) != np.sign(hi.im_Z22)),
    }
    if np.sign(lo.alpha_minus_pi) == np.sign(hi.alpha_minus_pi):
        raise HypothesisNotObservedError(
            f"arg S22 - pi has the same sign at k={ka:.8g} ({lo.alpha_minus_pi:+.3e}) and k={kb:.8g} "
            f"({hi.alpha_minus_pi:+.3e}); Im Z22 = {lo.im_Z22:+.3e}, {hi.im_Z22:+.3e}",
            diag,
        )
    outer: List[Tuple[float, float]] = []

    def g(k: float) -> float:
        r = inner(float(k))
        outer.append((float(k), r.alpha_minus_pi))
        return r.alpha_minus_pi

    k_star = brentq(g, ka, kb, xtol=k_tol)
    best = inner(float(k_star))
    obj = abs(best.S22 + 1.0)
    diag.update({
        "h": h,
        "outer": [{"k": k, "alpha_minus_pi": a} for k, a in outer],
        "abs_S21": float(abs(best.S[2, 1])),
        "abs_S22": float(abs(best.S22)),
        "S22": {"re": best.S22.real, "im": best.S22.imag},
        "evaluations": len(history),
    })
    log.info("trapped mode at k=%.8f calL=%.6f |S22+1|=%.3e", best.k, best.calL, obj)
    return SearchResult(
        location=(best.k, best.calL),
        objective=float(obj),
        converged=obj <= TRAPPED_TOL,
        history=history,
        bracket=(ka, kb),
        diagnostics=diag,
    )


# --- asymptotic fit -----------------------------------------------------------


@dataclass
class AsymptoticFit:
    """Comparison of a sweep with the asymptotic circles of ``Sinf``.

    ``circle_distance`` and ``asy_distance`` map ``"11"``, ``"12"``,
    ``"22"`` to per-row distances (to the circle and to the asymptotic
    value).  ``error_norm`` is the Frobenius norm of ``S - S_asy``.
    ``rate`` is minus the fitted slope of ``ln error_norm`` against the
    parameter, or ``None`` when the fit is rejected (see ``fit_note``).
    """

    params: np.ndarray
    circle_distance: Dict[str, np.ndarray]
    asy_distance: Dict[str, np.ndarray]
    error_norm: np.ndarray
    rate: Optional[float]
    intercept: Optional[float]
    fit_note: str
    predicted_zeros: List[float]
    observed_minima: List[float]
    zero_offsets: List[float]
    degenerate: bool = False

    def to_dict(self) -> dict:
        as_list = lambda d: {key: [float(x) for x in v] for key, v in d.items()}
        return {
            "params": [float(p) for p in self.params],
            "circle_distance": as_list(self.circle_distance),
            "asy_distance": as_list(self.asy_distance),
            "error_norm": [float(e) for e in self.error_norm],
            "rate": self.rate,
            "intercept": self.intercept,
            "fit_note": self.fit_note,
            "predicted_zeros": self.predicted_zeros,
            "observed_minima": self.observed_minima,
            "zero_offsets": self.zero_offsets,
            "degenerate": self.degenerate,
        }


def observed_minima(params: np.ndarray, values: np.ndarray) -> List[float]:
    """Interior local minima of ``|values|``, refined by a parabola through ``|values|^2``."""
    f = np.abs(values) ** 2
    out = []
    for i in range(1, len(f) - 1):
        if f[i] < f[i - 1] and f[i] <= f[i + 1]:
            x0, x1, x2 = params[i - 1 : i + 2]
            y0, y1, y2 = f[i - 1 : i + 2]
            den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0)
            num = (x1 - x0) ** 2 * (y1 - y2) - (x1 - x2) ** 2 * (y1 - y0)
            x = x1 - 0.5 * num / den if den != 0 else x1
            out.append(float(min(max(x, x0), x2)))
    return out


def fit_asymptotics(
    table: SweepTable,
    Sinf: ScatteringMatrix,
    param_min: Optional[float] = None,
    param_max: Optional[float] = None,
    floor: float = 1e-12,
    zero_tol: float = 1e-3,
) -> AsymptoticFit:
    """Distances of the sweep to the asymptotic prediction and its decay rate.

    The log-linear fit uses rows in ``[param_min, param_max]`` whose error
    exceeds ``floor``; with fewer than three such rows the fit is rejected.
    In the degenerate case ``|s33| = 1`` the rows are compared with the
    limiting 2x2 block instead and no circles exist.
    """
    if not math.isnan(Sinf.k) and abs(Sinf.k - table.k) > 1e-12:
        raise InconsistentInputError(f"table at k={table.k!r} but Sinf at k={Sinf.k!r}")
    if table.n != 2:
        raise InvalidArgumentError("asymptotic fit needs a table of 2x2 matrices")
    rows = table.ok_rows()
    params = np.array([r.param for r in rows])
    S = np.array([r.matrix.entries for r in rows]).reshape(len(rows), 2, 2)
    keys = {"11": (0, 0), "12": (0, 1), "22": (1, 1)}
    k = table.k
    degenerate = False
    try:
        circles = dict(zip(keys, smx.circles_of(Sinf)))
        asy = np.array([smx.asymptotic_matrix(Sinf, k, p + table.phase_offset).entries for p in params])
        asy = asy.reshape(len(rows), 2, 2)
    except DegenerateCaseError:
        degenerate = True
        circles = {}
        asy = np.broadcast_to(smx.limit_matrix_degenerate(Sinf).entries, (len(rows), 2, 2))
    circle_distance = {key: circles[key].distance(S[:, i, j]) for key, (i, j) in keys.items()} if circles else {}
    asy_distance = {key: np.abs(S[:, i, j] - asy[:, i, j]) for key, (i, j) in keys.items()}
    err = np.linalg.norm((S - asy).reshape(len(rows), -1), axis=1)

    rate = intercept = None
    sel = np.ones(len(rows), bool)
    if param_min is not None:
        sel &= params >= param_min
    if param_max is not None:
        sel &= params <= param_max
    sel &= err > floor
    if degenerate:
        note = "degenerate limit matrix: compared with the limiting block, no decay fit"
    elif sel.sum() < 3:
        note = f"degenerate fit: {int(sel.sum())} rows above the error floor {floor:g}"
    else:
        slope, icpt = np.polyfit(params[sel], np.log(err[sel]), 1)
        rate, intercept = float(-slope), float(icpt)
        note = f"least-squares fit over {int(sel.sum())} rows"

    predicted: List[float] = []
    if not degenerate and len(params):
        try:
            Lmax = params[-1] + table.phase_offset
            predicted = [L - table.phase_offset for L in smx.zero_transmission_phases(Sinf, k, L_max=Lmax, tol=zero_tol)]
        except (InvalidArgumentError, InconsistentInputError) as exc:
            note += f"; no zero prediction ({exc})"
    observed = observed_minima(params, S[:, 0, 1]) if len(params) >= 3 else []
    offsets = []
    for L in observed:
        if predicted:
            j = int(np.argmin([abs(L - p) for p in predicted]))
            offsets.append(float(L - predicted[j]))
    return AsymptoticFit(params, circle_distance, asy_distance, err, rate, intercept, note,
                         [float(p) for p in predicted], observed, offsets, degenerate)
