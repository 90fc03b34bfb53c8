"""Closed-form algebra of symmetric unitary scattering matrices.

A 3x3 limit matrix ``Sinf`` (two duct channels plus one branch channel, or
the augmented analogue) determines the large-branch behaviour of the 2x2
matrix of the closed geometry through

    s_ij(L) ~ s_ij + s_i3 s_3j / (exp(-2ikL) - s_33),      i, j in {1, 2}

where ``L`` is the coordinate of the closing wall measured from the phase
reference of channel 3.  As ``L`` varies each coefficient runs on a circle
(image of the unit circle by a Moebius map).  Everything here is pure and
works on plain numpy arrays wrapped in :class:`ScatteringMatrix`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import least_squares

from .errors import DegenerateCaseError, InconsistentInputError, InvalidArgumentError

EPS_DEG = 1e-8
COUPLING_THRESHOLD = 1e-10
KINDS = ("standard", "limit", "augmented", "augmented-limit")


@dataclass(frozen=True)
class ScatteringMatrix:
    """Square complex scattering matrix with its provenance.

    ``param`` is the geometric parameter (branch top ``L`` or half-guide
    length) for finite geometries and ``None`` for limit matrices.
    """

    entries: np.ndarray
    k: float = float("nan")
    param: Optional[float] = None
    kind: str = "standard"
    degenerate: bool = False

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] not in (2, 3):
            raise InvalidArgumentError(f"scattering matrix must be 2x2 or 3x3, got shape {m.shape}")
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown matrix kind {self.kind!r}")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __getitem__(self, ij):
        """1-based access, ``S[1, 2]`` is s_12."""
        i, j = ij
        return self.entries[i - 1, j - 1]

    def unitarity_residual(self) -> float:
        m = self.entries
        return float(np.linalg.norm(m @ m.conj().T - np.eye(self.n)))

    def symmetry_residual(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.T)))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "k": self.k,
            "param": self.param,
            "degenerate": self.degenerate,
            "re": self.entries.real.tolist(),
            "im": self.entries.imag.tolist(),
            "unitarity_residual": self.unitarity_residual(),
            "symmetry_residual": self.symmetry_residual(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScatteringMatrix":
        entries = np.array(d["re"], dtype=float) + 1j * np.array(d["im"], dtype=float)
        k = d.get("k")
        return cls(
            entries,
            k=float("nan") if k is None else float(k),
            param=d.get("param"),
            kind=d.get("kind", "standard"),
            degenerate=bool(d.get("degenerate", False)),
        )


@dataclass(frozen=True)
class MobiusCircle:
    center: complex
    radius: float

    def distance(self, z) -> np.ndarray:
        """Distance from point(s) ``z`` to the circle."""
        return np.abs(np.abs(np.asarray(z) - self.center) - self.radius)

    def points(self, n: int = 256) -> np.ndarray:
        t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        return self.center + self.radius * np.exp(1j * t)


@dataclass(frozen=True)
class GaugePair:
    a1: complex
    a2: complex
    L: float
    k: float


@dataclass(frozen=True)
class MinusOnePredicates:
    relationT0_residual: float
    im_Z22: float
    tangency_residual: float
    Z22: complex = field(default=0j)
    P22: float = 0.0

    def to_dict(self) -> dict:
        return {
            "relationT0_residual": self.relationT0_residual,
            "im_Z22": self.im_Z22,
            "tangency_residual": self.tangency_residual,
            "Z22": {"re": self.Z22.real, "im": self.Z22.imag},
            "P22": self.P22,
        }


def _entries(S) -> np.ndarray:
    return S.entries if isinstance(S, ScatteringMatrix) else np.asarray(S, dtype=complex)


def _require_3x3(m: np.ndarray) -> None:
    if m.shape != (3, 3):
        raise InvalidArgumentError(f"expected a 3x3 limit matrix, got shape {m.shape}")


def _require_nondegenerate(m: np.ndarray) -> None:
    if abs(m[2, 2]) >= 1.0 - EPS_DEG:
        raise DegenerateCaseError(
            f"|s33| = {abs(m[2, 2]):.12g} is within {EPS_DEG:g} of 1; use limit_matrix_degenerate"
        )


def couplings(S) -> complex:
    """Product s12 s13 s23 (nonzero means all three channels talk)."""
    m = _entries(S)
    return m[0, 1] * m[0, 2] * m[1, 2]


def random_symmetric_unitary(n: int, seed: int) -> ScatteringMatrix:
    """Symmetric unitary matrix ``Q Q^T`` with ``Q`` a Haar-random unitary."""
    if n not in (2, 3):
        raise InvalidArgumentError(f"n must be 2 or 3, got {n}")
    rng = np.random.default_rng(seed)
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    m = q @ q.T
    m = 0.5 * (m + m.T)
    return ScatteringMatrix(m, kind="limit" if n == 3 else "standard")


def gauge_coefficients(Sinf, k: float, L: float) -> GaugePair:
    m = _entries(Sinf)
    _require_3x3(m)
    _require_nondegenerate(m)
    den = np.exp(-2j * k * L) - m[2, 2]
    return GaugePair(a1=m[0, 2] / den, a2=m[1, 2] / den, L=float(L), k=float(k))


def asymptotic_matrix(Sinf, k: float, L: float) -> ScatteringMatrix:
    """2x2 large-branch approximation of the closed-geometry matrix."""
    m = _entries(Sinf)
    g = gauge_coefficients(m, k, L)
    a = np.array([g.a1, g.a2])
    entries = m[:2, :2] + np.outer(a, m[2, :2])
    kind = "augmented" if isinstance(Sinf, ScatteringMatrix) and Sinf.kind.startswith("augmented") else "standard"
    return ScatteringMatrix(entries, k=float(k), param=float(L), kind=kind)


def circles_of(Sinf) -> Tuple[MobiusCircle, MobiusCircle, MobiusCircle]:
    """Asymptotic orbits (gamma_11, gamma_12, gamma_22) of the 2x2 entries."""
    m = _entries(Sinf)
    _require_3x3(m)
    _require_nondegenerate(m)
    s33 = m[2, 2]
    den = 1.0 - abs(s33) ** 2
    out = []
    for i, j in ((0, 0), (0, 1), (1, 1)):
        center = m[i, j] + m[i, 2] * np.conj(s33) * m[2, j] / den
        radius = abs(m[i, 2] * m[2, j]) / den
        out.append(MobiusCircle(complex(center), float(radius)))
    return tuple(out)


def zero_transmission_phases(Sinf, k: float, L_max: Optional[float] = None, tol: float = 1e-8) -> List[float]:
    """Wall positions ``L > 0`` at which the asymptotic s12 vanishes.

    The zero sits at ``exp(-2ikL) = z`` with ``z = s33 - s13 s32 / s12``;
    unitarity forces ``|z| = 1``.  Returns the increasing roots in
    ``(0, L_max]``; by default the first root and the next one, a period
    ``pi/k`` later.  ``tol`` bounds the accepted deviation of ``|z|``
    from one (raise it for matrices computed numerically).
    """
    m = _entries(Sinf)
    _require_3x3(m)
    if abs(m[0, 1]) <= COUPLING_THRESHOLD or abs(m[0, 2] * m[1, 2]) <= COUPLING_THRESHOLD:
        raise InvalidArgumentError("s12, s13, s23 must be nonzero for a transmission zero")
    if k <= 0:
        raise InvalidArgumentError("k must be positive")
    z = m[2, 2] - m[0, 2] * m[2, 1] / m[0, 1]
    dev = abs(abs(z) - 1.0)
    if dev > tol:
        raise InconsistentInputError(f"|z| - 1 = {dev:.3e} exceeds {tol:g}; Sinf is not unitary enough")
    period = np.pi / k
    # exp(-2ikL) = exp(i arg z)  =>  L = -arg(z)/(2k) mod pi/k
    first = (-np.angle(z) / (2.0 * k)) % period
    if first <= 0.0:
        first += period
    if L_max is None:
        L_max = first + period
    roots = []
    L = first
    while L <= L_max * (1.0 + 1e-15):
        roots.append(float(L))
        L = first + len(roots) * period
    return roots


def minus_one_predicates(Sinf_aug) -> MinusOnePredicates:
    """Residuals of the identities that make Gamma_22 pass through -1."""
    m = _entries(Sinf_aug)
    _require_3x3(m)
    if abs(1.0 + m[1, 1]) <= 1e-12:
        raise InconsistentInputError("S22 is -1 to 1e-12; the T0 relation is undefined")
    _require_nondegenerate(m)
    rel = abs(m[2, 0] - m[2, 1] * m[1, 0] / (1.0 + m[1, 1]))
    _, _, g22 = circles_of(m)
    return MinusOnePredicates(
        relationT0_residual=float(rel),
        im_Z22=float(g22.center.imag),
        tangency_residual=float(abs(g22.center + 1.0 - g22.radius)),
        Z22=g22.center,
        P22=g22.radius,
    )


def limit_matrix_degenerate(Sinf) -> ScatteringMatrix:
    """Top-left block, the limit of the 2x2 matrix when |s33| = 1."""
    m = _entries(Sinf)
    _require_3x3(m)
    if abs(m[2, 2]) < 1.0 - EPS_DEG:
        raise InvalidArgumentError(f"|s33| = {abs(m[2, 2]):.6g} is not degenerate")
    kind = "standard"
    k = float("nan")
    if isinstance(Sinf, ScatteringMatrix):
        k = Sinf.k
        kind = "augmented" if Sinf.kind.startswith("augmented") else "standard"
    return ScatteringMatrix(m[:2, :2].copy(), k=k, kind=kind, degenerate=True)


def _orthogonal(angles: np.ndarray) -> np.ndarray:
    a, b, c = angles
    rz = np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1]])
    ry = np.array([[np.cos(b), 0, np.sin(b)], [0, 1, 0], [-np.sin(b), 0, np.cos(b)]])
    rx = np.array([[1, 0, 0], [0, np.cos(c), -np.sin(c)], [0, np.sin(c), np.cos(c)]])
    return rz @ ry @ rx


def _from_params(p: np.ndarray) -> np.ndarray:
    o = _orthogonal(p[:3])
    return o @ np.diag(np.exp(1j * p[3:6])) @ o.T


def relation_t0_matrix(seed: int, tol: float = 1e-12, max_tries: int = 50) -> ScatteringMatrix:
    """Symmetric unitary 3x3 satisfying ``S31 (1 + S22) = S32 S21``.

    Every symmetric unitary matrix is ``O diag(exp(i theta)) O^T`` with
    ``O`` real orthogonal, so the constraint is solved by least squares in
    those six parameters; symmetry and unitarity hold by construction.
    Used as a test oracle for :func:`minus_one_predicates`.
    """
    rng = np.random.default_rng(seed)

    def resid(p):
        m = _from_params(p)
        r = m[2, 0] * (1.0 + m[1, 1]) - m[2, 1] * m[1, 0]
        return [r.real, r.imag]

    for _ in range(max_tries):
        p0 = rng.uniform(-np.pi, np.pi, 6)
        sol = least_squares(resid, p0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
        m = _from_params(sol.x)
        m = 0.5 * (m + m.T)
        rel = abs(m[2, 0] - m[2, 1] * m[1, 0] / (1.0 + m[1, 1]))
        if rel <= tol and abs(couplings(m)) > 1e-3 and abs(m[2, 2]) < 0.99:
            return ScatteringMatrix(m, kind="augmented-limit")
    raise InconsistentInputError("could not construct a T0-relation matrix")
