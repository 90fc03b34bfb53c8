"""Scattering solves and modal extraction of the scattering matrices.

Each matrix is built from a handful of forced problems that share one
factorization.  A *port* is a pair ``(channel id, "mode" | "packet")``;
entry ``(i, j)`` of the matrix is the outgoing amplitude on port ``i`` of
the solution forced by a unit incoming wave on port ``j``.

Amplitudes are read on two cross-sections per channel: the transverse
projection on the constant mode (or on ``cos(pi y)`` for the packets) is
sampled at both lines and the two-term longitudinal expansion is solved
for its incoming and outgoing coefficients.  All phases are referenced to
``x = 0`` in the ducts and ``y = 0`` in the branch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidArgumentError, SectionPlacementError, SolverError
from .fem import FieldSolution, assemble, edge_projection, solve
from .geometry import DomainSpec
from .mesh import Mesh, triangulate
from .radiation import (
    DEFAULT_MODES,
    ChannelSpec,
    PacketCondition,
    channels_of,
    incident_forcing,
    incoming_mode,
    outgoing_mode,
    packet_condition,
    packet_profiles,
    standard_dtn,
)
from .smx import ScatteringMatrix

log = logging.getLogger(__name__)

DEFAULT_SECTIONS = {"x-": (-1.2, -1.6), "x+": (1.2, 1.6), "y+": (2.2, 2.6)}
MIN_SEPARATION = 0.1
MIN_SINE = 0.2  # smallest |sin(k * spacing)| accepted by the separation solve

Port = Tuple[int, str]
Field = Union[FieldSolution, Callable[[np.ndarray, np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class ModalAmplitudes:
    """Incoming/outgoing amplitudes of one channel in the normalized bases."""

    channel: int
    sections: Tuple[float, float]
    incoming: complex
    outgoing: complex
    packet_in: Optional[complex] = None
    packet_out: Optional[complex] = None

    def port(self, kind: str, direction: str) -> complex:
        if kind == "mode":
            return self.outgoing if direction == "out" else self.incoming
        return self.packet_out if direction == "out" else self.packet_in


def default_sections(spec_or_channel, channel: Optional[ChannelSpec] = None) -> Tuple[float, float]:
    ch = channel if channel is not None else spec_or_channel
    return DEFAULT_SECTIONS[ch.axis]


def _projection(fld: Field, ch: ChannelSpec, coord: float, n: int) -> complex:
    """Coefficient of the transverse profile ``cos(n pi s / w)`` at a section.

    For ``n = 0`` this is the mean of the trace; for ``n >= 1`` it is
    ``(2/w) int u cos(n pi s/w) ds``.
    """
    w = ch.width
    lo, hi = ch.transverse_range
    if n == 0:
        wf = lambda s: np.ones_like(s) / w
    else:
        wf = lambda s: (2.0 / w) * np.cos(n * math.pi * (s - lo) / w)
    if isinstance(fld, FieldSolution):
        return fld.line_integral(ch.line_axis, coord, lo, hi, wf)
    xg, wg = np.polynomial.legendre.leggauss(48)
    s = lo + 0.5 * (xg + 1) * w
    if ch.line_axis == "x":
        vals = fld(np.full_like(s, coord), s)
    else:
        vals = fld(s, np.full_like(s, coord))
    return complex(np.sum(np.asarray(vals) * wf(s) * wg) * 0.5 * w)


def _check_sections(ch: ChannelSpec, sections: Sequence[float], k: float, packet: bool) -> Tuple[float, float]:
    if len(sections) != 2:
        raise InvalidArgumentError("exactly two sections are needed")
    t1, t2 = (float(t) for t in sections)
    if abs(t1 - t2) < MIN_SEPARATION:
        raise SectionPlacementError(
            f"sections {t1:g} and {t2:g} are closer than {MIN_SEPARATION}", suggested_spacing=math.pi / (2 * k)
        )
    if abs(math.sin(k * (t1 - t2))) < MIN_SINE:
        raise SectionPlacementError(
            f"sections {t1:g}, {t2:g} are close to a multiple of the half wavelength pi/k = {math.pi / k:.4g}; "
            f"use a spacing near {math.pi / (2 * k):.4g}",
            suggested_spacing=math.pi / (2 * k),
        )
    return t1, t2


def modal_amplitudes(
    fld: Field,
    channel: ChannelSpec,
    sections: Optional[Sequence[float]] = None,
    k: Optional[float] = None,
    packet: bool = False,
) -> ModalAmplitudes:
    """Separate incoming and outgoing waves of ``fld`` in ``channel``.

    Parameters
    ----------
    fld : FieldSolution or callable
        Discrete field, or a function ``u(x, y)`` evaluated by high-order
        quadrature (exact data).
    channel : ChannelSpec
    sections : pair of floats, optional
        Longitudinal coordinates of the two cross-sections; defaults to
        ``-1.2/-1.6``, ``1.2/1.6`` or ``2.2/2.6`` by channel orientation.
    k : float, optional
        Wavenumber; taken from ``fld`` when it is a FieldSolution.
    packet : bool
        Also separate the two wave packets carried by the first transverse
        mode (left channel of the augmented problems).
    """
    if k is None:
        if not isinstance(fld, FieldSolution):
            raise InvalidArgumentError("k is required for callable fields")
        k = fld.k
    sections = default_sections(channel) if sections is None else sections
    t1, t2 = _check_sections(channel, sections, k, packet)
    fin, fout = incoming_mode(channel, k), outgoing_mode(channel, k)
    c = np.array([_projection(fld, channel, t, 0) for t in (t1, t2)])
    A = np.array([[fin(t1), fout(t1)], [fin(t2), fout(t2)]])
    a_in, a_out = np.linalg.solve(A, c)
    p_in = p_out = None
    if packet:
        if channel.axis != "x-" or abs(channel.width - 1.0) > 1e-14:
            raise InvalidArgumentError("wave packets are only defined on the unit-width left channel")
        beta = math.sqrt(math.pi**2 - k * k)
        pm, pp, _, _ = packet_profiles(beta)
        c1 = np.array([_projection(fld, channel, t, 1) for t in (t1, t2)])
        B = np.array([[pm(t1), pp(t1)], [pm(t2), pp(t2)]]) / math.sqrt(2 * beta)
        p_in, p_out = np.linalg.solve(B, c1)
        p_in, p_out = complex(p_in), complex(p_out)
    return ModalAmplitudes(channel.id, (t1, t2), complex(a_in), complex(a_out), p_in, p_out)


# --- forced problems --------------------------------------------------------


@dataclass
class ScatteringRun:
    """Everything produced by one scattering computation."""

    matrix: ScatteringMatrix
    ports: List[Port]
    fields: List[FieldSolution]
    amplitudes: List[Dict[int, ModalAmplitudes]]
    channels: Dict[int, ChannelSpec]
    sections: Dict[int, Tuple[float, float]]
    mesh: Mesh
    packet_channel: Optional[int] = None
    diagnostics: dict = field(default_factory=dict)


def _ports_for(spec: DomainSpec) -> List[Port]:
    ids = sorted(spec.channels)
    if spec.packet_channel:
        return [(1, "mode"), (1, "packet")] + [(c, "mode") for c in ids if c != 1]
    return [(c, "mode") for c in ids]


def _param_of(spec: DomainSpec) -> Optional[float]:
    if spec.kind == "Omega_L":
        return spec.half_length
    if spec.kind in ("omega_L", "Omega_inf") and spec.has_branch:
        return spec.branch_top
    return None


def _kind_of(spec: DomainSpec) -> str:
    return {"omega_L": "standard", "omega_inf": "limit", "Omega_L": "augmented", "Omega_inf": "augmented-limit"}[spec.kind]


def solve_scattering(
    spec: DomainSpec,
    k: float,
    h: float,
    order: int = 2,
    n_modes: int = DEFAULT_MODES,
    sections: Optional[Dict[int, Sequence[float]]] = None,
    mesh: Optional[Mesh] = None,
) -> ScatteringRun:
    """Solve the forced problems of ``spec`` and extract the matrix."""
    if not 0.0 < k < math.pi:
        raise InvalidArgumentError(f"k must lie in (0, pi), got {k}")
    channels = channels_of(spec, n_modes)
    secs = {cid: tuple(DEFAULT_SECTIONS[ch.axis]) for cid, ch in channels.items()}
    if sections:
        secs.update({cid: tuple(v) for cid, v in sections.items()})
    if mesh is None:
        xs = sorted({t for cid, v in secs.items() if channels[cid].line_axis == "x" for t in v})
        ys = sorted({t for cid, v in secs.items() if channels[cid].line_axis == "y" for t in v})
        mesh = triangulate(spec, h, sections=xs, branch_sections=ys)
    system = assemble(mesh, k, order)
    packet_ch = 1 if spec.packet_channel else None
    pc: Optional[PacketCondition] = None
    P = {}
    for cid, ch in channels.items():
        lam = standard_dtn(ch, k).admittances.copy()
        if cid == packet_ch:
            pc = packet_condition(k, ch.truncation_coordinate)
            lam[1] = pc.zeta
        edges = mesh.tagged_edges(ch.tag)
        P[cid] = edge_projection(system.dof_map, mesh.vertices, edges, ch.basis_matrix)
        system.add_low_rank(P[cid], -lam)
    ports = _ports_for(spec)
    fields, amps = [], []
    param = _param_of(spec)
    for cid, kind in ports:
        f = incident_forcing(channels[cid], kind, k, pc if cid == packet_ch else None)
        rhs = f.amplitude * P[f.channel][f.mode]
        try:
            sol = solve(system, rhs, label=f.label)
        except SolverError as exc:
            diag = dict(exc.diagnostic)
            diag.update({"k": k, "param": param, "port": f.label})
            raise SolverError(f"{exc} at k={k:.10g}, param={param}", diag) from exc
        fields.append(sol)
        amps.append(
            {c: modal_amplitudes(sol, channels[c], secs[c], k, packet=(c == packet_ch)) for c in channels}
        )
    n = len(ports)
    S = np.empty((n, n), dtype=complex)
    for j in range(n):
        for i, (cid, kind) in enumerate(ports):
            S[i, j] = amps[j][cid].port(kind, "out")
    M = ScatteringMatrix(S, k=float(k), param=param, kind=_kind_of(spec))
    diag = {"unitarity": M.unitarity_residual(), "symmetry": M.symmetry_residual(), "n_dofs": system.n_dofs}
    if spec.packet_channel:
        diag["abs_S22_plus_1"] = float(abs(S[1, 1] + 1))
    log.info("%s matrix at k=%.8g param=%s: unitarity %.2e symmetry %.2e", M.kind, k, param, diag["unitarity"], diag["symmetry"])
    return ScatteringRun(M, ports, fields, amps, channels, secs, mesh, packet_ch, diag)


def _expect(spec: DomainSpec, kind: str) -> None:
    if spec.kind != kind:
        raise InvalidArgumentError(f"expected a {kind} domain, got {spec.kind}")


def scattering_matrix(spec: DomainSpec, k: float, h: float, **kw) -> ScatteringMatrix:
    """2x2 matrix of a guide with a closed branch (``omega_L``)."""
    _expect(spec, "omega_L")
    return solve_scattering(spec, k, h, **kw).matrix


def limit_scattering_matrix(spec: DomainSpec, k: float, h: float, **kw) -> ScatteringMatrix:
    """3x3 matrix of the guide with an open branch (``omega_inf``)."""
    _expect(spec, "omega_inf")
    if k * spec.branch_width >= math.pi:
        raise InvalidArgumentError("branch must be monomode: k * width < pi")
    return solve_scattering(spec, k, h, **kw).matrix


def augmented_scattering_matrix(spec: DomainSpec, k: float, h: float, **kw) -> ScatteringMatrix:
    """2x2 augmented matrix of the half guide (``Omega_L``)."""
    _expect(spec, "Omega_L")
    return solve_scattering(spec, k, h, **kw).matrix


def augmented_limit_matrix(spec: DomainSpec, k: float, h: float, **kw) -> ScatteringMatrix:
    """3x3 augmented matrix of the full guide (``Omega_inf``)."""
    _expect(spec, "Omega_inf")
    return solve_scattering(spec, k, h, **kw).matrix


# --- symplectic form --------------------------------------------------------


def symplectic_pairing(
    field_a: Field,
    field_b: Field,
    channels: Dict[int, ChannelSpec],
    sections: Optional[Dict[int, Sequence[float]]] = None,
    packet_channel: Optional[int] = None,
    k: Optional[float] = None,
) -> complex:
    """Cross-section pairing ``q(u, v)`` from modal amplitudes.

    With the unit-flux normalization of the modes and packets,
    ``q(u, v) = i * sum (out_u conj(out_v) - in_u conj(in_v))`` over the
    propagating modes of every channel and the packets of the packet
    channel.  Exponentially decaying remainders do not contribute.
    """
    if isinstance(field_a, FieldSolution) and isinstance(field_b, FieldSolution):
        if field_a.mesh is not field_b.mesh and not (
            field_a.mesh.vertices.shape == field_b.mesh.vertices.shape
            and np.array_equal(field_a.mesh.vertices, field_b.mesh.vertices)
            and np.array_equal(field_a.mesh.triangles, field_b.mesh.triangles)
        ):
            raise InvalidArgumentError("fields live on different meshes")
        if field_a.k != field_b.k:
            raise InvalidArgumentError("fields have different wavenumbers")
        if len(field_a.values) != len(field_b.values):
            raise InvalidArgumentError("fields have different element orders")
    sections = sections or {}
    q = 0.0j
    for cid, ch in channels.items():
        sec = sections.get(cid)
        pk = cid == packet_channel
        a = modal_amplitudes(field_a, ch, sec, k, packet=pk)
        b = modal_amplitudes(field_b, ch, sec, k, packet=pk)
        q += a.outgoing * np.conj(b.outgoing) - a.incoming * np.conj(b.incoming)
        if pk:
            q += a.packet_out * np.conj(b.packet_out) - a.packet_in * np.conj(b.packet_in)
    return complex(1j * q)
