"""Modal transparent conditions and incident forcing on channel truncations.

On a truncation line the trace of the field is expanded in the
orthonormal transverse basis

    phi_0(s) = 1 / sqrt(w),    phi_n(s) = sqrt(2 / w) cos(n pi s / w),

with ``s`` the transverse coordinate measured from the channel's lower
(or left) wall and ``w`` the channel width.  An outgoing field satisfies
``d_n c_n = lambda_n c_n`` mode by mode, with ``lambda_0 = i k`` and
``lambda_n = -sqrt((n pi / w)^2 - k^2)`` for the decaying evanescent modes.

In the augmented problem the first evanescent mode of the left channel is
replaced by the pair of wave packets

    W^{-+}(x, y) = (e^{-beta x} -+ i e^{beta x}) cos(pi y) / sqrt(2 beta),

and the outgoing packet ``W^+`` is characterised by a complex Robin
coefficient ``zeta`` obtained by eliminating its amplitude from the
trace/flux pair at the truncation line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from .errors import ConfigurationError, CutoffError, InvalidArgumentError
from .geometry import DomainSpec

CUTOFF_EPS = 1e-8
DEFAULT_MODES = 15
AXES = ("x-", "x+", "y+")


@dataclass(frozen=True)
class ChannelSpec:
    """One open end of the truncated guide.

    ``transverse_start`` is the coordinate of the wall from which the
    transverse coordinate ``s`` is measured (``y = 0`` for the ducts, the
    left branch wall for the branch).
    """

    id: int
    axis: str
    width: float
    truncation_coordinate: float
    n_modes: int = DEFAULT_MODES
    transverse_start: float = 0.0

    def __post_init__(self):
        if self.axis not in AXES:
            raise InvalidArgumentError(f"unknown channel axis {self.axis!r}")
        if not self.width > 0:
            raise InvalidArgumentError("channel width must be positive")
        if self.n_modes < 1:
            raise InvalidArgumentError("n_modes must be at least 1")

    @property
    def tag(self) -> str:
        return f"channel:{self.id}"

    @property
    def line_axis(self) -> str:
        """``"x"`` if cross-sections are lines ``x = const``."""
        return "x" if self.axis in ("x-", "x+") else "y"

    @property
    def transverse_range(self):
        return (self.transverse_start, self.transverse_start + self.width)

    def transverse(self, pts: np.ndarray) -> np.ndarray:
        """Transverse coordinate ``s`` of points (..., 2)."""
        pts = np.asarray(pts)
        c = pts[..., 1] if self.line_axis == "x" else pts[..., 0]
        return c - self.transverse_start

    def basis(self, n: int, s: np.ndarray) -> np.ndarray:
        """Orthonormal transverse function ``phi_n(s)``."""
        w = self.width
        if n == 0:
            return np.full(np.shape(s), 1.0 / math.sqrt(w))
        return math.sqrt(2.0 / w) * np.cos(n * math.pi * np.asarray(s) / w)

    def basis_matrix(self, pts: np.ndarray) -> np.ndarray:
        s = self.transverse(pts)
        return np.array([self.basis(n, s) for n in range(self.n_modes)])


def channels_of(spec: DomainSpec, n_modes: int = DEFAULT_MODES) -> Dict[int, ChannelSpec]:
    """Channel specs of the truncated domain, keyed by channel id."""
    out = {}
    for cid, axis in spec.channels.items():
        if axis == "x-":
            out[cid] = ChannelSpec(cid, axis, 1.0, spec.x_left, n_modes)
        elif axis == "x+":
            out[cid] = ChannelSpec(cid, axis, 1.0, spec.x_right, n_modes)
        else:
            b0 = spec.branch_x_center - spec.branch_width / 2
            out[cid] = ChannelSpec(cid, axis, spec.branch_width, spec.branch_truncation, n_modes, b0)
    return out


@dataclass(frozen=True)
class DtN:
    """Per-mode admittances of an outgoing condition on one channel."""

    channel: ChannelSpec
    k: float
    admittances: np.ndarray  # complex, length n_modes

    def basis(self, n: int) -> Callable[[np.ndarray], np.ndarray]:
        return lambda s: self.channel.basis(n, s)


def standard_dtn(channel: ChannelSpec, k: float) -> DtN:
    """Decaying-mode transparent condition.

    Raises :class:`CutoffError` if ``k * width`` is within ``1e-8`` of a
    multiple of pi for some retained mode.
    """
    if not k > 0:
        raise InvalidArgumentError(f"k must be positive, got {k}")
    w = channel.width
    lam = np.empty(channel.n_modes, dtype=complex)
    for n in range(channel.n_modes):
        if abs(k * w - n * math.pi) <= CUTOFF_EPS:
            raise CutoffError(f"k*width = {k * w:.12g} is at the cut-off of mode {n}")
        kn = n * math.pi / w
        if n == 0:
            lam[n] = 1j * k
        elif kn > k:
            lam[n] = -math.sqrt(kn * kn - k * k)
        else:
            # a second propagating mode: outside the monomode regime
            raise CutoffError(f"mode {n} propagates in channel {channel.id} (k*width = {k * w:.6g} > {n}*pi)")
    return DtN(channel, float(k), lam)


@dataclass(frozen=True)
class PacketCondition:
    """Robin data for mode 1 on the left truncation ``x = x0``.

    ``zeta`` : coefficient with ``d_n c_1 = zeta c_1`` for any pure
    outgoing packet.  ``trace`` / ``flux`` : orthonormal mode-1 coefficient
    of the unit incoming packet ``W^-`` and of its normal derivative at
    ``x0`` (normal pointing to ``-x``).
    """

    k: float
    x0: float
    beta: float
    zeta: complex
    trace: complex
    flux: complex

    @property
    def forcing(self) -> complex:
        """Mode-1 forcing ``flux - zeta * trace`` of a unit incoming packet."""
        return self.flux - self.zeta * self.trace

    def residual(self, c: Callable[[float], complex], dc: Callable[[float], complex]) -> complex:
        """``d_n c - zeta c`` at ``x0`` for a mode-1 profile ``c(x)`` with x-derivative ``dc``."""
        return -dc(self.x0) - self.zeta * c(self.x0)


def packet_profiles(beta: float):
    """Closed-form x-profiles ``p^-``, ``p^+`` and their derivatives."""
    pm = lambda x: np.exp(-beta * x) + 1j * np.exp(beta * x)
    pp = lambda x: np.exp(-beta * x) - 1j * np.exp(beta * x)
    dpm = lambda x: -beta * pp(x)
    dpp = lambda x: -beta * pm(x)
    return pm, pp, dpm, dpp


def packet_condition(k: float, truncation_x: float) -> PacketCondition:
    """Robin coefficient and unit-packet forcing at the left truncation.

    With ``p^-+ = e^{-beta x} +- i e^{beta x}`` one has ``(p^+)' = -beta p^-``,
    so the outgoing packet obeys ``-c' = beta p^-/p^+ c`` on the line.
    """
    if not 0.0 < k < math.pi:
        raise InvalidArgumentError(f"k must lie in (0, pi), got {k}")
    beta2 = math.pi**2 - k * k
    beta = math.sqrt(beta2)
    if beta <= CUTOFF_EPS:
        raise CutoffError(f"beta = {beta:.3g} below threshold")
    pm, pp, dpm, _ = packet_profiles(beta)
    x0 = float(truncation_x)
    zeta = beta * pm(x0) / pp(x0)
    # W^- = p^- cos(pi y)/sqrt(2 beta) = p^-/(2 sqrt(beta)) * phi_1
    norm = 1.0 / (2.0 * math.sqrt(beta))
    trace = norm * pm(x0)
    flux = -norm * dpm(x0)
    return PacketCondition(float(k), x0, beta, complex(zeta), complex(trace), complex(flux))


@dataclass(frozen=True)
class ModalForcing:
    """Right-hand side ``amplitude * P_mode`` on the channel's boundary rows."""

    channel: int
    mode: int
    amplitude: complex
    label: str


def incident_forcing(channel: ChannelSpec, kind: str, k: float, packet: Optional[PacketCondition] = None,
                     amplitude: complex = 1.0) -> ModalForcing:
    """Boundary forcing for a unit incoming wave.

    ``kind`` is ``"mode"`` for the propagating mode ``e^{ikx}/sqrt(2k)``-type
    incoming wave (in the channel's own orientation, phase referenced at
    the coordinate origin) or ``"packet"`` for ``W^-``.
    """
    if kind == "packet":
        if packet is None:
            raise ConfigurationError(f"packet forcing requested on channel {channel.id} without a packet condition")
        return ModalForcing(channel.id, 1, amplitude * packet.forcing, f"packet:{channel.id}")
    if kind != "mode":
        raise InvalidArgumentError(f"unknown incident kind {kind!r}")
    # incoming wave value at the truncation, as a phi_0 coefficient
    c = amplitude * incoming_mode(channel, k)(channel.truncation_coordinate) * math.sqrt(channel.width)
    # d_n u_inc = -i k u_inc for every orientation; subtract the outgoing admittance i k
    return ModalForcing(channel.id, 0, -2j * k * c, f"mode:{channel.id}")


def incoming_mode(channel: ChannelSpec, k: float) -> Callable[[np.ndarray], np.ndarray]:
    """Longitudinal profile of the unit incoming propagating mode."""
    a = 1.0 / math.sqrt(2.0 * k * channel.width)
    if channel.axis == "x-":
        return lambda x: a * np.exp(1j * k * np.asarray(x))
    return lambda x: a * np.exp(-1j * k * np.asarray(x))


def outgoing_mode(channel: ChannelSpec, k: float) -> Callable[[np.ndarray], np.ndarray]:
    a = 1.0 / math.sqrt(2.0 * k * channel.width)
    if channel.axis == "x-":
        return lambda x: a * np.exp(-1j * k * np.asarray(x))
    return lambda x: a * np.exp(1j * k * np.asarray(x))
