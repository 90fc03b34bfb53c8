"""Parametric description of the branched waveguides.

All domains live in a unit-height duct ``y in (0, 1)`` with an optional
vertical branch of width ``branch_width`` centred at ``branch_x_center``
and an optional circular Neumann obstacle.  Four kinds are supported:

``omega_L``    duct open on both sides, branch closed at ``y = branch_top``
``omega_inf``  duct open on both sides, branch open (truncated at
               ``branch_truncation`` by a transparent condition)
``Omega_L``    half-guide: open on the left, closed by a wall at
               ``x = x_right = H + calL``; the branch is closed
``Omega_inf``  open on both sides, closed branch; the left channel carries
               the wave packets of the augmented problem
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

from .errors import InvalidGeometryError

KINDS = ("omega_L", "omega_inf", "Omega_L", "Omega_inf")
CORE_MARGIN = 0.05

# Default geometry of the numerical experiments: unit branch width, disk
# obstacle B((0.2, 0.4), 0.3), branch on x in (-1/2, 1/2).
REFERENCE_OBSTACLE_CENTER = (0.2, 0.4)
REFERENCE_OBSTACLE_RADIUS = 0.3
REFERENCE_BRANCH_WIDTH = 1.0
REFERENCE_K = 0.8 * math.pi
REFERENCE_ZERO_L = 2.496


@dataclass(frozen=True)
class Disk:
    center: Tuple[float, float]
    radius: float
    polygon_sides: int = 64


@dataclass(frozen=True)
class DomainSpec:
    kind: str = "omega_L"
    branch_width: Optional[float] = None
    branch_top: Optional[float] = None
    branch_x_center: float = 0.0
    obstacle: Optional[Disk] = None
    x_left: float = -2.0
    x_right: float = 2.0
    branch_truncation: float = 3.0
    H: float = 0.5

    @property
    def has_branch(self) -> bool:
        return self.branch_width is not None

    @property
    def branch_open(self) -> bool:
        return self.kind == "omega_inf" and self.has_branch

    @property
    def right_closed(self) -> bool:
        return self.kind == "Omega_L"

    @property
    def packet_channel(self) -> bool:
        return self.kind in ("Omega_L", "Omega_inf")

    @property
    def half_length(self) -> Optional[float]:
        """Length ``calL`` of the half-guide beyond ``x = H``."""
        return self.x_right - self.H if self.right_closed else None

    @property
    def branch_end(self) -> Optional[float]:
        if not self.has_branch:
            return None
        return self.branch_truncation if self.branch_open else self.branch_top

    @property
    def channels(self) -> Dict[int, str]:
        """Channel id -> axis of the open boundaries."""
        out = {1: "x-"}
        if not self.right_closed:
            out[2] = "x+"
        if self.branch_open:
            out[3] = "y+"
        return out

    @property
    def core_box(self) -> Tuple[float, float, float]:
        """(x0, x1, y_top) of the perturbed region plus a small margin."""
        return self.core_box_with(CORE_MARGIN)

    def core_box_with(self, margin: float) -> Tuple[float, float, float]:
        """(x0, x1, y_top) of the unstructured core around the features.

        Independent of the truncations, of ``branch_top`` and of the
        half-guide length, so that families of domains share one core mesh.
        """
        xs0, xs1, ytop = [], [], 1.0
        if self.has_branch:
            xs0.append(self.branch_x_center - self.branch_width / 2)
            xs1.append(self.branch_x_center + self.branch_width / 2)
            ytop = 1.0 + margin
        if self.obstacle is not None:
            (cx, cy), r = self.obstacle.center, self.obstacle.radius
            xs0.append(cx - r)
            xs1.append(cx + r)
            if cy + r > 1.0:
                ytop = max(ytop, cy + r + margin)
        if not xs0:
            return (-0.25, 0.25, 1.0)
        return (min(xs0) - margin, max(xs1) + margin, ytop)

    def walls(self) -> List[Tuple[str, Tuple[float, float], Tuple[float, float]]]:
        """Named wall segments of the physical boundary."""
        xl, xr = self.x_left, self.x_right
        out = [("wall y=0", (xl, 0.0), (xr, 0.0))]
        if self.has_branch:
            b0 = self.branch_x_center - self.branch_width / 2
            b1 = self.branch_x_center + self.branch_width / 2
            top = self.branch_end
            out += [
                ("wall y=1", (xl, 1.0), (b0, 1.0)),
                ("wall y=1", (b1, 1.0), (xr, 1.0)),
                ("branch wall x=%g" % b0, (b0, 1.0), (b0, top)),
                ("branch wall x=%g" % b1, (b1, 1.0), (b1, top)),
            ]
            if not self.branch_open:
                out.append(("branch top y=%g" % top, (b0, top), (b1, top)))
        else:
            out.append(("wall y=1", (xl, 1.0), (xr, 1.0)))
        if self.right_closed:
            out.append(("end wall x=%g" % xr, (xr, 0.0), (xr, 1.0)))
        return out

    def contains(self, x: float, y: float) -> bool:
        if self.x_left < x < self.x_right and 0.0 < y < 1.0:
            return True
        if self.has_branch:
            b0 = self.branch_x_center - self.branch_width / 2
            b1 = self.branch_x_center + self.branch_width / 2
            return b0 < x < b1 and 1.0 <= y < self.branch_end
        return False

    def area(self, polygonal: bool = True) -> float:
        a = (self.x_right - self.x_left) * 1.0
        if self.has_branch:
            a += self.branch_width * (self.branch_end - 1.0)
        if self.obstacle is not None:
            r, n = self.obstacle.radius, self.obstacle.polygon_sides
            a -= 0.5 * n * r * r * math.sin(2 * math.pi / n) if polygonal else math.pi * r * r
        return a


def _seg_distance(p, a, b) -> float:
    px, py = p
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    ll = dx * dx + dy * dy
    t = 0.0 if ll == 0 else max(0.0, min(1.0, ((px - ax) * dx + (py - ay) * dy) / ll))
    return math.hypot(px - ax - t * dx, py - ay - t * dy)


def validate(spec: DomainSpec) -> DomainSpec:
    if spec.kind not in KINDS:
        raise InvalidGeometryError(f"unknown domain kind {spec.kind!r}", "kind")
    if spec.has_branch:
        if not spec.branch_width > 0:
            raise InvalidGeometryError("branch width must be positive", "branch_width")
        if spec.branch_open:
            if spec.branch_top is not None:
                raise InvalidGeometryError("omega_inf has an open branch; branch_top must be absent", "branch_top")
        elif spec.branch_top is None or not math.isfinite(spec.branch_top):
            raise InvalidGeometryError(f"{spec.kind} needs a finite branch_top", "branch_top")
    elif spec.kind == "omega_inf":
        raise InvalidGeometryError("omega_inf needs a branch", "branch_width")
    if spec.obstacle is not None:
        ob = spec.obstacle
        if not ob.radius > 0:
            raise InvalidGeometryError("obstacle radius must be positive", "obstacle.radius")
        if ob.polygon_sides < 16:
            raise InvalidGeometryError("obstacle needs at least 16 polygon sides", "obstacle.polygon_sides")
        if not spec.contains(*ob.center):
            raise InvalidGeometryError("obstacle center lies outside the waveguide", "obstacle.center")
        for name, a, b in spec.walls():
            d = _seg_distance(ob.center, a, b)
            if d <= ob.radius:
                raise InvalidGeometryError(
                    f"obstacle (radius {ob.radius:g}) protrudes through {name} (distance {d:.4g})", "obstacle.radius"
                )
        # the core box only wraps the duct part; keep the disk clear of the
        # branch corners so the disk is inside duct-and-branch union
        if spec.has_branch and ob.center[1] + ob.radius > 1.0:
            b0 = spec.branch_x_center - spec.branch_width / 2
            b1 = spec.branch_x_center + spec.branch_width / 2
            for c in ((b0, 1.0), (b1, 1.0)):
                if math.hypot(ob.center[0] - c[0], ob.center[1] - c[1]) <= ob.radius:
                    raise InvalidGeometryError("obstacle covers a branch corner", "obstacle.radius")
    x0, x1, ytop = spec.core_box
    if not spec.x_left < x0:
        raise InvalidGeometryError(
            f"left truncation x={spec.x_left:g} must lie left of the perturbed region (x < {x0:g})", "x_left"
        )
    if not spec.x_right > x1:
        raise InvalidGeometryError(
            f"right end x={spec.x_right:g} must lie right of the perturbed region (x > {x1:g})", "x_right"
        )
    if spec.has_branch and not spec.branch_end > ytop:
        raise InvalidGeometryError(
            f"branch end y={spec.branch_end:g} must exceed y={ytop:g}",
            "branch_truncation" if spec.branch_open else "branch_top",
        )
    return spec


def build_domain(**params) -> DomainSpec:
    """Validated :class:`DomainSpec` from keyword parameters.

    ``obstacle`` may be a :class:`Disk` or a mapping with ``center``,
    ``radius`` and optional ``polygon_sides``.
    """
    ob = params.get("obstacle")
    if isinstance(ob, dict):
        params["obstacle"] = Disk(tuple(ob["center"]), float(ob["radius"]), int(ob.get("polygon_sides", 64)))
    return validate(DomainSpec(**params))


def reference_obstacle(polygon_sides: int = 64) -> Disk:
    return Disk(REFERENCE_OBSTACLE_CENTER, REFERENCE_OBSTACLE_RADIUS, polygon_sides)


def reference_omega_L(L: float, **kw) -> DomainSpec:
    return build_domain(kind="omega_L", branch_width=REFERENCE_BRANCH_WIDTH, branch_top=L, obstacle=reference_obstacle(), **kw)


def reference_omega_inf(**kw) -> DomainSpec:
    return build_domain(kind="omega_inf", branch_width=REFERENCE_BRANCH_WIDTH, obstacle=reference_obstacle(), **kw)


def reference_half_guide(calL: float, L: float = REFERENCE_ZERO_L, H: float = 0.5, **kw) -> DomainSpec:
    return build_domain(
        kind="Omega_L", branch_width=REFERENCE_BRANCH_WIDTH, branch_top=L, obstacle=reference_obstacle(),
        x_right=H + calL, H=H, **kw,
    )


def reference_Omega_inf(L: float = REFERENCE_ZERO_L, **kw) -> DomainSpec:
    return build_domain(kind="Omega_inf", branch_width=REFERENCE_BRANCH_WIDTH, branch_top=L, obstacle=reference_obstacle(), **kw)


def with_param(spec: DomainSpec, value: float) -> DomainSpec:
    """Copy of ``spec`` with its natural family parameter set to ``value``.

    ``branch_top`` for ``omega_L`` / ``Omega_inf``, the half-guide length
    for ``Omega_L``.
    """
    if spec.kind == "Omega_L":
        return validate(replace(spec, x_right=spec.H + value))
    if spec.kind in ("omega_L", "Omega_inf") and spec.has_branch:
        return validate(replace(spec, branch_top=value))
    raise InvalidGeometryError(f"{spec.kind} has no family parameter", "kind")
