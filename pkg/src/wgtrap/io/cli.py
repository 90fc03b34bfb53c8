"""Batch command-line front end.

Usage::

    wgtrap sweep        -c run.cfg [--set key=value ...] [-o outdir]
    wgtrap find-zero    -c run.cfg
    wgtrap find-trapped -c run.cfg
    wgtrap predict      -c run.cfg
    wgtrap mesh         -c run.cfg

The configuration file is flat ``key = value`` text with dotted keys;
``#`` starts a comment.  Lists are comma separated and a float may carry
a ``pi`` factor (``0.8*pi``).  Unknown keys are rejected.  The worker
count for sweeps comes from the ``WGTRAP_WORKERS`` environment variable.

Exit codes: 0 success, 2 configuration error, 3 search did not converge,
4 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from .. import explorer, smx
from ..errors import (
    BracketError,
    ConfigError,
    ConfigurationError,
    HypothesisNotObservedError,
    InvalidArgumentError,
    InvalidGeometryError,
    SectionPlacementError,
    WgtrapError,
)
from ..extract import augmented_limit_matrix, limit_scattering_matrix, solve_scattering
from ..geometry import REFERENCE_K, DomainSpec, build_domain, with_param
from ..mesh import triangulate, write_mesh
from ..smx import ScatteringMatrix
from .export import field_vtk, mirrored_field_vtk, read_json, write_csv, write_json, write_vtk

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_SEARCH, EXIT_SOLVER = 0, 2, 3, 4


def _float(text: str) -> float:
    t = text.strip().replace(" ", "")
    if t.endswith("pi"):
        head = t[:-2].rstrip("*")
        return (float(head) if head else 1.0) * math.pi
    return float(t)


def _floats(n: int):
    def parse(text: str):
        vals = tuple(_float(v) for v in text.split(","))
        if len(vals) != n:
            raise ValueError(f"expected {n} comma-separated numbers")
        return vals

    return parse


def _int(text: str) -> int:
    return int(text.strip())


def _str(text: str) -> str:
    return text.strip()


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true or false")


# key -> (parser, default)
SCHEMA = {
    "kind": (_str, "omega_L"),
    "branch.width": (_float, 1.0),
    "branch.top": (_float, 2.496),
    "half_length": (_float, 1.354),
    "H": (_float, 0.5),
    "obstacle.enabled": (_bool, True),
    "obstacle.center": (_floats(2), (0.2, 0.4)),
    "obstacle.radius": (_float, 0.3),
    "obstacle.sides": (_int, 64),
    "truncation.left": (_float, -2.0),
    "truncation.right": (_float, 2.0),
    "truncation.branch": (_float, 3.0),
    "k": (_float, REFERENCE_K),
    "k_range": (_floats(2), (0.78 * math.pi, 0.82 * math.pi)),
    "mesh.h": (_float, explorer.DEFAULT_H),
    "fem.order": (_int, 2),
    "fem.n_modes": (_int, 15),
    "sweep.start": (_float, 1.1),
    "sweep.stop": (_float, 6.0),
    "sweep.step": (_float, explorer.DEFAULT_STEP),
    "search.bracket": (_floats(2), (2.2, 2.8)),
    "search.tol": (_float, 1e-4),
    "search.samples": (_int, 13),
    "search.peak_index": (_int, 1),
    "search.k_tol": (_float, 1e-5),
    "search.calL_min": (_float, 0.5),
    "search.calL_max": (_float, 3.5),
    "predict.limit_matrix": (_str, ""),
    "output.dir": (_str, "wgtrap-out"),
    "seed": (_int, 0),
}

# geometry primitive reported by validation -> config key
_PRIMITIVE_KEYS = {
    "kind": "kind",
    "branch_width": "branch.width",
    "branch_top": "branch.top",
    "branch_truncation": "truncation.branch",
    "x_left": "truncation.left",
    "obstacle.radius": "obstacle.radius",
    "obstacle.center": "obstacle.center",
    "obstacle.polygon_sides": "obstacle.sides",
}


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """Raw ``key -> value text`` pairs of a flat config file."""
    out: Dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value'", None)
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"{source}:{n}: duplicate key {key}", key)
        out[key] = value
    return out


@dataclass
class RunConfig:
    """Validated settings of one command-line run."""

    values: Dict[str, object] = field(default_factory=dict)

    @classmethod
    def from_pairs(cls, pairs: Dict[str, str]) -> "RunConfig":
        vals = {key: default for key, (_, default) in SCHEMA.items()}
        for key, text in pairs.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key}", key)
            parser = SCHEMA[key][0]
            try:
                vals[key] = parser(text)
            except ValueError as exc:
                raise ConfigError(f"{key}: cannot parse {text!r} ({exc})", key) from None
        return cls(vals)

    @classmethod
    def load(cls, path: Optional[str], overrides: Sequence[str] = ()) -> "RunConfig":
        pairs: Dict[str, str] = {}
        if path:
            try:
                with open(path) as fh:
                    pairs = parse_config_text(fh.read(), path)
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}", None) from None
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}", None)
            key, value = (s.strip() for s in item.split("=", 1))
            pairs[key] = value
        return cls.from_pairs(pairs)

    def __getitem__(self, key: str):
        return self.values[key]

    def to_dict(self) -> Dict[str, object]:
        return dict(sorted(self.values.items()))

    # -- geometry -------------------------------------------------------------

    def _obstacle(self):
        if not self["obstacle.enabled"]:
            return None
        return {"center": self["obstacle.center"], "radius": self["obstacle.radius"],
                "polygon_sides": self["obstacle.sides"]}

    def domain(self, kind: Optional[str] = None) -> DomainSpec:
        """Validated domain of ``kind`` (default: the configured kind)."""
        kind = kind or self["kind"]
        params = dict(kind=kind, branch_width=self["branch.width"], obstacle=self._obstacle(),
                      x_left=self["truncation.left"], H=self["H"])
        if kind == "omega_L":
            params.update(branch_top=self["branch.top"], x_right=self["truncation.right"])
        elif kind == "omega_inf":
            params.update(branch_truncation=self["truncation.branch"], x_right=self["truncation.right"])
        elif kind == "Omega_L":
            params.update(branch_top=self["branch.top"], x_right=self["H"] + self["half_length"])
        elif kind == "Omega_inf":
            params.update(branch_top=self["branch.top"], x_right=self["truncation.right"])
        else:
            raise ConfigError(f"kind must be one of omega_L, omega_inf, Omega_L, Omega_inf; got {kind!r}", "kind")
        try:
            return build_domain(**params)
        except InvalidGeometryError as exc:
            raise ConfigError(str(exc), self._geometry_key(exc.primitive, kind)) from None

    def _geometry_key(self, primitive: Optional[str], kind: str) -> Optional[str]:
        if primitive == "x_right":
            return "half_length" if kind == "Omega_L" else "truncation.right"
        return _PRIMITIVE_KEYS.get(primitive, primitive)

    def limit_kind(self) -> str:
        return "Omega_inf" if self["kind"] in ("Omega_L", "Omega_inf") else "omega_inf"

    def family_member(self, param: float) -> DomainSpec:
        key = "half_length" if self["kind"] == "Omega_L" else "branch.top"
        try:
            return with_param(self.domain(), param)
        except InvalidGeometryError as exc:
            raise ConfigError(f"parameter {param:g}: {exc}", key) from None

    @property
    def solver(self) -> Dict[str, object]:
        return {"h": self["mesh.h"], "order": self["fem.order"], "n_modes": self["fem.n_modes"]}

    # -- validation -------------------------------------------------------------

    def validate(self, command: str) -> None:
        """Check every precondition of ``command`` before any solve."""
        h = self["mesh.h"]
        if not 0.0 < h <= 0.25:
            raise ConfigError(f"mesh.h must lie in (0, 0.25], got {h}", "mesh.h")
        if self["fem.order"] not in (1, 2):
            raise ConfigError("fem.order must be 1 or 2", "fem.order")
        if self["fem.n_modes"] < 1:
            raise ConfigError("fem.n_modes must be at least 1", "fem.n_modes")
        if self["obstacle.sides"] < 16:
            raise ConfigError("obstacle.sides must be at least 16", "obstacle.sides")
        kind = self["kind"]
        spec = self.domain()
        if command != "mesh":
            self._check_k("k", self["k"], spec)
        if command == "sweep":
            if kind not in ("omega_L", "Omega_L"):
                raise ConfigError(f"sweep needs kind omega_L or Omega_L, got {kind}", "kind")
            if not self["sweep.step"] > 0:
                raise ConfigError("sweep.step must be positive", "sweep.step")
            for p in explorer.sweep_grid(self["sweep.start"], self["sweep.stop"], self["sweep.step"]):
                self._member_or_fail(float(p), "sweep.start")
        elif command == "find-zero":
            if kind != "omega_L":
                raise ConfigError(f"find-zero needs kind omega_L, got {kind}", "kind")
            a, b = self["search.bracket"]
            if not b > a:
                raise ConfigError("search.bracket must be increasing", "search.bracket")
            self._member_or_fail(a, "search.bracket")
            self._member_or_fail(b, "search.bracket")
            if self["search.samples"] < 3:
                raise ConfigError("search.samples must be at least 3", "search.samples")
        elif command == "find-trapped":
            if kind != "Omega_L":
                raise ConfigError(f"find-trapped needs kind Omega_L, got {kind}", "kind")
            ka, kb = self["k_range"]
            if not kb > ka:
                raise ConfigError("k_range must be increasing", "k_range")
            self._check_k("k_range", ka, spec)
            self._check_k("k_range", kb, spec)
            if self["search.peak_index"] < 1:
                raise ConfigError("search.peak_index is 1-based", "search.peak_index")
            self._member_or_fail(self["search.calL_min"], "search.calL_min")
        elif command == "predict":
            path = self["predict.limit_matrix"]
            if path and not os.path.exists(path):
                raise ConfigError(f"limit matrix file {path} not found", "predict.limit_matrix")
            if not path:
                self.domain(self.limit_kind())

    def _check_k(self, key: str, k: float, spec: DomainSpec) -> None:
        try:
            explorer.check_wavenumber(spec, k)
        except InvalidArgumentError as exc:
            raise ConfigError(f"{key}: {exc}", key) from None

    def _member_or_fail(self, param: float, key: str) -> None:
        try:
            with_param(self.domain(), param)
        except InvalidGeometryError as exc:
            raise ConfigError(f"{key}: parameter {param:g} is not a valid geometry ({exc})", key) from None


# --- commands -----------------------------------------------------------------


def _outdir(cfg: RunConfig) -> str:
    d = cfg["output.dir"]
    os.makedirs(d, exist_ok=True)
    return d


def _limit_matrix(cfg: RunConfig) -> ScatteringMatrix:
    path = cfg["predict.limit_matrix"]
    if path:
        data = read_json(path)
        # accepts a bare matrix or the output of ``predict`` / ``sweep``
        data = data.get("limit_matrix", data.get("matrix", data))
        try:
            return ScatteringMatrix.from_dict(data)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path} does not hold a scattering matrix ({exc})", "predict.limit_matrix") from None
    spec = cfg.domain(cfg.limit_kind())
    fn = augmented_limit_matrix if spec.kind == "Omega_inf" else limit_scattering_matrix
    return fn(spec, cfg["k"], **cfg.solver)


def _circles_json(Sinf: ScatteringMatrix) -> Dict[str, dict]:
    names = ("11", "12", "22")
    return {n: {"center": c.center, "radius": c.radius} for n, c in zip(names, smx.circles_of(Sinf))}


def cmd_sweep(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    start = cfg["sweep.start"]
    spec = cfg.family_member(start) if cfg["sweep.stop"] > start else cfg.domain()
    table = explorer.sweep(spec, start, cfg["sweep.stop"], cfg["k"], step=cfg["sweep.step"],
                           checkpoint=os.path.join(out, "sweep.csv"), **cfg.solver)
    summary = {"config": cfg.to_dict(), "rows": len(table), "failed": [r.param for r in table.rows if not r.ok],
               "param": table.param_name, "k": table.k}
    if table.ok_rows():
        try:
            Sinf = _limit_matrix(cfg)
        except WgtrapError as exc:
            summary["limit_matrix_error"] = str(exc)
        else:
            summary["limit_matrix"] = Sinf.to_dict()
            fit = explorer.fit_asymptotics(table, Sinf)
            summary["fit"] = {key: v for key, v in fit.to_dict().items() if key in
                              ("rate", "intercept", "fit_note", "predicted_zeros", "observed_minima", "zero_offsets",
                               "degenerate")}
            if not fit.degenerate:
                summary["circles"] = _circles_json(Sinf)
            rows = []
            for r in table.ok_rows():
                A = (smx.asymptotic_matrix(Sinf, table.k, r.param + table.phase_offset) if not fit.degenerate
                     else smx.limit_matrix_degenerate(Sinf))
                row = [r.param]
                for i, j in ((1, 1), (1, 2), (2, 2)):
                    row += [A[i, j].real, A[i, j].imag]
                rows.append(row)
            cols = [table.param_name] + [f"asy_s{ij}_{p}" for ij in ("11", "12", "22") for p in ("re", "im")]
            write_csv(os.path.join(out, "overlay.csv"), "wgtrap-overlay v1 asymptotic entries", cols, rows)
            cpts = []
            if not fit.degenerate:
                for name, c in zip(("11", "12", "22"), smx.circles_of(Sinf)):
                    for t, z in enumerate(c.points(256)):
                        cpts.append([name, t, float(z.real), float(z.imag)])
            write_csv(os.path.join(out, "circles.csv"), "wgtrap-circles v1", ["entry", "index", "re", "im"], cpts)
    write_json(os.path.join(out, "sweep_summary.json"), summary)
    return EXIT_OK


def _search_failed(out: str, name: str, message: str, diagnostic: dict, history=None) -> int:
    write_json(os.path.join(out, f"{name}_history.json"),
               {"error": message, "diagnostic": diagnostic or {}, "history": history or []})
    log.error("%s", message)
    return EXIT_SEARCH


def cmd_find_zero(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    spec = cfg.domain()
    try:
        res = explorer.find_zero_transmission(spec, cfg["k"], cfg["search.bracket"], tol=cfg["search.tol"],
                                              samples=cfg["search.samples"], **cfg.solver)
    except BracketError as exc:
        return _search_failed(out, "find_zero", str(exc), {"bracket": cfg["search.bracket"]})
    write_json(os.path.join(out, "find_zero.json"), {"config": cfg.to_dict(), "result": res.to_dict()})
    if not res.converged:
        return _search_failed(out, "find_zero", f"|s12| = {res.objective:.3e} above {explorer.ZERO_TOL:g}",
                              res.diagnostics, res.history)
    return EXIT_OK


def cmd_find_trapped(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    spec = cfg.domain()
    try:
        res = explorer.find_trapped_mode(spec, cfg["k_range"], peak_index=cfg["search.peak_index"],
                                         k_tol=cfg["search.k_tol"], calL_min=cfg["search.calL_min"],
                                         calL_max=cfg["search.calL_max"], **cfg.solver)
    except HypothesisNotObservedError as exc:
        return _search_failed(out, "find_trapped", str(exc), exc.diagnostic)
    write_json(os.path.join(out, "find_trapped.json"), {"config": cfg.to_dict(), "result": res.to_dict()})
    k_star, calL_star = res.location
    member = with_param(spec, calL_star)
    run = solve_scattering(member, k_star, **cfg.solver)
    fld = run.fields[run.ports.index((1, "packet"))]
    title = f"packet-forced field k={k_star:.10g} calL={calL_star:.10g}"
    field_vtk(os.path.join(out, "trapped_field.vtk"), fld, title)
    mirrored_field_vtk(os.path.join(out, "trapped_field_mirrored.vtk"), fld, member.x_right, "mirrored " + title)
    if not res.converged:
        return _search_failed(out, "find_trapped", f"|S22 + 1| = {res.objective:.3e} above {explorer.TRAPPED_TOL:g}",
                              res.diagnostics, res.history)
    return EXIT_OK


def cmd_predict(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    Sinf = _limit_matrix(cfg)
    k = Sinf.k if not math.isnan(Sinf.k) else cfg["k"]
    result: Dict[str, object] = {"config": cfg.to_dict(), "limit_matrix": Sinf.to_dict(), "k": k}
    if abs(Sinf.entries[2, 2]) >= 1.0 - smx.EPS_DEG:
        result["degenerate"] = True
        result["limit_block"] = smx.limit_matrix_degenerate(Sinf).to_dict()
    else:
        result["degenerate"] = False
        result["circles"] = _circles_json(Sinf)
        offset = cfg["H"] if Sinf.kind.startswith("augmented") else 0.0
        try:
            zeros = smx.zero_transmission_phases(Sinf, k, L_max=offset + 6.0, tol=1e-3)
            result["predicted_zeros"] = [z - offset for z in zeros if z - offset > 0]
        except WgtrapError as exc:
            result["predicted_zeros_error"] = str(exc)
        if Sinf.kind.startswith("augmented"):
            try:
                result["minus_one_predicates"] = smx.minus_one_predicates(Sinf).to_dict()
            except WgtrapError as exc:
                result["minus_one_predicates_error"] = str(exc)
            result["predicted_windows"] = explorer.predicted_windows(Sinf, k, offset, cfg["search.calL_min"],
                                                                     cfg["search.calL_max"])
    write_json(os.path.join(out, "predict.json"), result)
    return EXIT_OK


def cmd_mesh(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    spec = cfg.domain()
    mesh = triangulate(spec, cfg["mesh.h"])
    write_mesh(mesh, os.path.join(out, "mesh.txt"))
    write_vtk(os.path.join(out, "mesh.vtk"), mesh.vertices, mesh.triangles, title=f"{spec.kind} mesh h={cfg['mesh.h']}")
    write_json(os.path.join(out, "mesh.json"), {"config": cfg.to_dict(), "vertices": mesh.n_vertices,
                                                "triangles": len(mesh.triangles)})
    return EXIT_OK


COMMANDS = {
    "sweep": cmd_sweep,
    "find-zero": cmd_find_zero,
    "find-trapped": cmd_find_trapped,
    "predict": cmd_predict,
    "mesh": cmd_mesh,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wgtrap", description="Waveguide scattering, zero transmission and trapped modes.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("-c", "--config", help="flat key = value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    p.add_argument("-o", "--output", help="output directory (overrides output.dir)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.set) + ([f"output.dir={args.output}"] if args.output else [])
    try:
        cfg = RunConfig.load(args.config, overrides)
        cfg.validate(args.command)
    except ConfigError as exc:
        print(f"config error [{exc.key or '-'}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error [{exc.key or '-'}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BracketError, HypothesisNotObservedError) as exc:
        print(f"search failed: {exc}", file=sys.stderr)
        return EXIT_SEARCH
    except (InvalidArgumentError, ConfigurationError, SectionPlacementError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WgtrapError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
