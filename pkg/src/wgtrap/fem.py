"""Lagrange P1/P2 finite elements for the Helmholtz operator.

The interior bilinear form ``a(u, v) = (grad u, grad v) - k^2 (u, v)`` is
assembled here; the channel terms (modal transparent conditions and
incident forcing) are added on top by :mod:`wgtrap.extract` from the
coefficient data of :mod:`wgtrap.radiation`.  Walls carry the natural
Neumann condition and need no term.

Degrees of freedom for P2 are the mesh vertices followed by one dof per
unique edge (the edge midpoint), in the order of :meth:`Mesh.edges`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AssemblyError, InvalidArgumentError, MeshingError, SolverError
from .mesh import Mesh

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10
BACKWARD_TOL = 1e-14
COND_LIMIT = 1e13

# Symmetric 6-point rule on the reference triangle, exact for degree 4.
# Weights sum to one (scaled by the element area at use).
_A, _WA = 0.445948490915965, 0.223381589678011
_B, _WB = 0.091576213509771, 0.109951743655322
_QUAD_BARY = np.array(
    [
        [1 - 2 * _A, _A, _A],
        [_A, 1 - 2 * _A, _A],
        [_A, _A, 1 - 2 * _A],
        [1 - 2 * _B, _B, _B],
        [_B, 1 - 2 * _B, _B],
        [_B, _B, 1 - 2 * _B],
    ]
)
_QUAD_W = np.array([_WA] * 3 + [_WB] * 3)
_EDGE_PAIRS = ((0, 1), (1, 2), (2, 0))


def _shape(order: int, lam: np.ndarray) -> np.ndarray:
    """Basis values at barycentric points ``lam`` (nq, 3) -> (nq, nloc)."""
    if order == 1:
        return lam.copy()
    vals = [lam[:, i] * (2 * lam[:, i] - 1) for i in range(3)]
    vals += [4 * lam[:, i] * lam[:, j] for i, j in _EDGE_PAIRS]
    return np.column_stack(vals)


def _shape_dlam(order: int, lam: np.ndarray) -> np.ndarray:
    """Derivatives with respect to the barycentric coordinates -> (nq, nloc, 3)."""
    nq = len(lam)
    if order == 1:
        return np.broadcast_to(np.eye(3), (nq, 3, 3)).copy()
    d = np.zeros((nq, 6, 3))
    for i in range(3):
        d[:, i, i] = 4 * lam[:, i] - 1
    for m, (i, j) in enumerate(_EDGE_PAIRS):
        d[:, 3 + m, i] = 4 * lam[:, j]
        d[:, 3 + m, j] = 4 * lam[:, i]
    return d


@dataclass(frozen=True, eq=False)
class DofMap:
    """Global numbering of the scalar unknowns."""

    order: int
    n_dofs: int
    cell_dofs: np.ndarray  # (nt, 3) or (nt, 6)
    coords: np.ndarray  # (n_dofs, 2) nodal points
    edges: Optional[np.ndarray] = None  # unique edges, P2 only

    @classmethod
    def build(cls, mesh: Mesh, order: int) -> "DofMap":
        if order not in (1, 2):
            raise InvalidArgumentError(f"element order must be 1 or 2, got {order}")
        nv = len(mesh.vertices)
        if order == 1:
            return cls(1, nv, mesh.triangles.copy(), mesh.vertices.copy())
        edges, tri_e = mesh.edges()
        mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
        cell = np.hstack([mesh.triangles, nv + tri_e])
        return cls(2, nv + len(edges), cell, np.vstack([mesh.vertices, mid]), edges)

    def edge_dofs(self, pairs: np.ndarray) -> np.ndarray:
        """Dofs of boundary edges ``pairs`` (m, 2): (m, 2) or (m, 3) with the midpoint last."""
        pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
        if self.order == 1:
            return pairs.copy()
        key = np.sort(pairs, axis=1)
        nv = len(self.coords) - len(self.edges)
        # edges are lexicographically sorted by np.unique; look them up
        idx = np.searchsorted(self.edges[:, 0] * (nv + 1) + self.edges[:, 1], key[:, 0] * (nv + 1) + key[:, 1])
        if np.any(idx >= len(self.edges)) or np.any(self.edges[np.minimum(idx, len(self.edges) - 1)] != key):
            raise InvalidArgumentError("edge not found in the mesh")
        return np.column_stack([pairs, nv + idx])


@dataclass(eq=False)
class DiscreteSystem:
    """Sparse complex-symmetric system ``matrix @ u = rhs``."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dof_map: DofMap
    order: int
    k: float
    mesh: Mesh
    _lu: object = field(default=None, repr=False)

    @property
    def n_dofs(self) -> int:
        return self.dof_map.n_dofs

    def add_low_rank(self, vectors: np.ndarray, coeffs: Sequence[complex]) -> None:
        """Add ``sum_n coeffs[n] * v_n v_n^T`` (dense rows ``vectors``)."""
        vectors = np.asarray(vectors)
        if vectors.size == 0:
            return
        cols = np.flatnonzero(np.any(vectors != 0, axis=0))
        V = vectors[:, cols]
        block = (V.T * np.asarray(coeffs)) @ V
        r, c = np.meshgrid(cols, cols, indexing="ij")
        upd = sp.coo_matrix((block.ravel(), (r.ravel(), c.ravel())), shape=self.matrix.shape)
        self.matrix = (self.matrix + upd).tocsr()
        self._lu = None

    def symmetry_defect(self) -> float:
        d = self.matrix - self.matrix.T
        return float(abs(d).max()) if d.nnz else 0.0


def _element_matrices(mesh: Mesh, order: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    p = mesh.vertices[mesh.triangles]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edge vectors
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if np.any(det <= 0):
        raise AssemblyError("mesh has inverted or degenerate triangles")
    area = 0.5 * det
    # gradients of barycentric coordinates: rows of inv(J) give grad lam1, lam2
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1] / det
    inv[:, 0, 1] = -J[:, 0, 1] / det
    inv[:, 1, 0] = -J[:, 1, 0] / det
    inv[:, 1, 1] = J[:, 0, 0] / det
    glam = np.empty((len(p), 3, 2))
    glam[:, 1] = inv[:, 0]
    glam[:, 2] = inv[:, 1]
    glam[:, 0] = -glam[:, 1] - glam[:, 2]
    N = _shape(order, _QUAD_BARY)  # (nq, nloc)
    dN = _shape_dlam(order, _QUAD_BARY)  # (nq, nloc, 3)
    G = np.einsum("qla,tad->tqld", dN, glam)  # (nt, nq, nloc, 2)
    K = np.einsum("q,tqid,tqjd->tij", _QUAD_W, G, G) * area[:, None, None]
    Mref = np.einsum("q,qi,qj->ij", _QUAD_W, N, N)
    M = Mref[None] * area[:, None, None]
    return K, M, area


def assemble(mesh: Mesh, k: float, order: int = 2) -> DiscreteSystem:
    """Interior Helmholtz form ``K - k^2 M`` on ``mesh``.

    Parameters
    ----------
    mesh : Mesh
        Conforming triangulation.
    k : float
        Wavenumber in ``[0, pi)``; ``k = 0`` gives the pure stiffness and is
        only meant for tests.
    order : int
        Element order, 1 or 2.
    """
    if not (0.0 <= k < math.pi):
        raise InvalidArgumentError(f"k must lie in (0, pi), got {k}")
    try:
        mesh.check()
    except MeshingError as exc:
        raise AssemblyError(f"invalid mesh: {exc}") from exc
    dm = DofMap.build(mesh, order)
    K, M, _ = _element_matrices(mesh, order)
    loc = K - k * k * M
    nloc = dm.cell_dofs.shape[1]
    rows = np.repeat(dm.cell_dofs, nloc, axis=1).ravel()
    cols = np.tile(dm.cell_dofs, (1, nloc)).ravel()
    A = sp.coo_matrix((loc.ravel().astype(complex), (rows, cols)), shape=(dm.n_dofs, dm.n_dofs)).tocsr()
    log.debug("assembled order-%d system with %d dofs (k=%.6g)", order, dm.n_dofs, k)
    return DiscreteSystem(A, np.zeros(dm.n_dofs, dtype=complex), dm, order, float(k), mesh)


def mass_matrix(mesh: Mesh, order: int = 2) -> sp.csr_matrix:
    dm = DofMap.build(mesh, order)
    _, M, _ = _element_matrices(mesh, order)
    nloc = dm.cell_dofs.shape[1]
    rows = np.repeat(dm.cell_dofs, nloc, axis=1).ravel()
    cols = np.tile(dm.cell_dofs, (1, nloc)).ravel()
    return sp.coo_matrix((M.ravel(), (rows, cols)), shape=(dm.n_dofs, dm.n_dofs)).tocsr()


# --- line integrals over mesh edges ---------------------------------------

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_T = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _edge_shape(order: int, t: np.ndarray) -> np.ndarray:
    """1D trace basis on an edge parametrized by t in [0, 1] -> (nq, 2|3)."""
    if order == 1:
        return np.column_stack([1 - t, t])
    return np.column_stack([(1 - t) * (1 - 2 * t), t * (2 * t - 1), 4 * t * (1 - t)])


def edge_projection(
    dof_map: DofMap, vertices: np.ndarray, pairs: np.ndarray, funcs: Callable[[np.ndarray], np.ndarray]
) -> np.ndarray:
    """Rows ``P[n, j] = int_edges f_n psi_j ds`` for the dofs on ``pairs``.

    ``funcs`` maps points (m, 2) to values (nf, m).
    """
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    dofs = dof_map.edge_dofs(pairs)
    a, b = vertices[pairs[:, 0]], vertices[pairs[:, 1]]
    length = np.linalg.norm(b - a, axis=1)
    pts = a[:, None, :] + _GL_T[None, :, None] * (b - a)[:, None, :]  # (m, nq, 2)
    fv = np.asarray(funcs(pts.reshape(-1, 2)))
    nf = fv.shape[0]
    fv = fv.reshape(nf, len(pairs), len(_GL_T))
    psi = _edge_shape(dof_map.order, _GL_T)  # (nq, nloc)
    contrib = np.einsum("fmq,q,ql,m->fml", fv, _GL_W, psi, length)
    P = np.zeros((nf, dof_map.n_dofs), dtype=np.result_type(fv.dtype, float))
    for f in range(nf):
        np.add.at(P[f], dofs.ravel(), contrib[f].ravel())
    return P


# --- solution ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FieldSolution:
    """Complex nodal solution of one forced problem."""

    values: np.ndarray
    mesh: Mesh
    dof_map: DofMap
    k: float
    incident_label: str = ""
    residual: float = 0.0

    @property
    def nodal_values(self) -> np.ndarray:
        return self.values

    def vertex_values(self) -> np.ndarray:
        return self.values[: len(self.mesh.vertices)]

    def conj(self) -> "FieldSolution":
        return FieldSolution(np.conj(self.values), self.mesh, self.dof_map, self.k, f"conj({self.incident_label})", self.residual)

    def line_edges(self, axis: str, coord: float, lo: float, hi: float, tol: float = 1e-9) -> np.ndarray:
        """Mesh edges lying on the segment ``axis = coord`` between ``lo`` and ``hi``.

        ``axis`` is ``"x"`` for a vertical line ``x = coord`` (transverse
        coordinate y) and ``"y"`` for a horizontal line.
        """
        edges, _ = self.mesh.edges()
        v = self.mesh.vertices
        ia, ib = (0, 1) if axis == "x" else (1, 0)
        on = (np.abs(v[edges[:, 0], ia] - coord) < tol) & (np.abs(v[edges[:, 1], ia] - coord) < tol)
        s0 = np.minimum(v[edges[:, 0], ib], v[edges[:, 1], ib])
        s1 = np.maximum(v[edges[:, 0], ib], v[edges[:, 1], ib])
        on &= (s0 >= lo - tol) & (s1 <= hi + tol)
        sel = edges[on]
        covered = float(np.sum(np.abs(v[sel[:, 1], ib] - v[sel[:, 0], ib])))
        if abs(covered - (hi - lo)) > 1e-8:
            raise InvalidArgumentError(
                f"line {axis}={coord:g} is not a mesh line on [{lo:g}, {hi:g}] (covered {covered:.6g})"
            )
        return sel

    def line_integral(self, axis: str, coord: float, lo: float, hi: float, weight: Callable[[np.ndarray], np.ndarray]) -> complex:
        """``int u(s) w(s) ds`` along a mesh line; ``weight`` takes the transverse coordinate."""
        sel = self.line_edges(axis, coord, lo, hi)
        ib = 1 if axis == "x" else 0
        dofs = self.dof_map.edge_dofs(sel)
        v = self.mesh.vertices
        s_a, s_b = v[sel[:, 0], ib], v[sel[:, 1], ib]
        s = s_a[:, None] + _GL_T[None, :] * (s_b - s_a)[:, None]
        psi = _edge_shape(self.dof_map.order, _GL_T)
        u = self.values[dofs] @ psi.T  # (m, nq)
        return complex(np.sum(u * weight(s) * _GL_W[None, :] * np.abs(s_b - s_a)[:, None]))


def _factorize(system: DiscreteSystem):
    if system._lu is None:
        try:
            system._lu = spla.splu(system.matrix.tocsc(), permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SolverError(
                f"sparse factorization failed: {exc}", {"k": system.k, "n_dofs": system.n_dofs, "reason": str(exc)}
            ) from exc
    return system._lu


def _norm1(A) -> float:
    return float(abs(A).sum(axis=0).max())


def _inverse_norm1(lu, n: int) -> float:
    """Estimate of the 1-norm of the inverse from a few solves."""
    op = spla.LinearOperator((n, n), matvec=lu.solve, rmatvec=lambda x: lu.solve(x, trans="H"), dtype=complex)
    return float(spla.onenormest(op))


def solve(system: DiscreteSystem, rhs: Optional[np.ndarray] = None, label: str = "", max_refine: int = 4) -> FieldSolution:
    """Direct sparse solve with iterative refinement.

    The factorization is cached on ``system`` so repeated right-hand sides
    are cheap.  The solve is accepted when the relative residual
    ``|A u - b| / |b|`` is at most ``1e-10``.  When refinement stagnates
    above that value the solution is still accepted if the normwise
    backward error ``|A u - b| / (|A| |u| + |b|)`` is at the level of the
    working precision: this happens for wave-packet forcing, whose data
    are exponentially small compared with the field at the truncation.
    Anything else raises :class:`SolverError`.
    """
    b = system.rhs if rhs is None else np.asarray(rhs, dtype=complex)
    bn = float(np.linalg.norm(b))
    if bn == 0.0:
        return FieldSolution(np.zeros(system.n_dofs, dtype=complex), system.mesh, system.dof_map, system.k, label, 0.0)
    lu = _factorize(system)
    A = system.matrix
    u = lu.solve(b)
    r = A @ u - b
    res = float(np.linalg.norm(r)) / bn
    it = 0
    while (res > RESIDUAL_TOL or not np.isfinite(res)) and it < max_refine:
        u_new = u - lu.solve(r)
        r_new = A @ u_new - b
        res_new = float(np.linalg.norm(r_new)) / bn
        it += 1
        if not res_new < res:
            break
        u, r, res = u_new, r_new, res_new
    diag = {"k": system.k, "n_dofs": system.n_dofs, "residual": res, "refinements": it}
    if not np.isfinite(res):
        raise SolverError("solution is not finite (singular system?)", diag)
    if res > RESIDUAL_TOL:
        backward = float(np.linalg.norm(r, 1)) / (_norm1(A) * float(np.linalg.norm(u, 1)) + float(np.linalg.norm(b, 1)))
        diag["backward_error"] = backward
        if backward > BACKWARD_TOL:
            raise SolverError(f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g} (near-singular system?)", diag)
        # a small backward error only certifies the solution of a well-conditioned system
        cond = _norm1(A) * _inverse_norm1(lu, system.n_dofs)
        diag["condition_estimate"] = cond
        if not cond < COND_LIMIT:
            raise SolverError(f"system is numerically singular (condition estimate {cond:.2e})", diag)
        log.debug("%s: residual %.2e at working-precision floor (backward error %.1e)", label, res, backward)
    return FieldSolution(u, system.mesh, system.dof_map, system.k, label, res)
