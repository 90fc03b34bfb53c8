import math

import numpy as np
import pytest

from wgtrap.errors import AssemblyError, InvalidArgumentError, SolverError
from wgtrap.fem import DofMap, assemble, edge_projection, mass_matrix, solve
from wgtrap.geometry import DomainSpec, reference_omega_L
from wgtrap.mesh import Mesh, triangulate


@pytest.fixture(scope="module")
def duct_mesh():
    return triangulate(DomainSpec(), 0.2)


@pytest.fixture(scope="module")
def reference_mesh():
    return triangulate(reference_omega_L(2.0), 0.15)


@pytest.mark.parametrize("order", [1, 2])
def test_mass_integrates_constants_to_area(reference_mesh, order):
    M = mass_matrix(reference_mesh, order)
    one = np.ones(M.shape[0])
    assert one @ M @ one == pytest.approx(reference_mesh.signed_areas().sum(), rel=1e-12)


@pytest.mark.parametrize("order", [1, 2])
def test_stiffness_annihilates_constants(reference_mesh, order):
    A = assemble(reference_mesh, 0.0, order).matrix
    assert np.max(np.abs(A @ np.ones(A.shape[0]))) < 1e-11


def test_p1_energy_of_linear_function(duct_mesh):
    sysm = assemble(duct_mesh, 0.0, 1)
    x, y = sysm.dof_map.coords.T
    u = x + 2 * y
    assert (u @ sysm.matrix @ u).real == pytest.approx(5.0 * 4.0, rel=1e-12)


def test_p2_energy_of_quadratic_function(duct_mesh):
    sysm = assemble(duct_mesh, 0.0, 2)
    x, y = sysm.dof_map.coords.T
    u = x * y
    # int over (-2,2)x(0,1) of x^2 + y^2
    assert (u @ sysm.matrix @ u).real == pytest.approx(16.0 / 3.0 + 4.0 / 3.0, rel=1e-12)


def test_p2_mass_of_quadratic_function(duct_mesh):
    M = mass_matrix(duct_mesh, 2)
    x, y = DofMap.build(duct_mesh, 2).coords.T
    u = x * y
    # int x^2 y^2 = (16/3) * (1/3)
    assert u @ M @ u == pytest.approx(16.0 / 9.0, rel=1e-12)


def test_system_is_complex_symmetric(reference_mesh):
    sysm = assemble(reference_mesh, 2.0, 2)
    assert sysm.symmetry_defect() < 1e-14


@pytest.mark.parametrize("order", [1, 2])
def test_edge_projection_of_constant_gives_length(duct_mesh, order):
    dm = DofMap.build(duct_mesh, order)
    e = duct_mesh.tagged_edges("channel:1")
    P = edge_projection(dm, duct_mesh.vertices, e, lambda p: np.ones((1, len(p))))
    assert P.sum() == pytest.approx(1.0, rel=1e-13)
    # and it integrates the trace of y exactly
    assert P[0] @ dm.coords[:, 1] == pytest.approx(0.5, rel=1e-13)


def test_low_rank_update_keeps_symmetry(duct_mesh):
    sysm = assemble(duct_mesh, 1.0, 2)
    v = np.zeros((2, sysm.n_dofs))
    v[0, :5] = 1.0
    v[1, 3:9] = 2.0
    sysm.add_low_rank(v, [1j, -0.5])
    assert sysm.symmetry_defect() < 1e-15


def test_solve_with_robin_ends_is_accurate(duct_mesh):
    # u = exp(ikx) with outgoing condition on the right and forcing on the left
    k = 2.0
    sysm = assemble(duct_mesh, k, 2)
    dm = sysm.dof_map
    verts = duct_mesh.vertices
    P = {c: edge_projection(dm, verts, duct_mesh.tagged_edges(f"channel:{c}"), lambda p: np.ones((1, len(p))))[0]
         for c in (1, 2)}
    # int_boundary (d_n u - ik u) v = 0 on the right; on the left d_n u = -ik u_inc + ik(u - u_inc) ...
    sysm.add_low_rank(np.array([P[1], P[2]]), [-1j * k, -1j * k])
    x0 = -2.0
    rhs = -2j * k * np.exp(1j * k * x0) * P[1]
    u = solve(sysm, rhs)
    exact = np.exp(1j * k * dm.coords[:, 0])
    assert np.max(np.abs(u.values - exact)) < 1e-4
    assert u.residual <= 1e-10


def test_zero_rhs_gives_zero_field(duct_mesh):
    sysm = assemble(duct_mesh, 1.0, 1)
    u = solve(sysm, np.zeros(sysm.n_dofs))
    assert not np.any(u.values)


def test_singular_system_is_reported(duct_mesh):
    # pure Neumann Laplacian: singular
    sysm = assemble(duct_mesh, 0.0, 1)
    with pytest.raises(SolverError):
        solve(sysm, np.ones(sysm.n_dofs))


def test_invalid_arguments(duct_mesh):
    with pytest.raises(InvalidArgumentError):
        assemble(duct_mesh, 3.5)
    with pytest.raises(InvalidArgumentError):
        DofMap.build(duct_mesh, 3)


def test_inverted_mesh_is_rejected(duct_mesh):
    bad = Mesh(duct_mesh.vertices, duct_mesh.triangles[:, ::-1], duct_mesh.boundary_edges, duct_mesh.boundary_tags)
    with pytest.raises(AssemblyError):
        assemble(bad, 1.0)
