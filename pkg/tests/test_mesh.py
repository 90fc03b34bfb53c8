import math

import numpy as np
import pytest

from wgtrap.errors import InvalidArgumentError
from wgtrap.geometry import DomainSpec, reference_half_guide, reference_omega_inf, reference_omega_L, reference_Omega_inf
from wgtrap.mesh import MIN_ANGLE_DEG, read_mesh, triangulate, write_mesh


def _min_angle(mesh):
    p = mesh.vertices[mesh.triangles]
    out = []
    for i in range(3):
        a = p[:, (i + 1) % 3] - p[:, i]
        b = p[:, (i + 2) % 3] - p[:, i]
        cos = np.sum(a * b, axis=1) / np.linalg.norm(a, axis=1) / np.linalg.norm(b, axis=1)
        out.append(np.degrees(np.arccos(np.clip(cos, -1, 1))))
    return float(np.min(out))


@pytest.mark.parametrize("h", [0.25, 0.1, 0.05])
@pytest.mark.parametrize(
    "spec",
    [reference_omega_L(2.496), reference_omega_inf(), reference_half_guide(1.354), reference_Omega_inf(), DomainSpec()],
    ids=["omega_L", "omega_inf", "Omega_L", "Omega_inf", "duct"],
)
def test_mesh_quality_and_area(spec, h):
    mesh = triangulate(spec, h)
    mesh.check()
    assert np.all(mesh.signed_areas() > 0)
    assert _min_angle(mesh) >= MIN_ANGLE_DEG
    assert mesh.signed_areas().sum() == pytest.approx(spec.area(), rel=1e-12)


def test_channel_tags_on_truncations():
    spec = reference_omega_inf()
    mesh = triangulate(spec, 0.1)
    for cid, coord, axis in ((1, spec.x_left, 0), (2, spec.x_right, 0), (3, spec.branch_truncation, 1)):
        e = mesh.tagged_edges(f"channel:{cid}")
        assert len(e) > 0
        assert np.allclose(mesh.vertices[e][..., axis], coord)
        # the tagged edges cover the whole cross-section
        length = np.linalg.norm(mesh.vertices[e[:, 1]] - mesh.vertices[e[:, 0]], axis=1).sum()
        assert length == pytest.approx(1.0)


def test_closed_walls_have_no_channel_tag():
    mesh = triangulate(reference_half_guide(1.0), 0.1)
    assert len(mesh.tagged_edges("channel:2")) == 0
    assert len(mesh.tagged_edges("channel:1")) > 0


def test_sections_are_mesh_lines():
    mesh = triangulate(reference_omega_L(2.5), 0.1, sections=[-1.37, 1.41], branch_sections=[1.93])
    xs = np.round(mesh.vertices[:, 0], 9)
    ys = np.round(mesh.vertices[mesh.vertices[:, 1] > 1.0, 1], 9)
    assert np.sum(xs == -1.37) >= 3 and np.sum(xs == 1.41) >= 3
    assert np.sum(ys == 1.93) >= 3


def test_section_too_close_to_strip_end():
    with pytest.raises(InvalidArgumentError):
        triangulate(reference_omega_L(2.5), 0.1, sections=[-1.99])


def test_h_out_of_range():
    with pytest.raises(InvalidArgumentError):
        triangulate(reference_omega_L(2.5), 0.3)
    with pytest.raises(InvalidArgumentError):
        triangulate(reference_omega_L(2.5), 0.0)


def test_deterministic():
    a = triangulate(reference_omega_L(2.5), 0.1)
    b = triangulate(reference_omega_L(2.5), 0.1)
    assert np.array_equal(a.vertices, b.vertices) and np.array_equal(a.triangles, b.triangles)


def test_write_read_round_trip(tmp_path):
    mesh = triangulate(reference_half_guide(1.2), 0.1)
    path = tmp_path / "m.txt"
    write_mesh(mesh, path)
    back = read_mesh(path)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert back.boundary_tags == mesh.boundary_tags


def test_refinement_scales_triangle_count():
    n1 = len(triangulate(reference_omega_L(2.5), 0.1).triangles)
    n2 = len(triangulate(reference_omega_L(2.5), 0.05).triangles)
    assert 3.0 < n2 / n1 < 5.0


@pytest.mark.parametrize("h", [0.25, 0.1])
@pytest.mark.parametrize("calL", [0.16, 0.2, 0.6, 1.1156, 2.3])
def test_short_half_guides(calL, h):
    spec = reference_half_guide(calL)
    mesh = triangulate(spec, h)
    assert _min_angle(mesh) >= MIN_ANGLE_DEG
    assert mesh.signed_areas().sum() == pytest.approx(spec.area(), rel=1e-12)


@pytest.mark.parametrize("L", [1.06, 1.1, 1.3])
def test_short_branches(L):
    spec = reference_omega_L(L)
    mesh = triangulate(spec, 0.05)
    assert _min_angle(mesh) >= MIN_ANGLE_DEG
    assert mesh.signed_areas().sum() == pytest.approx(spec.area(), rel=1e-12)
