import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magnetocontrol.manufactured import CONTROL, DOMAIN
from magnetocontrol.mesh import (AlignmentError, Box, bisect, build_structured_cube,
                                 locate_cells, uniform_refine)

from conftest import UNIT, reference_tet


def shape_signature(mesh):
    """Sorted squared edge lengths over the largest one, rounded: a similarity class key."""
    p = mesh.vertices[mesh.cells]
    i, j = np.triu_indices(4, 1)
    d = ((p[:, i] - p[:, j]) ** 2).sum(axis=2)
    d = np.sort(d / d.max(axis=1, keepdims=True), axis=1)
    return {tuple(np.round(r, 9)) for r in d}


def test_structured_counts():
    m = build_structured_cube(UNIT, 2)
    assert m.n_vertices == 27 and m.n_cells == 48
    # Euler characteristic of a ball: V - E + F - T = 1
    assert m.n_vertices - m.n_edges + m.n_faces - m.n_cells == 1
    assert m.volumes.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(m.volumes > 0)
    assert m.is_conforming()


def test_omega_tags_and_volume(omega_mesh6):
    m = omega_mesh6
    assert m.n_cells == 6 * 216
    om = m.volumes[m.in_omega].sum()
    assert om == pytest.approx(CONTROL.volume, rel=1e-13)
    assert m.volumes.sum() == pytest.approx(DOMAIN.volume, rel=1e-13)
    assert np.all(CONTROL.contains(m.centroids[m.in_omega]))
    assert not np.any(CONTROL.contains(m.centroids[~m.in_omega]))


def test_misaligned_control_raises():
    with pytest.raises(AlignmentError):
        build_structured_cube(DOMAIN, 4, control=CONTROL)
    with pytest.raises(AlignmentError):
        build_structured_cube(UNIT, 2, control=Box((0.0, 0.0, 0.0), (1.5, 1.0, 1.0)))


def test_zero_subdivisions_raises():
    with pytest.raises(ValueError):
        build_structured_cube(UNIT, 0)


def test_bisect_single_cell_of_reference_tet():
    m = bisect(reference_tet(), [0])
    assert m.n_cells == 2 and m.n_vertices == 5
    assert np.allclose(np.sort(m.volumes), [1 / 12, 1 / 12])
    # refinement edge of a level-0 Kuhn-ordered cell is (x0, x3)
    assert np.allclose(m.vertices[4], [0.0, 0.0, 0.5])
    assert np.all(m.levels == 1)
    assert np.all(m.ancestor == 0)


def test_bisect_one_cell_keeps_conformity(unit_cube):
    m = bisect(unit_cube, [2])
    assert m.is_conforming()
    assert m.n_cells > unit_cube.n_cells
    assert m.volumes.sum() == pytest.approx(1.0, abs=1e-14)


def test_uniform_refine_halves_diameters(unit_cube):
    fine = uniform_refine(unit_cube)
    assert fine.n_cells == 48
    assert fine.diameters.max() == pytest.approx(0.5 * unit_cube.diameters.max())
    ref = build_structured_cube(UNIT, 2)
    assert shape_signature(fine) == shape_signature(ref)
    assert fine.is_conforming()


def test_mark_all_equals_one_sweep(unit_cube):
    m = bisect(unit_cube, np.arange(unit_cube.n_cells))
    assert m.n_cells == 2 * unit_cube.n_cells
    assert m.is_conforming()
    assert abs(m.volumes.sum() - 1.0) <= 1e-12


KUHN = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [1, 1, 1]])


@pytest.mark.parametrize("verts,n_classes", [(None, 35), (KUHN, 3)], ids=["reference", "kuhn"])
def test_quality_bounded_over_ten_sweeps(verts, n_classes):
    """Bisection produces finitely many similarity classes, so quality cannot degrade."""
    m = reference_tet() if verts is None else reference_tet().__class__(verts, [[0, 1, 2, 3]])
    seen, sizes, qmin = set(), [], np.inf
    for gen in range(11):
        seen |= shape_signature(m)
        sizes.append(len(seen))
        qmin = min(qmin, m.quality().min())
        if gen < 10:
            m = bisect(m, np.arange(m.n_cells))
    assert m.n_cells == 1024
    assert sizes[-1] == n_classes
    # no new class in the last three generations (one full bisection cycle)
    assert sizes[-4] == sizes[-1]
    # the floor is attained by a class, not by drift
    assert qmin > 0.03


def test_genealogy_children_inside_parent(unit_cube):
    m = bisect(unit_cube, [0, 5])
    for child in range(m.n_cells):
        pts = m.map_points(np.full((1, 4), 0.25))[child]
        assert unit_cube.contains_points(np.array([m.ancestor[child]]), pts).all()
    vols = np.bincount(m.ancestor, weights=m.volumes, minlength=unit_cube.n_cells)
    assert np.allclose(vols, unit_cube.volumes)


def test_uniform_genealogy_composes(unit_cube):
    fine = uniform_refine(unit_cube)
    vols = np.bincount(fine.ancestor, weights=fine.volumes, minlength=unit_cube.n_cells)
    assert np.allclose(vols, unit_cube.volumes)


def test_tags_inherited(omega_mesh3):
    marked = np.flatnonzero(omega_mesh3.in_omega)[:3]
    m = bisect(omega_mesh3, marked)
    assert np.array_equal(m.in_omega, omega_mesh3.in_omega[m.ancestor])
    assert np.array_equal(m.mu, omega_mesh3.mu[m.ancestor])
    assert m.volumes[m.in_omega].sum() == pytest.approx(CONTROL.volume, rel=1e-13)


def test_bisect_is_deterministic(omega_mesh3):
    a = bisect(omega_mesh3, [0, 17, 40])
    b = bisect(omega_mesh3, [40, 0, 17])
    assert np.array_equal(a.cells, b.cells)
    assert np.array_equal(a.vertices, b.vertices)


def test_bad_marked_index(unit_cube):
    with pytest.raises(IndexError):
        bisect(unit_cube, [6])


def test_locate_cells(unit_cube):
    pts = np.array([[0.1, 0.2, 0.3], [0.9, 0.5, 0.2], [2.0, 0.0, 0.0]])
    ids = locate_cells(unit_cube, pts)
    assert ids[2] == -1
    for i in (0, 1):
        assert unit_cube.contains_points(np.array([ids[i]]), pts[i:i + 1]).all()


def test_submesh_maps(omega_mesh3):
    sub, maps = omega_mesh3.submesh()
    assert np.array_equal(maps.cell_map, np.flatnonzero(omega_mesh3.in_omega))
    assert np.array_equal(maps.vertex_map[sub.cells], omega_mesh3.cells[maps.cell_map])
    assert np.allclose(sub.vertices, omega_mesh3.vertices[maps.vertex_map])


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 47), min_size=1, max_size=10),
       st.lists(st.floats(0.0, 1.0), min_size=1, max_size=10))
def test_random_bisection_properties(first, second):
    m = bisect(build_structured_cube(UNIT, 2), first)
    pick = np.unique((np.array(second) * (m.n_cells - 1)).astype(int))
    m2 = bisect(m, pick)
    assert m2.is_conforming()
    assert np.all(m2.volumes > 0)
    assert m2.volumes.sum() == pytest.approx(1.0, abs=1e-13)
    assert m2.quality().min() > 0.05
    assert np.allclose(np.bincount(m2.ancestor, weights=m2.volumes, minlength=m.n_cells),
                       m.volumes)
