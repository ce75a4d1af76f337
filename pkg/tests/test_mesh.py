import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vemcip.mesh import (
    BOUNDARY,
    MeshError,
    build_topology,
    generate_octag,
    generate_voronoi,
    load_mesh,
    quality_report,
    save_mesh,
    voronoi_from_seeds,
)


def euler_ok(mesh):
    nv = len(np.unique(np.concatenate(mesh.cells)))
    return nv - mesh.n_facets + mesh.n_cells == 1


def boundary_is_unit_square(mesh):
    L = mesh.facet_arrays["length"][mesh.boundary_facets]
    if abs(L.sum() - 4.0) > 1e-12:
        return False
    for f in mesh.boundary_facets:
        a, b = mesh.facet_endpoints(f)
        if not any(abs(a[i] - s) < 1e-12 and abs(b[i] - s) < 1e-12 for i in (0, 1) for s in (0, 1)):
            return False
    return True


def test_octag_single_square():
    m = generate_octag(1, 0.0)
    assert m.n_cells == 2
    assert all(len(c) == 8 for c in m.cells)
    assert m.areas.sum() == pytest.approx(1.0, abs=1e-15)
    assert len(m.boundary_facets) == 8 and len(m.interior_facets) == 4
    assert euler_ok(m)


def test_octag_n4_quality(octag4):
    assert octag4.n_cells == 32
    assert np.all(octag4.areas > 0)
    q = quality_report(octag4, 0.05)
    assert q.violations == []
    assert min(q.min_facet_ratio, q.min_inradius_ratio, q.min_diameter_ratio) > 0


def test_octag_n2_topology():
    m = generate_octag(2, 0.0)
    counts = np.zeros(m.n_facets, int)
    for cf in m.cell_facets:
        counts[cf] += 1
    assert counts.max() <= 2
    assert np.all((counts == 1) == (m.facet_arrays["neighbor"] == BOUNDARY))
    assert boundary_is_unit_square(m)


def test_octag_deterministic():
    a, b = generate_octag(3, 0.2, 11), generate_octag(3, 0.2, 11)
    np.testing.assert_array_equal(a.vertices, b.vertices)
    np.testing.assert_array_equal(generate_octag(3, 0.0, 1).vertices, generate_octag(3, 0.0, 2).vertices)


def test_octag_rejects_bad_arguments():
    with pytest.raises(ValueError):
        generate_octag(0)
    with pytest.raises(ValueError):
        generate_octag(2, 0.3)


def test_voronoi_symmetric_seeds_give_squares():
    m = voronoi_from_seeds([[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]])
    assert m.n_cells == 4
    np.testing.assert_allclose(m.areas, 0.25, atol=1e-14)
    assert all(len(c) == 4 for c in m.cells)
    q = quality_report(m)
    assert q.min_diameter_ratio == pytest.approx(1.0)
    assert q.min_facet_ratio == pytest.approx(1 / np.sqrt(2))


def test_voronoi_single_cell_is_unit_square():
    m = generate_voronoi(1, 0, 0)
    assert m.n_cells == 1 and len(m.cells[0]) == 4
    assert m.areas[0] == pytest.approx(1.0)


def test_voronoi_1024():
    m = generate_voronoi(1024, 3, 1)
    assert m.n_cells == 1024
    assert abs(m.areas.sum() - 1.0) < 1e-12
    assert euler_ok(m) and boundary_is_unit_square(m)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 120), st.integers(0, 3), st.integers(0, 10_000))
def test_voronoi_invariants(n, lloyd, seed):
    m = generate_voronoi(n, lloyd, seed)
    assert m.n_cells == n
    assert abs(m.areas.sum() - 1.0) < 1e-12
    assert np.all(m.areas > 0)
    assert euler_ok(m) and boundary_is_unit_square(m)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 6), st.floats(0.0, 0.29), st.integers(0, 10_000))
def test_octag_invariants(n, perturb, seed):
    m = generate_octag(n, perturb, seed)
    assert m.n_cells == 2 * n * n
    assert all(len(c) == 8 for c in m.cells)
    assert abs(m.areas.sum() - 1.0) < 1e-12
    assert euler_ok(m) and boundary_is_unit_square(m)


def test_normals_are_unit_and_outward_from_owner(voro64):
    m = voro64
    for f, r in enumerate(m.facets):
        assert np.linalg.norm(r.normal) == pytest.approx(1.0)
        assert r.normal @ (r.midpoint - m.centroids[r.owner]) > 0
        if not r.is_boundary:
            assert r.normal @ (r.midpoint - m.centroids[r.neighbor]) < 0


def test_build_topology_two_triangles():
    m = build_topology([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])
    assert m.n_facets == 5 and len(m.interior_facets) == 1
    f = m.interior_facets[0]
    assert set(m.facets[f].vertices) == {0, 2}
    assert m.facets[f].owner == 0 and m.facets[f].neighbor == 1


def test_build_topology_errors():
    V = [[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]]
    with pytest.raises(MeshError, match="counterclockwise"):
        build_topology(V, [[0, 3, 2, 1]])
    with pytest.raises(MeshError, match="out of range"):
        build_topology(V, [[0, 1, 9]])
    with pytest.raises(MeshError, match="more than two"):
        build_topology([[0, 0], [1, 0], [0.5, 1], [0.5, -1], [0.5, -2]], [[0, 1, 2], [1, 0, 3], [1, 0, 4]], box=None)
    with pytest.raises(MeshError, match="same direction"):
        build_topology([[0, 0], [1, 0], [0.5, 1], [0.5, 2]], [[0, 1, 2], [0, 1, 3]], box=None)
    # hanging node: vertex 6 splits the shared side in the right cell only
    V2 = [[0, 0], [0.5, 0], [1, 0], [1, 1], [0.5, 1], [0, 1], [0.5, 0.5]]
    with pytest.raises(MeshError, match="T-junction"):
        build_topology(V2, [[0, 1, 4, 5], [1, 2, 3, 4, 6]])


def test_quality_square(square):
    q = quality_report(square)
    assert q.min_facet_ratio == pytest.approx(1 / np.sqrt(2))
    assert q.min_inradius_ratio == pytest.approx(0.5 / np.sqrt(2))
    assert q.violations == []


def test_save_load_roundtrip(tmp_path, voro64):
    p = tmp_path / "m.json"
    save_mesh(voro64, p)
    m = load_mesh(p)
    np.testing.assert_array_equal(m.vertices, voro64.vertices)
    assert len(m.interior_facets) == len(voro64.interior_facets)
    assert [list(c) for c in m.cells] == [list(c) for c in voro64.cells]


def test_load_reports_bad_index(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"vertices": [[0, 0], [1, 0], [1, 1]], "cells": [[0, 1, 99]]}))
    with pytest.raises(MeshError, match="vertex index 99 out of range"):
        load_mesh(p)
    p.write_text('{"vertices": [[0, 0],\n [1, 0]],\n "cells": [[0, 1,}')
    with pytest.raises(MeshError, match="line 3"):
        load_mesh(p)
