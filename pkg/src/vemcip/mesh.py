"""Polygonal meshes of the unit square: topology, the octag and voro families, quality, JSON I/O."""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import Voronoi, cKDTree

from .polybasis import diameter, polygon_centroid, signed_area

BOUNDARY = -1


class MeshError(ValueError):
    """Malformed mesh: bad topology, inverted cells, or unreadable file."""


@dataclass(frozen=True)
class FacetRecord:
    vertices: tuple[int, int]
    owner: int
    neighbor: int  # BOUNDARY for facets on the domain boundary
    normal: np.ndarray  # unit, outward from owner
    length: float
    midpoint: np.ndarray

    @property
    def is_boundary(self) -> bool:
        return self.neighbor == BOUNDARY


@dataclass(frozen=True, eq=False)
class PolyMesh:
    """Immutable polygonal mesh. Facet endpoints follow the owner's ccw loop."""

    vertices: np.ndarray
    cells: tuple[np.ndarray, ...]
    facets: tuple[FacetRecord, ...]
    cell_facets: tuple[np.ndarray, ...]  # facet ids in loop order: edge j = (v_j, v_{j+1})
    areas: np.ndarray
    centroids: np.ndarray
    diameters: np.ndarray
    name: str = field(default="mesh")

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    @cached_property
    def facet_arrays(self) -> dict[str, np.ndarray]:
        f = self.facets
        return {
            "vertices": np.array([r.vertices for r in f], dtype=int).reshape(-1, 2),
            "owner": np.array([r.owner for r in f], dtype=int),
            "neighbor": np.array([r.neighbor for r in f], dtype=int),
            "normal": np.array([r.normal for r in f]).reshape(-1, 2),
            "length": np.array([r.length for r in f]),
        }

    @cached_property
    def interior_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_arrays["neighbor"] != BOUNDARY)

    @cached_property
    def boundary_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_arrays["neighbor"] == BOUNDARY)

    def cell_coords(self, c: int) -> np.ndarray:
        return self.vertices[self.cells[c]]

    def facet_endpoints(self, f: int) -> tuple[np.ndarray, np.ndarray]:
        i, j = self.facets[f].vertices
        return self.vertices[i], self.vertices[j]

    def is_boundary_cell(self, c: int) -> bool:
        nb = self.facet_arrays["neighbor"][self.cell_facets[c]]
        return bool(np.any(nb == BOUNDARY))


def build_topology(vertices, cells, name: str = "mesh", box: tuple[float, float] | None = (0.0, 1.0)) -> PolyMesh:
    """Resolve facets by matching unordered endpoint pairs between cells.

    Boundary facets must lie on the sides of the square ``box``; pass None to
    skip that check for meshes of other domains.
    """
    V = np.asarray(vertices, dtype=float).reshape(-1, 2)
    loops = []
    for c, loop in enumerate(cells):
        loop = np.asarray(loop, dtype=int)
        if loop.ndim != 1 or len(loop) < 3:
            raise MeshError(f"cell {c} has fewer than 3 vertices")
        if loop.min() < 0 or loop.max() >= len(V):
            raise MeshError(f"cell {c} references vertex index out of range")
        if len(set(loop.tolist())) != len(loop):
            raise MeshError(f"cell {c} repeats a vertex")
        if signed_area(V[loop]) <= 0:
            raise MeshError(f"cell {c} is not counterclockwise or has zero area")
        loops.append(loop)

    seen: dict[tuple[int, int], int] = {}
    endpoints, owner, neighbor = [], [], []
    cell_facets = []
    for c, loop in enumerate(loops):
        ids = np.empty(len(loop), dtype=int)
        for j in range(len(loop)):
            a, b = int(loop[j]), int(loop[(j + 1) % len(loop)])
            key = (min(a, b), max(a, b))
            f = seen.get(key)
            if f is None:
                f = len(endpoints)
                seen[key] = f
                endpoints.append((a, b))
                owner.append(c)
                neighbor.append(BOUNDARY)
            else:
                if neighbor[f] != BOUNDARY:
                    raise MeshError(f"facet {key} is shared by more than two cells")
                if endpoints[f] != (b, a):
                    raise MeshError(f"cells {owner[f]} and {c} traverse facet {key} in the same direction")
                neighbor[f] = c
            ids[j] = f
        cell_facets.append(ids)

    facets = []
    for (a, b), o, nb in zip(endpoints, owner, neighbor):
        d = V[b] - V[a]
        length = float(np.hypot(*d))
        if length == 0.0:
            raise MeshError(f"facet ({a}, {b}) has zero length")
        facets.append(FacetRecord((a, b), o, nb, np.array([d[1], -d[0]]) / length, length, 0.5 * (V[a] + V[b])))

    # an interior facet seen from one side only would show up as a boundary facet off the square
    tol = 1e-10
    for r in facets:
        if box is not None and r.is_boundary:
            p, q = V[r.vertices[0]], V[r.vertices[1]]
            on_side = any(abs(p[i] - s) < tol and abs(q[i] - s) < tol for i in (0, 1) for s in box)
            if not on_side:
                raise MeshError(f"unmatched facet {r.vertices} inside the domain (T-junction or hole)")

    coords = [V[loop] for loop in loops]
    return PolyMesh(
        vertices=V,
        cells=tuple(loops),
        facets=tuple(facets),
        cell_facets=tuple(cell_facets),
        areas=np.array([signed_area(p) for p in coords]),
        centroids=np.array([polygon_centroid(p) for p in coords]).reshape(-1, 2),
        diameters=np.array([diameter(p) for p in coords]),
        name=name,
    )


def _is_simple(poly: np.ndarray) -> bool:
    if signed_area(poly) <= 0:
        return False
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            c, d = poly[j], poly[(j + 1) % n]
            if _segments_cross(a, b, c, d):
                return False
    return True


def _segments_cross(a, b, c, d) -> bool:
    def orient(p, q, r):
        return np.sign((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))

    return orient(a, b, c) * orient(a, b, d) < 0 and orient(c, d, a) * orient(c, d, b) < 0


def generate_octag(n: int, perturb: float = 0.1, seed: int = 0) -> PolyMesh:
    """Perturbed structured triangles, hypotenuses split, then a midpoint on every edge.

    Nodes present before the final midpoint insertion (grid nodes and hypotenuse
    split points) are displaced by a uniform offset in a disc of radius
    ``perturb / n``; boundary nodes slide along their side, corners stay fixed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= perturb < 0.3:
        raise ValueError("perturb must lie in [0, 0.3)")
    rng = np.random.default_rng(seed)

    def gid(i, j):
        return i * (n + 1) + j

    grid = np.array([(i / n, j / n) for i in range(n + 1) for j in range(n + 1)])
    hyp = np.array([((i + 0.5) / n, (j + 0.5) / n) for i in range(n) for j in range(n)])
    base = np.vstack([grid, hyp])
    nodes_per_square = []
    for i in range(n):
        for j in range(n):
            m = len(grid) + i * n + j
            a, b, c, d = gid(i, j), gid(i + 1, j), gid(i + 1, j + 1), gid(i, j + 1)
            nodes_per_square.append(((a, b, c, m), (a, m, c, d)))
    quads = [q for pair in nodes_per_square for q in pair]

    on_x = np.isclose(base[:, 0], 0) | np.isclose(base[:, 0], 1)
    on_y = np.isclose(base[:, 1], 0) | np.isclose(base[:, 1], 1)
    for _ in range(100):
        if perturb == 0:
            pts = base.copy()
        else:
            r = perturb / n * np.sqrt(rng.uniform(size=len(base)))
            th = rng.uniform(0, 2 * np.pi, size=len(base))
            off = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
            off[on_x, 0] = 0.0
            off[on_y, 1] = 0.0
            pts = base + off
        if all(_is_simple(pts[list(q)]) for q in quads):
            break
    else:
        raise MeshError("could not produce a valid perturbed octag mesh in 100 attempts")

    # one midpoint per (undirected) edge of the quadrilateral mesh
    verts = [tuple(p) for p in pts]
    mid: dict[tuple[int, int], int] = {}
    cells = []
    for q in quads:
        loop = []
        for t in range(4):
            a, b = q[t], q[(t + 1) % 4]
            key = (min(a, b), max(a, b))
            if key not in mid:
                mid[key] = len(verts)
                verts.append(tuple(0.5 * (pts[a] + pts[b])))
            loop += [a, mid[key]]
        cells.append(loop)
    return build_topology(np.array(verts), cells, name=f"octag-{n}")


def _reflect(points: np.ndarray) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    return np.vstack([
        points,
        np.column_stack([-x, y]),
        np.column_stack([2 - x, y]),
        np.column_stack([x, -y]),
        np.column_stack([x, 2 - y]),
    ])


def _clipped_voronoi(seeds: np.ndarray):
    n = len(seeds)
    vor = Voronoi(_reflect(seeds))
    V = vor.vertices.copy()
    V[np.abs(V) < 1e-12] = 0.0
    V[np.abs(V - 1) < 1e-12] = 1.0
    loops = []
    for i in range(n):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) < 3:
            raise MeshError("unbounded Voronoi region after reflection")
        loops.append(np.array(region, dtype=int))
    return V, loops


def _lloyd_step(seeds: np.ndarray) -> np.ndarray:
    V, loops = _clipped_voronoi(seeds)
    return np.array([polygon_centroid(_ccw(V[l])) for l in loops])


def _ccw(poly):
    return poly if signed_area(poly) > 0 else poly[::-1]


def voronoi_from_seeds(seeds, lloyd_iters: int = 0, name: str = "voro") -> PolyMesh:
    seeds = np.asarray(seeds, float).reshape(-1, 2)
    if len(seeds) == 1:
        return build_topology([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2, 3]], name=name)
    for _ in range(lloyd_iters):
        seeds = _lloyd_step(seeds)
    V, loops = _clipped_voronoi(seeds)

    # merge numerically coincident Voronoi vertices (co-circular seeds)
    used = np.unique(np.concatenate(loops))
    parent = {int(v): int(v) for v in used}

    def find(v):
        while parent[v] != v:
            v = parent[v]
        return v

    for i, j in cKDTree(V[used]).query_pairs(1e-10):
        a, b = find(int(used[i])), find(int(used[j]))
        if a != b:
            parent[max(a, b)] = min(a, b)
    roots = sorted({find(int(v)) for v in used})
    new_index = {r: i for i, r in enumerate(roots)}
    remap = {int(v): new_index[find(int(v))] for v in used}
    verts = V[roots]
    cells = []
    for loop in loops:
        l = [remap[int(v)] for v in loop]
        l = [v for i, v in enumerate(l) if v != l[i - 1]]
        if signed_area(verts[l]) < 0:
            l = l[::-1]
        cells.append(l)
    return build_topology(verts, cells, name=name)


def generate_voronoi(n_cells: int, lloyd_iters: int = 10, seed: int = 0) -> PolyMesh:
    """Voronoi diagram of uniform random seeds clipped to [0,1]^2 by mirroring."""
    if n_cells < 1:
        raise ValueError("n_cells must be >= 1")
    rng = np.random.default_rng(seed)
    seeds = rng.uniform(size=(n_cells, 2))
    for _ in range(100):
        if len(np.unique(np.round(seeds, 12), axis=0)) == n_cells:
            break
        seeds = seeds + rng.uniform(-1e-6, 1e-6, size=seeds.shape)
        seeds = np.clip(seeds, 1e-9, 1 - 1e-9)
    else:
        raise MeshError("duplicate Voronoi seeds persisted after jittering")
    return voronoi_from_seeds(seeds, lloyd_iters, name=f"voro-{n_cells}")


@dataclass
class QualityReport:
    min_facet_ratio: float  # min h_e / h_E
    min_inradius_ratio: float  # min r_E / h_E
    min_diameter_ratio: float  # min h_E / h
    violations: list[tuple[int, str, float]]


def _kernel_radius(poly: np.ndarray, centroid: np.ndarray) -> float:
    # signed distance of candidate centers to every edge line; the min is the largest
    # ball around the candidate that sits in the star-shapedness kernel
    nxt = np.roll(poly, -1, axis=0)
    d = nxt - poly
    L = np.hypot(d[:, 0], d[:, 1])
    nrm = np.column_stack([d[:, 1], -d[:, 0]]) / L[:, None]
    cands = [centroid] + [centroid + t * (v - centroid) for v in poly for t in (0.25, 0.5)]
    best = 0.0
    for p in cands:
        dist = np.min(np.einsum("ij,ij->i", poly - p, nrm))
        best = max(best, dist)
    return best


def quality_report(mesh: PolyMesh, rho: float = 0.05) -> QualityReport:
    """Diagnostic check of the shape-regularity ratios; never raises."""
    h = mesh.h
    lengths = mesh.facet_arrays["length"]
    facet_ratio, in_ratio, viol = [], [], []
    for c in range(mesh.n_cells):
        hE = mesh.diameters[c]
        fr = float(lengths[mesh.cell_facets[c]].min() / hE)
        ir = _kernel_radius(mesh.cell_coords(c), mesh.centroids[c]) / hE
        facet_ratio.append(fr)
        in_ratio.append(ir)
        if fr < rho:
            viol.append((c, "facet", fr))
        if ir < rho:
            viol.append((c, "inradius", ir))
        if hE / h < rho:
            viol.append((c, "diameter", hE / h))
    return QualityReport(
        min_facet_ratio=min(facet_ratio),
        min_inradius_ratio=min(in_ratio),
        min_diameter_ratio=float(mesh.diameters.min() / h),
        violations=viol,
    )


def save_mesh(mesh: PolyMesh, path) -> None:
    data = {
        "vertices": [[float(f"{x:.17g}"), float(f"{y:.17g}")] for x, y in mesh.vertices],
        "cells": [[int(i) for i in c] for c in mesh.cells],
    }
    text = json.dumps(data, indent=None)
    text = text.replace("], [", "],\n [")
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text + "\n")
    os.replace(tmp, path)


def load_mesh(path) -> PolyMesh:
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise MeshError(f"{path}: line {err.lineno}: {err.msg}") from err
    try:
        V = np.array(data["vertices"], dtype=float).reshape(-1, 2)
        cells = data["cells"]
    except (KeyError, TypeError, ValueError) as err:
        raise MeshError(f"{path}: malformed mesh document ({err})") from err
    for c, loop in enumerate(cells):
        bad = [i for i in loop if not 0 <= i < len(V)]
        if bad:
            raise MeshError(f"{path}: cell {c}: vertex index {bad[0]} out of range (0..{len(V) - 1})")
    return build_topology(V, cells, name=os.path.splitext(os.path.basename(path))[0])
