"""Local nonconforming virtual element spaces: DoF layout, projectors, interpolants.

Local DoFs of a cell are ordered facet-major in loop order (moments l = 0..k-1 of
each facet), then interior moments in graded-lex order. Facet moments use the
facet's intrinsic coordinate t = (s - s_e)/h_e taken from its stored endpoint
order, so both incident cells see the same moments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .mesh import PolyMesh
from .polybasis import (
    ScaledMonomialBasis2D,
    dim_poly,
    eval_basis,
    eval_gradients,
    facet_quadrature,
    mass_matrix_reference_1d,
    polygon_quadrature,
)


@dataclass(frozen=True)
class DofLayout:
    k: int
    n_facets: int

    @property
    def per_facet(self) -> int:
        return self.k

    @property
    def n_interior(self) -> int:
        return self.k * (self.k - 1) // 2

    @property
    def size(self) -> int:
        return self.k * self.n_facets + self.n_interior

    def facet_slice(self, j: int) -> slice:
        return slice(j * self.k, (j + 1) * self.k)

    @property
    def interior_slice(self) -> slice:
        return slice(self.k * self.n_facets, self.size)


@dataclass(frozen=True, eq=False)
class LocalEdge:
    facet: int
    normal: np.ndarray  # outward from this cell
    length: float
    points: np.ndarray
    weights: np.ndarray
    trace: np.ndarray  # (nq, k): edge DoFs -> values of the edge L2 projection at points
    is_boundary: bool


@dataclass(frozen=True, eq=False)
class LocalSpace:
    """Projector matrices mapping local DoF vectors to monomial coefficients.

    pi_nabla, pi0: (dim P_k, N_E); grad_x, grad_y: (dim P_{k-1}, N_E).
    dof_of_monomials: (N_E, dim P_k), the DoFs of every m_a.
    """

    cell: int
    k: int
    layout: DofLayout
    basis: ScaledMonomialBasis2D
    area: float
    diameter: float
    mass: np.ndarray
    dof_of_monomials: np.ndarray
    pi_nabla: np.ndarray
    pi0: np.ndarray
    grad_x: np.ndarray
    grad_y: np.ndarray
    qpoints: np.ndarray
    qweights: np.ndarray
    qvalues: np.ndarray  # basis values at qpoints
    qgrads: np.ndarray  # basis gradients at qpoints
    edges: tuple[LocalEdge, ...]

    @property
    def ndofs(self) -> int:
        return self.layout.size

    def edge_projection(self, j: int) -> np.ndarray:
        """(k, N_E) map from local DoFs to 1D scaled-monomial coefficients on edge j."""
        k = self.k
        P = np.zeros((k, self.ndofs))
        P[:, self.layout.facet_slice(j)] = np.linalg.inv(mass_matrix_reference_1d(k))
        return P

    def edge_trace(self, j: int) -> np.ndarray:
        """(nq, N_E) values of the edge projection at the edge quadrature points."""
        e = self.edges[j]
        T = np.zeros((len(e.weights), self.ndofs))
        T[:, self.layout.facet_slice(j)] = e.trace
        return T

    def pi0_values(self, points) -> np.ndarray:
        """(npoints, N_E) values of the L2 projection at points."""
        return eval_basis(self.basis, points) @ self.pi0

    def pi0_gradients(self, points) -> np.ndarray:
        """(npoints, 2, N_E) gradients of the L2 projection at points."""
        G = eval_gradients(self.basis, points)
        return np.einsum("qad,an->qdn", G, self.pi0)

    def grad_projection_values(self, points) -> np.ndarray:
        """(npoints, 2, N_E) values of the projected gradient at points."""
        M = eval_basis(ScaledMonomialBasis2D(self.k - 1, self.basis.center, self.basis.diameter), points)
        return np.stack([M @ self.grad_x, M @ self.grad_y], axis=1)

    def residual_nabla(self) -> np.ndarray:
        """DoF map of (I - Pi_nabla)."""
        return np.eye(self.ndofs) - self.dof_of_monomials @ self.pi_nabla

    def residual_pi0(self) -> np.ndarray:
        """DoF map of (I - Pi0_k)."""
        return np.eye(self.ndofs) - self.dof_of_monomials @ self.pi0


def facet_coordinate(mesh: PolyMesh, f: int, points) -> np.ndarray:
    a, b = mesh.facet_endpoints(f)
    L = mesh.facets[f].length
    return (np.asarray(points) - a) @ ((b - a) / L) / L - 0.5


def build_local_space(mesh: PolyMesh, c: int, k: int, exactness: int | None = None) -> LocalSpace:
    """Construct all computable projectors of cell c for order k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q_el = 2 * k + 2 if exactness is None else exactness
    poly = mesh.cell_coords(c)
    area = float(mesh.areas[c])
    hE = float(mesh.diameters[c])
    basis = ScaledMonomialBasis2D(k, mesh.centroids[c], hE)
    nk, nk1, nk2 = dim_poly(k), dim_poly(k - 1), dim_poly(k - 2)
    fids = mesh.cell_facets[c]
    layout = DofLayout(k, len(fids))
    N = layout.size

    rule = polygon_quadrature(poly, q_el)
    Mq = eval_basis(basis, rule.points)
    Gq = eval_gradients(basis, rule.points)
    H = (Mq * rule.weights[:, None]).T @ Mq
    H = 0.5 * (H + H.T)

    D = np.zeros((N, nk))
    B = np.zeros((nk, N))
    Rx = np.zeros((nk1, N))
    Ry = np.zeros((nk1, N))
    edges = []
    Tx, Ty = basis.derivative_matrix(0), basis.derivative_matrix(1)
    for j, f in enumerate(fids):
        rec = mesh.facets[f]
        a, b = mesh.facet_endpoints(f)
        normal = rec.normal if rec.owner == c else -rec.normal
        fr = facet_quadrature(a, b, q_el)
        Tq = fr.local[:, None] ** np.arange(k)
        trace = Tq @ np.linalg.inv(mass_matrix_reference_1d(k))
        sl = layout.facet_slice(j)
        mq = eval_basis(basis, fr.points)
        D[sl, :] = (Tq * fr.weights[:, None]).T @ mq / rec.length
        gn = eval_gradients(basis, fr.points) @ normal  # (nq, nk)
        # int_e g v = sum_q w g(x_q) (edge projection of v)(x_q) for g in P_{k-1}(e)
        B[:, sl] += (gn * fr.weights[:, None]).T @ trace
        mq1 = mq[:, :nk1] * fr.weights[:, None]
        Rx[:, sl] += normal[0] * mq1.T @ trace
        Ry[:, sl] += normal[1] * mq1.T @ trace
        edges.append(LocalEdge(int(f), normal, rec.length, fr.points, fr.weights, trace, rec.is_boundary))

    isl = layout.interior_slice
    if nk2:
        D[isl, :] = H[:nk2, :] / area
        B[:, isl] -= area * basis.laplacian_matrix()
        Rx[:, isl] -= area * Tx[:nk1, :nk2]
        Ry[:, isl] -= area * Ty[:nk1, :nk2]
    # constant mode fixed by int_{dE} (v - Pi_nabla v) = 0
    B[0, :] = 0.0
    for j, e in enumerate(edges):
        B[0, layout.facet_slice(j).start] = e.length

    G = B @ D
    pi_nabla = _solve(G, B, c)
    # moments of degree k-1 and k come from pi_nabla, so only the low rows need correcting
    pi0 = pi_nabla.copy()
    if nk2:
        corr = np.zeros((nk, N))
        corr[:nk2] = -(H[:nk2] @ pi_nabla)
        corr[:nk2, isl] += area * np.eye(nk2)
        pi0 += _solve(H, corr, c)
    H1 = H[:nk1, :nk1]
    grad_x = _solve(H1, Rx, c)
    grad_y = _solve(H1, Ry, c)
    return LocalSpace(
        cell=c, k=k, layout=layout, basis=basis, area=area, diameter=hE, mass=H,
        dof_of_monomials=D, pi_nabla=pi_nabla, pi0=pi0, grad_x=grad_x, grad_y=grad_y,
        qpoints=rule.points, qweights=rule.weights, qvalues=Mq, qgrads=Gq, edges=tuple(edges),
    )


class ElementGeometryError(np.linalg.LinAlgError):
    pass


def _solve(A, B, c):
    try:
        lu = sla.lu_factor(A, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as err:
        raise ElementGeometryError(f"cell {c}: singular local projector system") from err
    if np.any(np.abs(np.diag(lu[0])) < 1e-14 * np.abs(lu[0]).max()):
        raise ElementGeometryError(f"cell {c}: singular local projector system")
    return sla.lu_solve(lu, B)


def build_local_spaces(mesh: PolyMesh, k: int, threads: int = 1) -> list[LocalSpace]:
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(lambda c: build_local_space(mesh, c, k), range(mesh.n_cells)))
    return [build_local_space(mesh, c, k) for c in range(mesh.n_cells)]


# ---------------------------------------------------------------- global DoFs


@dataclass(frozen=True, eq=False)
class GlobalDofMap:
    k: int
    n_facets: int
    n_cells: int
    local_to_global: tuple[np.ndarray, ...]

    @property
    def n_interior(self) -> int:
        return self.k * (self.k - 1) // 2

    @property
    def size(self) -> int:
        return self.k * self.n_facets + self.n_interior * self.n_cells

    def facet_dofs(self, f: int) -> np.ndarray:
        return np.arange(f * self.k, (f + 1) * self.k)

    def interior_dofs(self, c: int) -> np.ndarray:
        start = self.k * self.n_facets + c * self.n_interior
        return np.arange(start, start + self.n_interior)


def build_dof_map(mesh: PolyMesh, k: int) -> GlobalDofMap:
    """Facet DoFs first (facet major, l minor), then interior DoFs (cell major)."""
    maps = []
    nint = k * (k - 1) // 2
    base = k * mesh.n_facets
    for c in range(mesh.n_cells):
        fids = mesh.cell_facets[c]
        fd = (fids[:, None] * k + np.arange(k)).ravel()
        maps.append(np.concatenate([fd, base + c * nint + np.arange(nint)]))
    return GlobalDofMap(k, mesh.n_facets, mesh.n_cells, tuple(maps))


# ---------------------------------------------------------------- interpolants


def _facet_moments(mesh: PolyMesh, f: int, k: int, sampler, exactness: int) -> np.ndarray:
    a, b = mesh.facet_endpoints(f)
    fr = facet_quadrature(a, b, exactness)
    t = fr.local
    vals = np.asarray(sampler(fr.points), float)
    return (t[:, None] ** np.arange(k) * (fr.weights * vals)[:, None]).sum(axis=0) / mesh.facets[f].length


def interpolate(sampler, mesh: PolyMesh, k: int, exactness: int | None = None) -> np.ndarray:
    """Global DoF vector of the moment interpolant of a smooth function.

    ``sampler`` maps an (n, 2) array of points to n values.
    """
    q = 2 * k + 6 if exactness is None else exactness
    dmap = build_dof_map(mesh, k)
    u = np.zeros(dmap.size)
    for f in range(mesh.n_facets):
        u[dmap.facet_dofs(f)] = _facet_moments(mesh, f, k, sampler, q)
    nint = dmap.n_interior
    if nint:
        for c in range(mesh.n_cells):
            poly = mesh.cell_coords(c)
            rule = polygon_quadrature(poly, q)
            basis = ScaledMonomialBasis2D(k - 2, mesh.centroids[c], mesh.diameters[c])
            vals = np.asarray(sampler(rule.points), float)
            u[dmap.interior_dofs(c)] = eval_basis(basis, rule.points).T @ (rule.weights * vals) / mesh.areas[c]
    return u


def polynomial_sampler(space: LocalSpace, coeffs):
    coeffs = np.asarray(coeffs, float)
    return lambda pts: eval_basis(space.basis, pts) @ coeffs


def oswald_interpolant(coeffs, mesh: PolyMesh, k: int, spaces=None) -> np.ndarray:
    """Average the one-sided facet moments of a broken polynomial.

    ``coeffs[c]`` holds the monomial coefficients of p on cell c in that cell's
    scaled basis (centroid, diameter).
    """
    dmap = build_dof_map(mesh, k)
    u = np.zeros(dmap.size)
    bases = [ScaledMonomialBasis2D(k, mesh.centroids[c], mesh.diameters[c]) for c in range(mesh.n_cells)]
    q = 2 * k
    for f, rec in enumerate(mesh.facets):
        sides = [rec.owner] if rec.is_boundary else [rec.owner, rec.neighbor]
        mom = np.zeros(k)
        for c in sides:
            basis, cc = bases[c], np.asarray(coeffs[c], float)
            mom += _facet_moments(mesh, f, k, lambda p, b=basis, cc=cc: eval_basis(b, p) @ cc, q)
        u[dmap.facet_dofs(f)] = mom / len(sides)
    nint = dmap.n_interior
    if nint:
        for c in range(mesh.n_cells):
            poly = mesh.cell_coords(c)
            rule = polygon_quadrature(poly, 2 * k)
            M = eval_basis(bases[c], rule.points)
            vals = M @ np.asarray(coeffs[c], float)
            u[dmap.interior_dofs(c)] = M[:, :nint].T @ (rule.weights * vals) / mesh.areas[c]
    return u
